#pragma once

// CSV and SVG exports for evaluation results: cross-validation summaries, confusion
// matrices, AUC tables, agreement summaries, ROC curves and Bland-Altman
// plots. Every writer takes an optional provenance line that is emitted as a
// leading comment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "drugsurv/evaluate.hpp"
#include "drugsurv/text.hpp"

namespace drugsurv {

/// (seed, config hash, format version) stamped into every written artifact.
struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
  int format_version = 1;

  std::string line() const {
    return "drugsurv format_version=" + std::to_string(format_version) + " seed=" + std::to_string(seed) +
           " config_hash=" + config_hash;
  }
};

namespace detail {

inline void csv_comment(std::ostream& out, const std::optional<Provenance>& p) {
  if (p) out << "# " << p->line() << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kCvHeader = "model,accuracy,sd,runtime_s";

inline std::string cv_row(const CvReport& r) {
  return std::string(kind_name(r.kind)) + "," + text::format_fixed(r.mean_accuracy, 4) + "," +
         text::format_fixed(r.sd_accuracy, 4) + "," + text::format_fixed(r.seconds, 3);
}

inline void write_cv_csv(std::ostream& out, const std::vector<CvReport>& reports,
                         const std::optional<Provenance>& p = std::nullopt) {
  detail::csv_comment(out, p);
  out << kCvHeader << '\n';
  for (const auto& r : reports) out << cv_row(r) << '\n';
}

inline void write_folds_csv(std::ostream& out, const CvReport& r,
                            const std::optional<Provenance>& p = std::nullopt) {
  detail::csv_comment(out, p);
  out << "fold,rows,accuracy\n";
  for (std::size_t f = 0; f < r.fold_accuracies.size(); ++f)
    out << f + 1 << ',' << r.folds[f].size() << ',' << text::format_fixed(r.fold_accuracies[f], 4) << '\n';
  out << "micro," << r.truth.size() << ',' << text::format_fixed(r.micro_accuracy, 4) << '\n';
}

/// Rows are predicted labels, columns true labels.
inline void write_confusion_csv(std::ostream& out, const ConfusionMatrix& m,
                                const std::optional<Provenance>& p = std::nullopt) {
  detail::csv_comment(out, p);
  out << "predicted\\true";
  for (auto k : kLabelKeys) out << ',' << k;
  out << '\n';
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    out << kLabelKeys[r];
    for (std::size_t c = 0; c < kNumClasses; ++c) out << ',' << m.counts[r][c];
    out << '\n';
  }
}

/// One curve per discontinuation group; a group without positives or
/// negatives gets an empty curve and "NA".
struct AucTable {
  std::vector<RocGroup> groups;
  std::vector<std::optional<RocCurve>> curves;
};

inline AucTable roc_table(std::span<const OutcomeLabel> truth, const Eigen::MatrixXd& scores) {
  AucTable t;
  for (auto g : kAllGroups) {
    t.groups.push_back(g);
    try {
      t.curves.push_back(roc_auc_ovr(truth, scores, g));
    } catch (const Error& e) {
      if (e.code() != Errc::OneClassOnly) throw;
      t.curves.push_back(std::nullopt);
    }
  }
  return t;
}

inline void write_auc_csv(std::ostream& out, const AucTable& t, const std::optional<Provenance>& p = std::nullopt) {
  detail::csv_comment(out, p);
  out << "group,auc,positives,negatives\n";
  for (std::size_t i = 0; i < t.groups.size(); ++i) {
    out << group_key(t.groups[i]) << ',';
    if (t.curves[i])
      out << text::format_fixed(t.curves[i]->auc, 4) << ',' << t.curves[i]->positives << ','
          << t.curves[i]->negatives << '\n';
    else
      out << "NA,,\n";
  }
}

inline void write_agreement_csv(std::ostream& out, const AgreementReport& r,
                                const std::optional<Provenance>& p = std::nullopt) {
  detail::csv_comment(out, p);
  out << "n,bias,sd,lower,upper,mae,pearson_r\n";
  out << r.differences.size() << ',' << text::format_fixed(r.bias, 4) << ',' << text::format_fixed(r.sd, 4)
      << ',' << text::format_fixed(r.lower, 4) << ',' << text::format_fixed(r.upper, 4) << ','
      << text::format_fixed(r.mae, 4) << ',' << (r.pearson ? text::format_fixed(*r.pearson, 4) : "NA") << '\n';
}

inline void write_agreement_pairs_csv(std::ostream& out, const AgreementReport& r,
                                      const std::optional<Provenance>& p = std::nullopt) {
  detail::csv_comment(out, p);
  out << "mean,difference\n";
  for (std::size_t i = 0; i < r.means.size(); ++i)
    out << text::format_fixed(r.means[i], 4) << ',' << text::format_fixed(r.differences[i], 4) << '\n';
}

// ---------------------------------------------------------------------------
// SVG

namespace detail {

struct PlotFrame {
  double width = 640, height = 480;
  double left = 70, right = 30, top = 40, bottom = 60;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::string num(double v) { return text::format_fixed(v, 2); }

inline void svg_open(std::ostream& out, const PlotFrame& f, const std::string& title,
                     const std::optional<Provenance>& p) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(f.width) << "\" height=\"" << num(f.height)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  if (p) out << "<!-- " << p->line() << " -->\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(f.width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title
      << "</text>\n";
}

inline void svg_axes(std::ostream& out, const PlotFrame& f, const std::string& xlabel, const std::string& ylabel,
                     int ticks = 5) {
  out << "<g stroke=\"black\" fill=\"none\">\n";
  out << "<line x1=\"" << num(f.px(f.x0)) << "\" y1=\"" << num(f.py(f.y0)) << "\" x2=\"" << num(f.px(f.x1))
      << "\" y2=\"" << num(f.py(f.y0)) << "\"/>\n";
  out << "<line x1=\"" << num(f.px(f.x0)) << "\" y1=\"" << num(f.py(f.y0)) << "\" x2=\"" << num(f.px(f.x0))
      << "\" y2=\"" << num(f.py(f.y1)) << "\"/>\n";
  out << "</g>\n<g text-anchor=\"middle\">\n";
  for (int i = 0; i <= ticks; ++i) {
    const double x = f.x0 + (f.x1 - f.x0) * i / ticks;
    const double y = f.y0 + (f.y1 - f.y0) * i / ticks;
    out << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(f.py(f.y0) + 18) << "\">" << num(x) << "</text>\n";
    out << "<text x=\"" << num(f.px(f.x0) - 30) << "\" y=\"" << num(f.py(y) + 4) << "\">" << num(y) << "</text>\n";
  }
  out << "<text x=\"" << num((f.px(f.x0) + f.px(f.x1)) / 2) << "\" y=\"" << num(f.height - 15) << "\">" << xlabel
      << "</text>\n";
  out << "<text transform=\"translate(18," << num((f.py(f.y0) + f.py(f.y1)) / 2) << ") rotate(-90)\">" << ylabel
      << "</text>\n</g>\n";
}

inline constexpr std::array<std::string_view, 4> kCurveColors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

}  // namespace detail

inline void write_roc_svg(std::ostream& out, const AucTable& t, const std::string& title = "ROC (one-vs-rest)",
                          const std::optional<Provenance>& p = std::nullopt) {
  detail::PlotFrame f;
  detail::svg_open(out, f, title, p);
  detail::svg_axes(out, f, "False positive rate", "True positive rate");
  out << "<line x1=\"" << detail::num(f.px(0)) << "\" y1=\"" << detail::num(f.py(0)) << "\" x2=\""
      << detail::num(f.px(1)) << "\" y2=\"" << detail::num(f.py(1))
      << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  for (std::size_t i = 0; i < t.groups.size(); ++i) {
    const auto color = detail::kCurveColors[i % detail::kCurveColors.size()];
    const double ly = f.py(0.05) - 16.0 * static_cast<double>(t.groups.size() - 1 - i);
    out << "<text x=\"" << detail::num(f.px(0.55)) << "\" y=\"" << detail::num(ly) << "\" fill=\"" << color
        << "\">" << group_key(t.groups[i]) << ": "
        << (t.curves[i] ? text::format_fixed(t.curves[i]->auc, 2) : std::string("NA")) << "</text>\n";
    if (!t.curves[i]) continue;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < t.curves[i]->points.size(); ++k) {
      const auto& [x, y] = t.curves[i]->points[k];
      out << (k ? " " : "") << detail::num(f.px(x)) << ',' << detail::num(f.py(y));
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
}

/// Mean vs difference scatter with the bias line and dotted limits of
/// agreement.
inline void write_bland_altman_svg(std::ostream& out, const AgreementReport& r,
                                   const std::string& title = "Bland-Altman: observed vs predicted length",
                                   const std::optional<Provenance>& p = std::nullopt) {
  detail::PlotFrame f;
  const auto [mn, mx] = std::minmax_element(r.means.begin(), r.means.end());
  const auto [dn, dx] = std::minmax_element(r.differences.begin(), r.differences.end());
  f.x0 = std::floor(*mn);
  f.x1 = std::ceil(*mx);
  if (f.x1 <= f.x0) f.x1 = f.x0 + 1;
  f.y0 = std::floor(std::min(*dn, r.lower));
  f.y1 = std::ceil(std::max(*dx, r.upper));
  if (f.y1 <= f.y0) f.y1 = f.y0 + 1;
  detail::svg_open(out, f, title, p);
  detail::svg_axes(out, f, "Mean of observed and predicted (months)", "Observed - predicted (months)");
  out << "<g fill=\"#1f77b4\" fill-opacity=\"0.6\">\n";
  for (std::size_t i = 0; i < r.means.size(); ++i)
    out << "<circle cx=\"" << detail::num(f.px(r.means[i])) << "\" cy=\"" << detail::num(f.py(r.differences[i]))
        << "\" r=\"2.5\"/>\n";
  out << "</g>\n";
  auto hline = [&](double y, const std::string& style, const std::string& label) {
    out << "<line x1=\"" << detail::num(f.px(f.x0)) << "\" y1=\"" << detail::num(f.py(y)) << "\" x2=\""
        << detail::num(f.px(f.x1)) << "\" y2=\"" << detail::num(f.py(y)) << "\" stroke=\"black\" " << style
        << "/>\n";
    out << "<text x=\"" << detail::num(f.px(f.x1) - 4) << "\" y=\"" << detail::num(f.py(y) - 4)
        << "\" text-anchor=\"end\">" << label << "</text>\n";
  };
  hline(r.bias, "", "bias " + text::format_fixed(r.bias, 2));
  hline(r.upper, "stroke-dasharray=\"2 3\"", "+1.96 SD " + text::format_fixed(r.upper, 2));
  hline(r.lower, "stroke-dasharray=\"2 3\"", "-1.96 SD " + text::format_fixed(r.lower, 2));
  out << "</svg>\n";
}

}  // namespace drugsurv
