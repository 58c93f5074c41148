#pragma once

// Reference implementations used only by tests. Each one is deliberately
// naive and shares no code with the library beyond plain data types.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace oracle {

// Cyclic Jacobi rotations on a symmetric matrix. Returns eigenvalues in
// descending order with unit eigenvectors as columns.
inline std::pair<std::vector<double>, std::vector<std::vector<double>>> jacobi_eigen(
    std::vector<std::vector<double>> a, int max_sweeps = 100) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  std::vector<double> values;
  std::vector<std::vector<double>> vectors(n, std::vector<double>(n));
  for (std::size_t c = 0; c < n; ++c) {
    values.push_back(a[order[c]][order[c]]);
    for (std::size_t r = 0; r < n; ++r) vectors[r][c] = v[r][order[c]];
  }
  return {values, vectors};
}

// Penalized multinomial log-likelihood maximized by gradient ascent with
// Barzilai-Borwein steps. `x` has no intercept column; classes are
// 0..k-1 with k-1 the reference. Returns (k-1) x (d+1) coefficients
// (intercept first); `converged` reports whether the gradient vanished.
struct AscentResult {
  std::vector<std::vector<double>> beta;
  bool converged = false;
  int iterations = 0;
};

inline AscentResult softmax_ascent(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                   int classes, double lambda, double gradient_tol = 1e-10,
                                   int max_iterations = 200000) {
  const std::size_t n = x.size();
  const std::size_t p = (n ? x[0].size() : 0) + 1;
  const std::size_t m = static_cast<std::size_t>(classes - 1);
  const std::size_t dim = m * p;
  auto feature = [&](std::size_t i, std::size_t j) { return j == 0 ? 1.0 : x[i][j - 1]; };
  auto grad_at = [&](const std::vector<double>& b) {
    std::vector<double> g(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(m + 1, 0.0);
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t j = 0; j < p; ++j) s[k] += b[k * p + j] * feature(i, j);
      const double mx = *std::max_element(s.begin(), s.end());
      double total = 0.0;
      for (double& v : s) total += (v = std::exp(v - mx));
      for (std::size_t k = 0; k < m; ++k) {
        const double resid = (y[i] == static_cast<int>(k) ? 1.0 : 0.0) - s[k] / total;
        for (std::size_t j = 0; j < p; ++j) g[k * p + j] += resid * feature(i, j);
      }
    }
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t j = 1; j < p; ++j) g[k * p + j] -= lambda * b[k * p + j];
    return g;
  };
  auto inf_norm = [](const std::vector<double>& v) {
    double r = 0.0;
    for (double e : v) r = std::max(r, std::abs(e));
    return r;
  };

  AscentResult out;
  std::vector<double> b(dim, 0.0), g = grad_at(b);
  double step = 1.0 / static_cast<double>(std::max<std::size_t>(n, 1));
  for (int it = 0; it < max_iterations; ++it) {
    out.iterations = it;
    if (inf_norm(g) < gradient_tol) {
      out.converged = true;
      break;
    }
    std::vector<double> nb(dim);
    for (std::size_t i = 0; i < dim; ++i) nb[i] = b[i] + step * g[i];
    auto ng = grad_at(nb);
    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double s = nb[i] - b[i];
      const double yv = g[i] - ng[i];
      ss += s * s;
      sy += s * yv;
    }
    step = sy > 0 ? ss / sy : step;
    b = std::move(nb);
    g = std::move(ng);
  }
  out.beta.assign(m, std::vector<double>(p));
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < p; ++j) out.beta[k][j] = b[k * p + j];
  return out;
}

// Ridge least squares by Gauss-Jordan elimination with partial pivoting on
// the normal equations. The intercept (prepended) is not penalized.
inline std::vector<double> ridge_least_squares(const std::vector<std::vector<double>>& x,
                                               const std::vector<double>& y, double lambda) {
  const std::size_t n = x.size();
  const std::size_t p = x[0].size() + 1;
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(p);
    row[0] = 1.0;
    for (std::size_t j = 1; j < p; ++j) row[j] = x[i][j - 1];
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) a[r][c] += row[r] * row[c];
      a[r][p] += row[r] * y[i];
    }
  }
  for (std::size_t j = 1; j < p; ++j) a[j][j] += lambda;
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> beta(p);
  for (std::size_t j = 0; j < p; ++j) beta[j] = a[j][p] / a[j][j];
  return beta;
}

// AUC as the fraction of (positive, negative) pairs ranked correctly, ties
// counting one half.
inline double pair_count_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Best Gini split over every feature and every midpoint between distinct
// sorted values, honoring a minimum child size. Returns (gain, feature,
// threshold); gain is -1 when no admissible split exists.
struct SplitOracle {
  double gain = -1.0;
  int feature = -1;
  double threshold = 0.0;
};

inline SplitOracle best_gini_split(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                   int classes, std::size_t min_leaf) {
  const std::size_t n = x.size();
  auto gini = [&](const std::vector<std::size_t>& rows) {
    if (rows.empty()) return 0.0;
    std::vector<double> c(static_cast<std::size_t>(classes), 0.0);
    for (auto r : rows) c[static_cast<std::size_t>(y[r])] += 1.0;
    double s = 0.0;
    for (double v : c) s += (v / rows.size()) * (v / rows.size());
    return 1.0 - s;
  };
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const double parent = gini(all);
  SplitOracle best;
  for (std::size_t f = 0; f < x[0].size(); ++f) {
    std::vector<double> values;
    for (std::size_t i = 0; i < n; ++i) values.push_back(x[i][f]);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t v = 0; v + 1 < values.size(); ++v) {
      const double thr = values[v] + (values[v + 1] - values[v]) / 2.0;
      std::vector<std::size_t> left, right;
      for (std::size_t i = 0; i < n; ++i) (x[i][f] <= thr ? left : right).push_back(i);
      if (left.size() < min_leaf || right.size() < min_leaf) continue;
      const double children = (static_cast<double>(left.size()) / n) * gini(left) +
                              (static_cast<double>(right.size()) / n) * gini(right);
      const double gain = parent - children;
      if (gain > best.gain + 1e-12) best = {gain, static_cast<int>(f), thr};
    }
  }
  return best;
}

// Maximum of `score` over the full Cartesian product of `grids`, visiting
// points in lexicographic order. Returns (best value, best point).
inline std::pair<double, std::vector<double>> brute_force_grid(
    const std::vector<std::vector<double>>& grids, const std::function<double(const std::vector<double>&)>& score) {
  std::vector<std::size_t> pos(grids.size(), 0);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> arg;
  while (true) {
    std::vector<double> point;
    for (std::size_t g = 0; g < grids.size(); ++g) point.push_back(grids[g][pos[g]]);
    const double v = score(point);
    if (v > best) {
      best = v;
      arg = point;
    }
    std::size_t g = grids.size();
    bool done = true;
    while (g > 0) {
      --g;
      if (++pos[g] < grids[g].size()) {
        done = false;
        break;
      }
      pos[g] = 0;
    }
    if (done) break;
  }
  return {best, arg};
}

// Sample Pearson correlation written out from the definition.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace oracle
