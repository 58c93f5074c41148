#pragma once

#include <functional>
#include <map>
#include <string>

#include "drugsurv/serve.hpp"
#include "httplib.h"

namespace drugsurv {

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
};

inline void install_routes(httplib::Server& server, const Service& service) {
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto query = [](const httplib::Request& req) {
    std::map<std::string, std::string> q;
    for (const auto& [k, v] : req.params) q.emplace(k, v);
    return q;
  };
  server.Post("/predict", [&service, reply, query](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle("POST", "/predict", query(req), req.body));
  });
  server.Post("/optimize", [&service, reply, query](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle("POST", "/optimize", query(req), req.body));
  });
  server.Get("/sweep", [&service, reply, query](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle("GET", "/sweep", query(req), req.body));
  });
  server.Get("/model/meta", [&service, reply, query](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle("GET", "/model/meta", query(req), req.body));
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(nlohmann::json{{"error", "Internal"}, {"message", message}}.dump(), "application/json");
  });
}

/// Serves until `server.stop()` or process exit. `on_ready` runs once the
/// socket is bound, with the bound port. Returns false when binding fails.
inline bool serve_http(httplib::Server& server, const Service& service, const ServeConfig& cfg,
                       const std::function<void(int)>& on_ready = {}) {
  install_routes(server, service);
  int port = cfg.port;
  if (port == 0) {
    port = server.bind_to_any_port(cfg.host);
    if (port < 0) return false;
  } else if (!server.bind_to_port(cfg.host, port)) {
    return false;
  }
  if (on_ready) on_ready(port);
  return server.listen_after_bind();
}

}  // namespace drugsurv
