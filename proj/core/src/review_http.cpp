#include <httplib.h>

#include <thread>

#include "phenoeval/error.hpp"
#include "phenoeval/review_service.hpp"

namespace phenoeval {

namespace {

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, nlohmann::json{{"error", message}}, status);
}

// Runs `fn`, mapping library errors onto HTTP statuses.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const ValidationError& e) {
    send_error(res, 422, e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("malformed request: ") + e.what());
  } catch (const Error& e) {
    send_error(res, 400, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

}  // namespace

struct ReviewHttpServer::Impl {
  ReviewService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(ReviewService& s) : service(s) {}

  void install(const std::optional<std::filesystem::path>& static_dir) {
    server.Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, service.list_runs()); });
    });

    server.Get("/severities", [](const httplib::Request&, httplib::Response& res) {
      nlohmann::json out = nlohmann::json::array();
      for (Severity s : {Severity::Minor, Severity::Major, Severity::Critical}) {
        out.push_back({{"severity", to_string(s)}, {"help", severity_help(s)}});
      }
      send_json(res, out);
    });

    server.Get(R"(/runs/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto state = service.state(req.matches[1]);
        nlohmann::json body{{"report", state->report()}, {"hallucinations", state->hallucinations()}};
        body["quasi"] = state->reviewable() ? nlohmann::json(state->quasi()) : nlohmann::json(nullptr);
        send_json(res, body);
      });
    });

    server.Get(R"(/runs/([^/]+)/false-positives)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, service.list_false_positives(req.matches[1])); });
    });

    server.Get(R"(/runs/([^/]+)/responses)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!req.has_param("concept")) {
          send_error(res, 400, "missing 'concept' query parameter");
          return;
        }
        send_json(res, service.responses(req.matches[1], req.get_param_value("concept")));
      });
    });

    server.Get(R"(/runs/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& e : service.events(req.matches[1])) out.push_back(event_to_json(e));
        send_json(res, out);
      });
    });

    server.Post(R"(/runs/([^/]+)/annotations)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto a = nlohmann::json::parse(req.body).get<Annotation>();
        a.run_id = req.matches[1];
        a.annotation_id.clear();
        a.created_at.clear();
        send_json(res, service.submit_annotation(std::move(a)), 201);
      });
    });

    server.Post(R"(/runs/([^/]+)/hallucinations)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto h = nlohmann::json::parse(req.body).get<HallucinationRecord>();
        h.run_id = req.matches[1];
        h.record_id.clear();
        h.created_at.clear();
        send_json(res, service.submit_hallucination(std::move(h)), 201);
      });
    });

    if (static_dir && !server.set_mount_point("/", static_dir->string())) {
      throw ConfigError("static directory " + static_dir->string() + " does not exist");
    }
  }
};

ReviewHttpServer::ReviewHttpServer(ReviewService& service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  impl_->install(static_dir);
}

ReviewHttpServer::~ReviewHttpServer() { stop(); }

int ReviewHttpServer::start(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw ConfigError("review server cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ReviewHttpServer::listen_blocking(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw ConfigError("review server cannot listen on " + host + ":" + std::to_string(port));
  }
}

void ReviewHttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace phenoeval
