#include <fstream>
#include <sstream>
#include <thread>

#include "faceqa/service.hpp"
#include "httplib.h"
#include "json.hpp"

namespace faceqa {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    reply(res, e.http_status(), {{"error", e.what()}});
  } catch (const json::exception& e) {
    reply(res, 400, {{"error", std::string("malformed body: ") + e.what()}});
  } catch (const DataError& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

json parse_body(const httplib::Request& req) {
  json j = json::parse(req.body);
  if (!j.is_object()) throw ValidationError("body must be a JSON object");
  return j;
}

AcrScores parse_scores(const json& j) {
  if (!j.is_array() || j.size() != kNumDimensions) throw ValidationError("scores must be an array of six integers");
  AcrScores out{};
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    if (!j[d].is_number_integer()) throw ValidationError("scores must be an array of six integers");
    out[d] = j[d].get<int>();
  }
  return out;
}

std::string content_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".ppm" || ext == ".pnm") return "image/x-portable-pixmap";
  return "application/octet-stream";
}

}  // namespace

struct HttpFrontend::Impl {
  RatingService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(RatingService& s) : service(s) {
    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        if (!body.contains("rater_id") || !body["rater_id"].is_string()) throw ValidationError("rater_id is required");
        const SessionMode mode = parse_mode(body.value("mode", std::string("pilot")));
        std::optional<std::string> spec;
        if (body.contains("spec_id")) spec = body["spec_id"].get<std::string>();
        const SessionState st = service.create_session(body["rater_id"].get<std::string>(), mode, spec);
        reply(res, 200,
              {{"session_id", st.session_id}, {"rater_id", st.rater_id}, {"mode", to_string(st.mode)},
               {"spec_id", st.spec_id}, {"status", to_string(st.status)}, {"position", st.cursor},
               {"total", st.queue.size()}});
      });
    });
    server.Get("/sessions/:id/next", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const NextItem n = service.next_item(req.path_params.at("id"));
        json body = {{"done", n.done}, {"position", n.position}, {"total", n.total}, {"status", to_string(n.status)}};
        if (!n.done) {
          body["image_id"] = n.image_id;
          body["image_url"] = "/images/" + n.image_id;
        }
        reply(res, 200, body);
      });
    });
    server.Post("/sessions/:id/ratings", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        if (!body.contains("image_id") || !body["image_id"].is_string()) throw ValidationError("image_id is required");
        if (!body.contains("scores")) throw ValidationError("scores are required");
        const SubmitResult r =
            service.submit_rating(req.path_params.at("id"), body["image_id"].get<std::string>(), parse_scores(body["scores"]));
        reply(res, 200,
              {{"accepted", true}, {"live_flags", r.live_flags}, {"position", r.position}, {"total", r.total},
               {"status", to_string(r.status)}});
      });
    });
    server.Get("/sessions/:id/gate", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const PilotGate g = service.gate_status(req.path_params.at("id"));
        json srcc = json::object();
        for (std::size_t d = 0; d < kNumDimensions; ++d) srcc[std::string(kDimensionNames[d])] = g.per_dimension_srcc[d];
        reply(res, 200, {{"pass", g.pass}, {"per_dimension_srcc", srcc}, {"diagnostics", g.diagnostics}});
      });
    });
    server.Get("/images/:id", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string& id = req.path_params.at("id");
        const std::filesystem::path* p = service.image_path(id);
        if (!p) throw NotFoundError("no image '" + id + "'");
        std::ifstream in(*p, std::ios::binary);
        if (!in) throw NotFoundError("image file for '" + id + "' is missing");
        std::stringstream ss;
        ss << in.rdbuf();
        res.status = 200;
        res.set_content(ss.str(), content_type(*p));
      });
    });
    server.Get("/export/ratings", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        res.status = 200;
        res.set_content(service.export_log(), "application/x-ndjson");
      });
    });
  }
};

HttpFrontend::HttpFrontend(RatingService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::start(const std::string& host, int port) {
  port_ = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void HttpFrontend::listen(const std::string& host, int port) {
  port_ = port;
  if (!impl_->server.listen(host, port)) throw Error("cannot serve on " + host + ":" + std::to_string(port));
}

void HttpFrontend::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace faceqa
