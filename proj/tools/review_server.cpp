#include "review_server.hpp"

#include <httplib.h>

#include <fstream>
#include <sstream>

namespace fpage {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

std::string content_type_for(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  return "application/octet-stream";
}

// Relative, no "..", no root: stays inside the image root.
bool safe_relative(const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || p.has_root_name()) return false;
  for (const auto& part : p) {
    if (part == "..") return false;
  }
  return true;
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    send_error(res, 422, e.what());
  } catch (const NotFound& e) {
    send_error(res, 404, e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

}  // namespace

ReviewServer::ReviewServer(ReviewStore& store, std::filesystem::path image_root)
    : store_(store), image_root_(std::move(image_root)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

void ReviewServer::install_routes() {
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server_->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server_->Get("/queue", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      QueueQuery q;
      if (req.has_param("cursor")) q.cursor = req.get_param_value("cursor");
      if (req.has_param("limit")) {
        const std::string v = req.get_param_value("limit");
        try {
          std::size_t used = 0;
          q.limit = std::stoi(v, &used);
          if (used != v.size()) throw std::invalid_argument(v);
        } catch (const std::logic_error&) {
          throw ValidationError("limit must be an integer");
        }
      }
      if (req.has_param("state")) {
        const std::string state = req.get_param_value("state");
        if (state == "all") {
          q.include_decided = true;
        } else if (state != "pending") {
          throw ValidationError("state must be pending or all");
        }
      }
      send_json(res, 200, store_.queue(q));
    });
  });

  server_->Get(R"(/subject/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, store_.subject(req.matches[1].str())); });
  });

  server_->Post("/decision", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, std::string("malformed JSON: ") + e.what());
        return;
      }
      send_json(res, 200, store_.submit(ReviewDecision::from_json(body)));
    });
  });

  server_->Get("/export", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      res.status = 200;
      res.set_content(store_.export_manifest(), "application/x-ndjson");
    });
  });

  server_->Get(R"(/thumbnails/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::filesystem::path rel(req.matches[1].str());
    if (image_root_.empty() || !safe_relative(rel)) {
      send_error(res, 404, "no such thumbnail");
      return;
    }
    const std::filesystem::path file = image_root_ / rel;
    std::ifstream in(file, std::ios::binary);
    if (!in) {
      send_error(res, 404, "no such thumbnail: " + rel.string());
      return;
    }
    std::ostringstream bytes;
    bytes << in.rdbuf();
    res.status = 200;
    res.set_content(bytes.str(), content_type_for(file).c_str());
  });
}

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host.c_str());
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host.c_str(), port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ReviewServer::listen() { server_->listen_after_bind(); }

void ReviewServer::stop() {
  if (server_) server_->stop();
}

bool ReviewServer::running() const { return server_->is_running(); }

}  // namespace fpage
