#pragma once

#include "fpage/review.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace fpage {

// HTTP front of a ReviewStore:
//   GET  /queue?cursor=&limit=&state=pending|all
//   GET  /subject/<id>
//   POST /decision
//   GET  /export
//   GET  /thumbnails/<image_id>   (static file under image_root)
class ReviewServer {
 public:
  ReviewServer(ReviewStore& store, std::filesystem::path image_root);
  ~ReviewServer();

  // Returns the bound port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  void install_routes();

  ReviewStore& store_;
  std::filesystem::path image_root_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace fpage
