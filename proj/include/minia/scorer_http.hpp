#pragma once

#include <memory>
#include <string>
#include <thread>

#include "minia/scorer.hpp"

namespace httplib {
class Server;
}

namespace minia {

/// Hosts the scoring protocol as POST /score on a background thread.
/// Requests are answered one at a time, matching the serial-connection model.
class ScorerHttpServer {
 public:
  explicit ScorerHttpServer(PerceptualScorer& scorer);
  ~ScorerHttpServer();
  ScorerHttpServer(const ScorerHttpServer&) = delete;
  ScorerHttpServer& operator=(const ScorerHttpServer&) = delete;

  /// Binds (port 0 picks a free port) and starts serving; returns the port.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen_blocking(const std::string& host, int port);
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace minia
