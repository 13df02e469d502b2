#include "minia/scorer_http.hpp"

#include <mutex>

#include <httplib.h>

#include "minia/codec.hpp"
#include "minia/error.hpp"
#include "minia/scorer_wire.hpp"

namespace minia {

HttpScorer::HttpScorer(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {}

std::string HttpScorer::post(const std::string& body) {
  httplib::Client client(base_url_);
  const auto secs = timeout_.count() / 1000;
  const auto usecs = (timeout_.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  auto res = client.Post("/score", body, "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
      throw Error(ErrorCode::Timeout, "no response from " + base_url_ + " within " + std::to_string(timeout_.count()) + " ms");
    }
    throw Error(ErrorCode::ScorerUnavailable, "POST " + base_url_ + "/score failed: " + httplib::to_string(err));
  }
  if (res->status != 200 && res->status != 400 && res->status != 500) {
    throw Error(ErrorCode::ProtocolViolation, "unexpected HTTP status " + std::to_string(res->status));
  }
  return res->body;
}

ModelIds HttpScorer::do_handshake() {
  const auto id = next_id_++;
  return expect_models(decode_response(post(encode_request({id, ScoreOp::handshake, {}, {}}))), id);
}

double HttpScorer::do_clip_similarity(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) {
  const auto id = next_id_++;
  return expect_value(
      decode_response(post(encode_request({id, ScoreOp::clip_similarity, base64_encode(png_a), base64_encode(png_b)}))), id);
}

double HttpScorer::do_lpips(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) {
  const auto id = next_id_++;
  return expect_value(decode_response(post(encode_request({id, ScoreOp::lpips, base64_encode(png_a), base64_encode(png_b)}))),
                      id);
}

ScorerHttpServer::ScorerHttpServer(PerceptualScorer& scorer) : server_(std::make_unique<httplib::Server>()) {
  auto serial = std::make_shared<std::mutex>();
  server_->Post("/score", [&scorer, serial](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(*serial);
    const std::string reply = answer_frame(scorer, req.body);
    const auto parsed = decode_response(reply);
    if (parsed.error) {
      // malformed frames are the client's fault; everything else is ours
      bool client_fault = false;
      try {
        decode_request(req.body);
      } catch (const Error&) {
        client_fault = true;
      }
      res.status = client_fault ? 400 : 500;
    } else {
      res.status = 200;
    }
    res.set_content(reply, "application/json");
  });
}

ScorerHttpServer::~ScorerHttpServer() { stop(); }

int ScorerHttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void ScorerHttpServer::listen_blocking(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

void ScorerHttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace minia
