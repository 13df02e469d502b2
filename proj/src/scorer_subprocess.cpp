#include <cerrno>
#include <csignal>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "minia/codec.hpp"
#include "minia/error.hpp"
#include "minia/scorer.hpp"
#include "minia/scorer_wire.hpp"

namespace minia {

SubprocessScorer::SubprocessScorer(const std::string& command, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  std::signal(SIGPIPE, SIG_IGN);  // a dead sidecar must surface as an error, not kill us
  int in_pipe[2];   // parent -> child
  int out_pipe[2];  // child -> parent
  if (pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(ErrorCode::ScorerUnavailable, "pipe() failed");
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw Error(ErrorCode::ScorerUnavailable, "pipe() failed");
  }
  const pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw Error(ErrorCode::ScorerUnavailable, "fork() failed");
  }
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

SubprocessScorer::~SubprocessScorer() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) {
    // closing stdin asks the sidecar to exit; give it a moment before killing
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, nullptr, WNOHANG) == pid_) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, nullptr, 0);
  }
}

std::string SubprocessScorer::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      broken_ = true;
      throw Error(ErrorCode::Timeout, "no response from sidecar within " + std::to_string(timeout_.count()) + " ms");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw Error(ErrorCode::ScorerUnavailable, std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    char chunk[65536];
    const ssize_t n = read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw Error(ErrorCode::ScorerUnavailable, std::string("read: ") + std::strerror(errno));
    }
    if (n == 0) {
      broken_ = true;
      throw Error(ErrorCode::ScorerUnavailable, "sidecar closed its output");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string SubprocessScorer::exchange(const std::string& frame) {
  if (broken_) throw Error(ErrorCode::ScorerUnavailable, "sidecar connection is no longer usable");
  std::string line = frame + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = write(to_child_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw Error(ErrorCode::ScorerUnavailable, std::string("write to sidecar: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  return read_line();
}

ModelIds SubprocessScorer::do_handshake() {
  const auto id = next_id_++;
  const auto reply = exchange(encode_request({id, ScoreOp::handshake, {}, {}}));
  try {
    return expect_models(decode_response(reply), id);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProtocolViolation) broken_ = true;
    throw;
  }
}

double SubprocessScorer::do_clip_similarity(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) {
  const auto id = next_id_++;
  const auto reply = exchange(encode_request({id, ScoreOp::clip_similarity, base64_encode(png_a), base64_encode(png_b)}));
  try {
    return expect_value(decode_response(reply), id);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProtocolViolation) broken_ = true;
    throw;
  }
}

double SubprocessScorer::do_lpips(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) {
  const auto id = next_id_++;
  const auto reply = exchange(encode_request({id, ScoreOp::lpips, base64_encode(png_a), base64_encode(png_b)}));
  try {
    return expect_value(decode_response(reply), id);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProtocolViolation) broken_ = true;
    throw;
  }
}

}  // namespace minia
