#include "minia/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "minia/error.hpp"
#include "minia/image.hpp"

namespace minia {

const ModelIds& PerceptualScorer::handshake() {
  if (!models_) {
    ModelIds ids = do_handshake();
    if (ids.clip.empty() || ids.lpips.empty()) {
      throw Error(ErrorCode::ProtocolViolation, "handshake declared an empty model id");
    }
    models_ = std::move(ids);
  }
  return *models_;
}

double PerceptualScorer::clip_similarity(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) {
  handshake();
  const double v = do_clip_similarity(png_a, png_b);
  constexpr double slack = 1e-6;  // float32 cosine can overshoot by an ulp or two
  if (!std::isfinite(v) || v < -1.0 - slack || v > 1.0 + slack) {
    throw Error(ErrorCode::ProtocolViolation, "clip_similarity outside [-1, 1]");
  }
  return std::clamp(v, -1.0, 1.0);
}

double PerceptualScorer::lpips(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) {
  handshake();
  const double v = do_lpips(png_a, png_b);
  if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::ProtocolViolation, "lpips is negative or not finite");
  return v;
}

namespace {

constexpr int kGrid = 32;

std::vector<double> luma_grid(std::span<const std::uint8_t> png) {
  const RgbaImage img = decode_png(png);
  std::vector<double> sum(kGrid * kGrid, 0.0);
  std::vector<int> count(kGrid * kGrid, 0);
  auto luma = [&](int x, int y) {
    const auto* p = img.pixel(x, y);
    return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  };
  for (int y = 0; y < img.height; ++y) {
    const int gy = static_cast<int>(static_cast<long long>(y) * kGrid / img.height);
    for (int x = 0; x < img.width; ++x) {
      const int gx = static_cast<int>(static_cast<long long>(x) * kGrid / img.width);
      sum[gy * kGrid + gx] += luma(x, y);
      ++count[gy * kGrid + gx];
    }
  }
  for (int gy = 0; gy < kGrid; ++gy)
    for (int gx = 0; gx < kGrid; ++gx) {
      const int i = gy * kGrid + gx;
      if (count[i] > 0) {
        sum[i] /= count[i];
      } else {  // images smaller than the grid: nearest sample
        sum[i] = luma(static_cast<int>((gx + 0.5) * img.width / kGrid), static_cast<int>((gy + 0.5) * img.height / kGrid));
      }
    }
  return sum;
}

}  // namespace

ModelIds StubScorer::do_handshake() {
  ModelIds ids{"stub", "stub", nlohmann::json::object()};
  ids.preprocessing["mode"] = mode_ == Mode::constant ? "constant" : "pixel";
  if (mode_ == Mode::pixel) ids.preprocessing["grid"] = kGrid;
  return ids;
}

double StubScorer::do_clip_similarity(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) {
  if (mode_ == Mode::constant) return 1.0;
  auto a = luma_grid(png_a);
  auto b = luma_grid(png_b);
  auto center = [](std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double& x : v) x -= mean;
    return mean;
  };
  const double mean_a = center(a);
  const double mean_b = center(b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    return (na == nb && mean_a == mean_b) ? 1.0 : 0.0;
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double StubScorer::do_lpips(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) {
  if (mode_ == Mode::constant) return 0.0;
  const auto a = luma_grid(png_a);
  const auto b = luma_grid(png_b);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / (255.0 * static_cast<double>(a.size()));
}

ScorerFactory scorer_factory(const std::string& selector, std::chrono::milliseconds timeout) {
  if (selector == "stub") return [] { return std::make_unique<StubScorer>(StubScorer::Mode::pixel); };
  if (selector == "stub-constant") return [] { return std::make_unique<StubScorer>(StubScorer::Mode::constant); };
  if (selector == "sidecar") {
    const char* cmd = std::getenv("MINIA_SCORER_CMD");
    if (cmd == nullptr || *cmd == '\0') {
      throw Error(ErrorCode::ScorerUnavailable, "MINIA_SCORER_CMD is not set");
    }
    std::string command = cmd;
    return [command, timeout] { return std::make_unique<SubprocessScorer>(command, timeout); };
  }
  if (selector.rfind("http:", 0) == 0) {
    std::string url = selector.substr(5);
    if (url.rfind("//", 0) == 0) url = "http:" + url;  // "http://host:port" passed whole
    return [url, timeout] { return std::make_unique<HttpScorer>(url, timeout); };
  }
  throw Error(ErrorCode::InvalidArgument, "unknown scorer selector '" + selector + "'");
}

ScorerPool::ScorerPool(const ScorerFactory& factory, std::size_t size) : size_(std::max<std::size_t>(size, 1)) {
  for (std::size_t i = 0; i < size_; ++i) {
    auto scorer = factory();
    const ModelIds& ids = scorer->handshake();
    if (i == 0) models_ = ids;
    idle_.push_back(std::move(scorer));
  }
}

ScorerPool::Lease ScorerPool::acquire() {
  std::unique_lock lock(mutex_);
  available_.wait(lock, [&] { return !idle_.empty(); });
  auto scorer = std::move(idle_.back());
  idle_.pop_back();
  return Lease(*this, std::move(scorer));
}

void ScorerPool::release(std::unique_ptr<PerceptualScorer> scorer) {
  {
    std::lock_guard lock(mutex_);
    idle_.push_back(std::move(scorer));
  }
  available_.notify_one();
}

ScorerPool::Lease::~Lease() {
  if (scorer_) pool_->release(std::move(scorer_));
}

}  // namespace minia
