#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace minia {

/// Models declared by a scorer at handshake, plus its preprocessing description.
struct ModelIds {
  std::string clip;
  std::string lpips;
  nlohmann::json preprocessing = nlohmann::json::object();
};

/// Perceptual similarity between two PNG-encoded images.
///
/// Scoring calls perform the handshake first if it has not happened yet and
/// reject out-of-range values (CLIP outside [-1, 1], LPIPS negative) as
/// ProtocolViolation. A connection is serial: one caller at a time.
class PerceptualScorer {
 public:
  virtual ~PerceptualScorer() = default;

  const ModelIds& handshake();
  double clip_similarity(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b);
  double lpips(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b);

 protected:
  virtual ModelIds do_handshake() = 0;
  virtual double do_clip_similarity(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) = 0;
  virtual double do_lpips(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) = 0;

 private:
  std::optional<ModelIds> models_;
};

/// Deterministic in-process scorer that needs no models.
///
/// constant: CLIP 1, LPIPS 0 for every pair.
/// pixel: both images are decoded, converted to luma and box-averaged onto a
/// 32x32 grid; LPIPS is the mean absolute grid difference / 255 and CLIP the
/// cosine between mean-centered grids. Values depend only on the PNG bytes.
class StubScorer final : public PerceptualScorer {
 public:
  enum class Mode { constant, pixel };
  explicit StubScorer(Mode mode = Mode::pixel) : mode_(mode) {}

 protected:
  ModelIds do_handshake() override;
  double do_clip_similarity(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) override;
  double do_lpips(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) override;

 private:
  Mode mode_;
};

/// Talks newline-delimited JSON to a child process over its stdin/stdout.
class SubprocessScorer final : public PerceptualScorer {
 public:
  SubprocessScorer(const std::string& command, std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));
  ~SubprocessScorer() override;
  SubprocessScorer(const SubprocessScorer&) = delete;
  SubprocessScorer& operator=(const SubprocessScorer&) = delete;

 protected:
  ModelIds do_handshake() override;
  double do_clip_similarity(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) override;
  double do_lpips(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) override;

 private:
  std::string exchange(const std::string& frame);
  std::string read_line();

  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 1;
  bool broken_ = false;
};

/// Same frames as SubprocessScorer, sent as POST /score bodies.
class HttpScorer final : public PerceptualScorer {
 public:
  HttpScorer(std::string base_url, std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

 protected:
  ModelIds do_handshake() override;
  double do_clip_similarity(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) override;
  double do_lpips(std::span<const std::uint8_t> png_a, std::span<const std::uint8_t> png_b) override;

 private:
  std::string post(const std::string& body);

  std::string base_url_;
  std::chrono::milliseconds timeout_;
  std::uint64_t next_id_ = 1;
};

using ScorerFactory = std::function<std::unique_ptr<PerceptualScorer>()>;

/// Builds a factory from a command-line selector:
///   "stub", "stub-constant", "sidecar" (runs $MINIA_SCORER_CMD), "http:URL".
ScorerFactory scorer_factory(const std::string& selector,
                             std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

/// Fixed set of connections handed out one caller at a time.
class ScorerPool {
 public:
  ScorerPool(const ScorerFactory& factory, std::size_t size);

  class Lease {
   public:
    Lease(ScorerPool& pool, std::unique_ptr<PerceptualScorer> scorer) : pool_(&pool), scorer_(std::move(scorer)) {}
    Lease(Lease&&) noexcept = default;
    Lease& operator=(Lease&&) noexcept = default;
    ~Lease();
    PerceptualScorer& operator*() const { return *scorer_; }
    PerceptualScorer* operator->() const { return scorer_.get(); }

   private:
    ScorerPool* pool_;
    std::unique_ptr<PerceptualScorer> scorer_;
  };

  Lease acquire();
  const ModelIds& model_ids() const { return models_; }
  std::size_t size() const { return size_; }

 private:
  void release(std::unique_ptr<PerceptualScorer> scorer);

  std::mutex mutex_;
  std::condition_variable available_;
  std::vector<std::unique_ptr<PerceptualScorer>> idle_;
  std::size_t size_;
  ModelIds models_;
};

}  // namespace minia
