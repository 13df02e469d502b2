#include <doctest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "minia/error.hpp"
#include "minia/metrics.hpp"
#include "minia/orient.hpp"

using namespace minia;
namespace fx = minia::fixtures;

namespace {

double max_iou(const OrientationResult& r) {
  return *std::max_element(r.per_candidate_iou.begin(), r.per_candidate_iou.end());
}

}  // namespace

TEST_CASE("round trip: every candidate pose of the relief is recovered at maximal IoU") {
  const RenderConfig cfg;
  const auto slab = fx::relief_slab();
  REQUIRE(thinnest_axis(compute_aabb(slab)) == Axis::z);
  const auto reference = reference_from_render(render(slab, OrientationCandidate::make(Axis::z, 0), cfg));
  StubScorer scorer(StubScorer::Mode::pixel);
  for (int k = 0; k < 16; ++k) {
    CAPTURE(k);
    const auto posed = apply_transform(slab, OrientationCandidate::make(Axis::z, k).as_transform);
    const auto result = detect_orientation(posed, reference, cfg, scorer);
    CHECK(result.per_candidate_iou[result.winner.index] == max_iou(result));
    CHECK(max_iou(result) >= 0.98);
    // the winner undoes the pose
    const Mat3 composed = result.winner.as_transform.linear * OrientationCandidate::make(Axis::z, k).as_transform.linear;
    CHECK((composed - Mat3::Identity()).norm() == 0.0);
  }
}

TEST_CASE("gate keeps an adversarially favored low-IoU candidate out of the running") {
  const RenderConfig cfg;
  const auto slab = fx::relief_slab();
  const auto reference = reference_from_render(render(slab, OrientationCandidate::make(Axis::z, 0), cfg));

  StubScorer probe(StubScorer::Mode::constant);
  const auto baseline = detect_orientation(slab, reference, cfg, probe);
  int worst = 0;
  for (int i = 1; i < 16; ++i)
    if (baseline.per_candidate_iou[i] < baseline.per_candidate_iou[worst]) worst = i;
  REQUIRE(baseline.per_candidate_iou[worst] < baseline.gate_threshold);

  const auto favored_png = encode_png(baseline.renders[worst]->shaded);
  fx::FavoringScorer adversary(favored_png);
  const auto result = detect_orientation(slab, reference, cfg, adversary);
  CHECK(result.winner.index != worst);
  CHECK(result.per_candidate_iou[result.winner.index] >= result.gate_threshold);
  CHECK_FALSE(std::find(result.eligible.begin(), result.eligible.end(), worst) != result.eligible.end());
  CHECK_FALSE(result.per_eligible_clip[worst].has_value());
  CHECK(std::none_of(adversary.seen.begin(), adversary.seen.end(),
                     [&](const PngBytes& png) { return png == favored_png; }));
  CHECK(adversary.seen.size() == result.eligible.size());

  // the same favoritism toward an eligible candidate wins
  const int target = result.eligible.back();
  fx::FavoringScorer ally(encode_png(baseline.renders[target]->shaded));
  CHECK(detect_orientation(slab, reference, cfg, ally).winner.index == target);
}

TEST_CASE("gate and eligibility bookkeeping") {
  const RenderConfig cfg;
  const auto disk = fx::disk(64);
  const auto reference = fx::disk_reference(300, 0.4);
  StubScorer constant(StubScorer::Mode::constant);
  const auto r = detect_orientation(disk, reference, cfg, constant);
  CHECK(r.gate_threshold == doctest::Approx(0.5 * max_iou(r)));
  CHECK(std::is_sorted(r.eligible.begin(), r.eligible.end()));
  for (int i = 0; i < 16; ++i) {
    const bool listed = std::find(r.eligible.begin(), r.eligible.end(), i) != r.eligible.end();
    CHECK(listed == (r.per_candidate_iou[i] >= r.gate_threshold));
    CHECK(r.per_eligible_clip[i].has_value() == listed);
  }
  // all candidates tie on CLIP, so the lowest eligible index wins
  CHECK(r.winner.index == r.eligible.front());
  CHECK(r.winner.view_axis == Axis::z);
  CHECK(r.per_candidate_iou[0] >= 0.95);
}

TEST_CASE("thin axis other than z") {
  const RenderConfig cfg;
  auto slab = fx::relief_slab();
  // swap y and z so the relief is thinnest along y
  RigidTransform swap;
  swap.linear << 1, 0, 0, 0, 0, 1, 0, 1, 0;
  const auto turned = apply_transform(slab, swap);
  REQUIRE(thinnest_axis(compute_aabb(turned)) == Axis::y);
  const auto reference = reference_from_render(render(slab, OrientationCandidate::make(Axis::z, 0), cfg));
  StubScorer scorer(StubScorer::Mode::pixel);
  const auto r = detect_orientation(turned, reference, cfg, scorer);
  CHECK(r.winner.view_axis == Axis::y);
  CHECK(r.per_candidate_iou[r.winner.index] == max_iou(r));
  CHECK(max_iou(r) >= 0.98);
}

TEST_CASE("scorer failures propagate") {
  class Broken final : public PerceptualScorer {
   protected:
    ModelIds do_handshake() override { return {}; }
    double do_clip_similarity(std::span<const std::uint8_t>, std::span<const std::uint8_t>) override {
      throw Error(ErrorCode::ScorerUnavailable, "down");
    }
    double do_lpips(std::span<const std::uint8_t>, std::span<const std::uint8_t>) override { return 0; }
  } broken;
  const RenderConfig cfg;
  CHECK_THROWS_AS(detect_orientation(fx::cube(), fx::disk_reference(64, 0.4), cfg, broken), Error);
}

TEST_CASE("orientation json and debug dump") {
  const RenderConfig cfg;
  StubScorer scorer(StubScorer::Mode::pixel);
  const auto slab = fx::relief_slab();
  const auto r =
      detect_orientation(slab, reference_from_render(render(slab, OrientationCandidate::make(Axis::z, 0), cfg)),
                         cfg, scorer);
  const auto doc = orientation_to_json(r);
  CHECK(doc["view_axis"] == "z");
  CHECK(doc["winner"] == r.winner.index);
  CHECK(doc["candidates"].size() == 16);
  CHECK(doc["eligible"].size() == r.eligible.size());
  for (int i = 0; i < 16; ++i) CHECK(doc["candidates"][i]["clip"].is_null() == !r.per_eligible_clip[i].has_value());

  fx::TempDir dir;
  dump_orientation_debug(r, dir.path() / "debug");
  for (int i = 0; i < 16; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "candidate_%02d.png", i);
    CHECK(std::filesystem::exists(dir.path() / "debug" / name));
  }
  CHECK(nlohmann::json::parse(fx::read_text(dir.path() / "debug" / "orientation.json")) == doc);
  CHECK(read_png(dir.path() / "debug" / "reference_composite.png").width == cfg.resolution);
}
