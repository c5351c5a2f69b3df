#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "ctxmon/sim.hpp"
#include "doctest.h"

using namespace ctxmon;

namespace {

bool same_samples(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.samples[i].timestamp_ms != b.samples[i].timestamp_ms) return false;
    for (int k = 0; k < kTotalFeatures; ++k)
      if (a.samples[i].feature(k) != b.samples[i].feature(k)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("default params give 5 contiguous segments covering every sample") {
  SimParams p;
  Trajectory t = generate_block_transfer(p);
  REQUIRE(t.segments.size() == 5);
  CHECK(t.segments[0].gesture_id == 12);
  CHECK(t.segments[1].gesture_id == 2);
  CHECK(t.segments[2].gesture_id == 5);
  CHECK(t.segments[3].gesture_id == 6);
  CHECK(t.segments[4].gesture_id == 11);
  CHECK(t.segments[0].start_index == 0);
  for (std::size_t i = 1; i < t.segments.size(); ++i)
    CHECK(t.segments[i].start_index == t.segments[i - 1].end_index + 1);
  CHECK(t.segments.back().end_index == t.size() - 1);
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("grasper schedule: closed mid-carry, open at end of G11") {
  SimParams p;
  p.noise_grasper = 0.0;
  p.noise_position = 0.0;
  p.noise_rotation_rad = 0.0;
  Trajectory t = generate_block_transfer(p);
  const auto& g6 = t.segments[3];
  const std::size_t mid = (g6.start_index + g6.end_index) / 2;
  CHECK(t.samples[mid].right.grasper_angle ==
        doctest::Approx(p.grasper_closed).epsilon(0.05));
  CHECK(t.samples[t.segments[4].end_index].right.grasper_angle ==
        doctest::Approx(p.grasper_open).epsilon(0.05));
}

TEST_CASE("rotations stay orthonormal within 1e-6") {
  SimParams p;
  Trajectory t = generate_block_transfer(p);
  for (std::size_t i = 0; i < t.size(); i += 37) {
    const auto& r = t.samples[i].right.rotation;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double dot = 0;
        for (int k = 0; k < 3; ++k) dot += r[k * 3 + a] * r[k * 3 + b];
        CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-6);
      }
  }
}

TEST_CASE("same seed gives bit-identical trajectories") {
  SimParams p;
  p.seed = 77;
  Trajectory a = generate_block_transfer(p);
  Trajectory b = generate_block_transfer(p);
  CHECK(same_samples(a, b));
  p.seed = 78;
  Trajectory c = generate_block_transfer(p);
  CHECK_FALSE(same_samples(a, c));
}

TEST_CASE("terminal position reaches the receptacle for fault-free runs") {
  SimParams p;
  p.noise_position = 0.0;
  p.noise_rotation_rad = 0.0;
  p.noise_grasper = 0.0;
  Trajectory t = generate_block_transfer(p);
  const auto& last = t.samples.back().right.position;
  const double dx = last[0] - p.receptacle[0];
  const double dy = last[1] - p.receptacle[1];
  const double dz = last[2] - (p.receptacle[2] + p.approach_height);
  CHECK(std::sqrt(dx * dx + dy * dy + dz * dz) < 5.0);
}

TEST_CASE("doubling the sample rate doubles the sample count") {
  SimParams p;
  p.seed = 5;
  Trajectory a = generate_block_transfer(p);
  p.sample_rate_hz = 200.0;
  Trajectory b = generate_block_transfer(p);
  CHECK(std::llabs(2 * long(a.size()) - long(b.size())) <= 2);
  for (std::size_t s = 0; s < 5; ++s) {
    const double ta = a.samples[a.segments[s].start_index].timestamp_ms;
    const double tb = b.samples[b.segments[s].start_index].timestamp_ms;
    CHECK(std::abs(ta - tb) <= 1000.0 / p.sample_rate_hz + 10.0);
  }
}

TEST_CASE("add_noise") {
  SimParams p;
  Trajectory t = generate_block_transfer(p);
  SUBCASE("zero sigma is the identity") {
    Trajectory n = add_noise(t, NoiseSigma{}, 9);
    CHECK(same_samples(t, n));
  }
  SUBCASE("same seed gives identical output") {
    NoiseSigma s{1.0, 0.01, 0.02, 0.5};
    CHECK(same_samples(add_noise(t, s, 3), add_noise(t, s, 3)));
    CHECK_FALSE(same_samples(add_noise(t, s, 3), add_noise(t, s, 4)));
  }
  SUBCASE("labels untouched") {
    Trajectory n = add_noise(t, NoiseSigma{2.0, 0.0, 0.0, 0.0}, 6);
    REQUIRE(n.segments.size() == t.segments.size());
    for (std::size_t i = 0; i < t.segments.size(); ++i) {
      CHECK(n.segments[i].gesture_id == t.segments[i].gesture_id);
      CHECK(n.segments[i].start_index == t.segments[i].start_index);
      CHECK(n.segments[i].end_index == t.segments[i].end_index);
    }
  }
  SUBCASE("position noise variance matches sigma^2 within 5%") {
    SimParams big;
    big.gesture_durations_ms = {20000, 20000, 20000, 20000, 20000};
    big.duration_jitter_fraction = 0.0;
    Trajectory base = generate_block_transfer(big);
    const double sigma = 2.0;
    Trajectory noisy = add_noise(base, NoiseSigma{sigma, 0.0, 0.0, 0.0}, 10);
    double ss = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < base.size(); ++i)
      for (int k = 0; k < 3; ++k) {
        const double d = noisy.samples[i].right.position[k] -
                         base.samples[i].right.position[k];
        ss += d * d;
        ++n;
      }
    CHECK(ss / double(n) == doctest::Approx(sigma * sigma).epsilon(0.05));
  }
}
