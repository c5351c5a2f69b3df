#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <random>

#include "ctxmon/fault.hpp"
#include "ctxmon/sim.hpp"
#include "doctest.h"

using namespace ctxmon;

namespace {

Trajectory flat_trajectory(std::size_t n, double grasper) {
  Trajectory t;
  t.sample_rate_hz = 100.0;
  for (std::size_t i = 0; i < n; ++i) {
    KinematicsSample s;
    s.timestamp_ms = double(i) * 10.0;
    s.right.grasper_angle = grasper;
    s.right.position = {double(i), 0.0, 0.0};
    t.samples.push_back(s);
  }
  t.segments.push_back({5, 0, n - 1, false, {}});
  return t;
}

// Independent oracle: explicit enumeration of monotone alignment paths.
double brute_dtw(const std::vector<std::vector<double>>& a,
                 const std::vector<std::vector<double>>& b, std::size_t i,
                 std::size_t j) {
  double cost = 0.0;
  for (std::size_t k = 0; k < a[i].size(); ++k) {
    const double d = a[i][k] - b[j][k];
    cost += d * d;
  }
  cost = std::sqrt(cost);
  if (i == 0 && j == 0) return cost;
  double best = std::numeric_limits<double>::infinity();
  if (i > 0) best = std::min(best, brute_dtw(a, b, i - 1, j));
  if (j > 0) best = std::min(best, brute_dtw(a, b, i, j - 1));
  if (i > 0 && j > 0) best = std::min(best, brute_dtw(a, b, i - 1, j - 1));
  return cost + best;
}

}  // namespace

TEST_CASE("grasper fault ramps by theta per sample and holds at S'") {
  Trajectory t = flat_trajectory(1000, 0.5);
  FaultSpec spec;
  spec.variable = FaultVariable::GrasperAngle;
  spec.start_fraction = 0.1;
  spec.duration_fraction = 0.5;
  spec.target = 1.2;
  spec.theta = 0.01;
  Trajectory f = inject_grasper_fault(t, spec);
  const std::size_t start = 100;
  CHECK(f.samples[start + 69].right.grasper_angle < 1.2);
  CHECK(f.samples[start + 70].right.grasper_angle == doctest::Approx(1.2));
  CHECK(f.samples[start + 200].right.grasper_angle == doctest::Approx(1.2));
  SUBCASE("samples outside the window are bit-identical") {
    for (std::size_t i = 0; i < start; ++i)
      CHECK(f.samples[i].right.grasper_angle == 0.5);
    for (std::size_t i = 600; i < t.size(); ++i)
      for (int k = 0; k < kTotalFeatures; ++k)
        CHECK(f.samples[i].feature(k) == t.samples[i].feature(k));
  }
  SUBCASE("large theta clamps to S' in one step") {
    spec.theta = 5.0;
    Trajectory g = inject_grasper_fault(t, spec);
    CHECK(g.samples[start + 1].right.grasper_angle == doctest::Approx(1.2));
  }
}

TEST_CASE("cartesian fault reaches delta/sqrt(3) per axis at window end") {
  Trajectory t = flat_trajectory(500, 0.3);
  FaultSpec spec;
  spec.variable = FaultVariable::CartesianPosition;
  spec.start_fraction = 0.2;
  spec.duration_fraction = 0.4;
  spec.target = 3000.0;
  Trajectory f = inject_cartesian_fault(t, spec);
  const std::size_t end = 100 + 200 - 1;
  for (int k = 0; k < 3; ++k) {
    const double off =
        f.samples[end].right.position[k] - t.samples[end].right.position[k];
    CHECK(off == doctest::Approx(3000.0 / std::sqrt(3.0)).epsilon(1e-5));
  }
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double off =
        f.samples[end].right.position[k] - t.samples[end].right.position[k];
    d2 += off * off;
  }
  CHECK(std::sqrt(d2) == doctest::Approx(3000.0).epsilon(1e-6));
  SUBCASE("delta 0 is the identity") {
    spec.target = 0.0;
    Trajectory g = inject_cartesian_fault(t, spec);
    for (std::size_t i = 0; i < t.size(); ++i)
      for (int k = 0; k < kTotalFeatures; ++k)
        CHECK(g.samples[i].feature(k) == t.samples[i].feature(k));
  }
}

TEST_CASE("dtw distance") {
  SUBCASE("identical sequences cost 0") {
    std::vector<std::vector<double>> a{{1}, {2}, {3}};
    CHECK(dtw_distance(a, a) == 0.0);
  }
  SUBCASE("[1,2,3] vs [1,2,2,3] costs 0") {
    std::vector<std::vector<double>> a{{1}, {2}, {3}};
    std::vector<std::vector<double>> b{{1}, {2}, {2}, {3}};
    CHECK(dtw_distance(a, b) == 0.0);
  }
  SUBCASE("[0,0] vs [1,1] costs 2") {
    std::vector<std::vector<double>> a{{0}, {0}};
    std::vector<std::vector<double>> b{{1}, {1}};
    CHECK(dtw_distance(a, b) == doctest::Approx(2.0));
  }
  SUBCASE("empty sequence is an error") {
    std::vector<std::vector<double>> a{{1}};
    CHECK_THROWS(dtw_distance(a, {}));
  }
  SUBCASE("matches brute-force path enumeration on random short pairs") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + rng() % 8, m = 1 + rng() % 8;
      const std::size_t d = 1 + rng() % 3;
      std::vector<std::vector<double>> a(n, std::vector<double>(d));
      std::vector<std::vector<double>> b(m, std::vector<double>(d));
      for (auto& row : a)
        for (auto& v : row) v = u(rng);
      for (auto& row : b)
        for (auto& v : row) v = u(rng);
      CHECK(dtw_distance(a, b) ==
            doctest::Approx(brute_dtw(a, b, n - 1, m - 1)).epsilon(1e-12));
      CHECK(dtw_distance(a, b) == doctest::Approx(dtw_distance(b, a)));
      CHECK(dtw_distance(a, b) >= 0.0);
    }
  }
}

TEST_CASE("failure oracle on simulated block transfers") {
  SimParams p;
  p.seed = 21;
  Trajectory ref = generate_block_transfer(p);

  SUBCASE("fault-free run has no events") {
    CHECK(failure_oracle(ref, ref).empty());
  }
  SUBCASE("over-opening during carry is a block drop") {
    FaultSpec spec;
    spec.variable = FaultVariable::GrasperAngle;
    spec.start_fraction = 0.40;
    spec.duration_fraction = 0.35;
    spec.target = 1.55;
    spec.theta = 0.005;
    Trajectory f = inject_grasper_fault(ref, spec);
    auto events = failure_oracle(f, ref);
    REQUIRE(events.size() >= 1);
    CHECK(events[0].kind == FailureKind::BlockDrop);
    CHECK((events[0].gesture_id == 5 || events[0].gesture_id == 6));
  }
  SUBCASE("holding the grasper closed through G11 is a dropoff failure") {
    FaultSpec spec;
    spec.variable = FaultVariable::GrasperAngle;
    spec.start_fraction = 0.30;
    spec.duration_fraction = 0.70;
    spec.target = 0.35;
    spec.theta = 0.005;
    Trajectory f = inject_grasper_fault(ref, spec);
    auto events = failure_oracle(f, ref);
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == FailureKind::DropoffFailure);
    CHECK(events[0].gesture_id == 11);
  }
  SUBCASE("missing gesture annotations raise an oracle error") {
    Trajectory bare = ref;
    bare.segments.clear();
    CHECK_THROWS_AS(failure_oracle(bare, ref), OracleError);
  }
}

TEST_CASE("labeling marks segments overlapping injection-to-event span") {
  SimParams p;
  p.seed = 22;
  Trajectory ref = generate_block_transfer(p);
  FaultSpec spec;
  spec.variable = FaultVariable::GrasperAngle;
  spec.start_fraction = 0.40;  // starts inside G5
  spec.duration_fraction = 0.45;
  spec.target = 1.55;
  spec.theta = 0.005;  // slow ramp so the drop lands in G6
  Trajectory f = inject_grasper_fault(ref, spec);
  auto events = failure_oracle(f, ref);
  REQUIRE_FALSE(events.empty());
  Trajectory labeled = label_erroneous_gestures(f, spec, events);
  std::vector<int> unsafe_ids;
  for (const auto& s : labeled.segments)
    if (s.unsafe) unsafe_ids.push_back(s.gesture_id);
  CHECK(unsafe_ids == std::vector<int>{5, 6});
  CHECK(labeled.fault_onset_ms.has_value());

  SUBCASE("no events, no marking") {
    Trajectory clean = label_erroneous_gestures(f, spec, {});
    for (const auto& s : clean.segments) CHECK_FALSE(s.unsafe);
  }
}

TEST_CASE("campaigns are deterministic and counts stay bounded") {
  SimParams p;
  std::vector<Trajectory> corpus;
  for (int i = 0; i < 3; ++i) {
    p.seed = 100 + i;
    corpus.push_back(generate_block_transfer(p));
  }
  std::vector<CampaignCell> grid(2);
  grid[0].n_runs = 4;
  grid[0].grasper = FaultRange{1.5, 1.6, 0.55, 0.70, 0.0, 0.05, false};
  grid[1].n_runs = 4;
  grid[1].grasper = FaultRange{0.3, 0.4, 0.65, 0.90, 0.0, 0.0, true};
  CampaignResult a = run_campaign(grid, corpus, 9);
  CampaignResult b = run_campaign(grid, corpus, 9);
  REQUIRE(a.counts.size() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(a.counts[c].injections == 4);
    CHECK(a.counts[c].block_drops <= a.counts[c].injections);
    CHECK(a.counts[c].dropoff_failures <= a.counts[c].injections);
    CHECK(a.counts[c].block_drops == b.counts[c].block_drops);
    CHECK(a.counts[c].dropoff_failures == b.counts[c].dropoff_failures);
  }
  const std::string path =
      (std::filesystem::temp_directory_path() / "campaign.csv").string();
  save_campaign_report(a, path);
  CHECK(std::filesystem::file_size(path) > 0);
}

TEST_CASE("dtw threshold calibration is positive") {
  SimParams p;
  std::vector<Trajectory> corpus;
  for (int i = 0; i < 3; ++i) {
    p.seed = 200 + i;
    corpus.push_back(generate_block_transfer(p));
  }
  CHECK(calibrate_dtw_threshold(corpus) > 0.0);
}
