#include "ctxmon/fault.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

namespace ctxmon {

void FaultSpec::validate() const {
  if (start_fraction < 0 || duration_fraction <= 0 ||
      start_fraction + duration_fraction > 1.0 + 1e-12)
    throw InjectionError("fault window outside trajectory");
  if (variable == FaultVariable::GrasperAngle && theta <= 0)
    throw InjectionError("grasper ramp theta must be > 0");
  if (variable == FaultVariable::CartesianPosition && target < 0)
    throw InjectionError("cartesian deviation must be >= 0");
}

namespace {

struct WindowIdx {
  std::size_t begin;  // first faulted sample
  std::size_t end;    // one past the last faulted sample
};

WindowIdx fault_window(const Trajectory& traj, const FaultSpec& spec) {
  spec.validate();
  const std::size_t t = traj.size();
  if (t == 0) throw InjectionError("empty trajectory");
  std::size_t begin = std::size_t(std::llround(spec.start_fraction * double(t)));
  std::size_t len = std::size_t(std::llround(spec.duration_fraction * double(t)));
  if (len == 0) len = 1;
  if (begin >= t) throw InjectionError("fault window outside trajectory");
  return {begin, std::min(begin + len, t)};
}

ArmState& arm_of(KinematicsSample& s, Arm arm) {
  return arm == Arm::left ? s.left : s.right;
}
const ArmState& arm_of(const KinematicsSample& s, Arm arm) {
  return arm == Arm::left ? s.left : s.right;
}

}  // namespace

Trajectory inject_grasper_fault(const Trajectory& traj, const FaultSpec& spec) {
  if (spec.variable != FaultVariable::GrasperAngle)
    throw InjectionError("spec is not a grasper fault");
  const WindowIdx w = fault_window(traj, spec);
  Trajectory out = traj;
  const double s0 = arm_of(traj.samples[w.begin], spec.arm).grasper_angle;
  const double sign = spec.target >= s0 ? 1.0 : -1.0;
  for (std::size_t i = w.begin; i < w.end; ++i) {
    double v = s0 + sign * spec.theta * double(i - w.begin);
    if ((sign > 0 && v > spec.target) || (sign < 0 && v < spec.target))
      v = spec.target;
    arm_of(out.samples[i], spec.arm).grasper_angle = v;
  }
  return out;
}

Trajectory inject_cartesian_fault(const Trajectory& traj,
                                  const FaultSpec& spec) {
  if (spec.variable != FaultVariable::CartesianPosition)
    throw InjectionError("spec is not a cartesian fault");
  const WindowIdx w = fault_window(traj, spec);
  Trajectory out = traj;
  const double per_axis = spec.target / std::sqrt(3.0);
  const std::size_t n = w.end - w.begin;
  for (std::size_t i = w.begin; i < w.end; ++i) {
    const double u = n == 1 ? 1.0 : double(i - w.begin) / double(n - 1);
    auto& arm = arm_of(out.samples[i], spec.arm);
    for (int a = 0; a < 3; ++a) arm.position[a] += per_axis * u;
  }
  return out;
}

double dtw_distance(const std::vector<std::vector<double>>& a,
                    const std::vector<std::vector<double>>& b) {
  if (a.empty() || b.empty()) throw MonitorError("dtw on empty sequence");
  const std::size_t n = a.size(), m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  auto cost = [&](std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      const double d = a[i][k] - b[j][k];
      s += d * d;
    }
    return std::sqrt(s);
  };
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j)
      cur[j] = cost(i - 1, j - 1) +
               std::min({prev[j], cur[j - 1], prev[j - 1]});
    std::swap(prev, cur);
  }
  return prev[m];
}

namespace {

// Right-arm position trace over G11 plus margin.
std::vector<std::vector<double>> drop_region_trace(const Trajectory& traj,
                                                   std::size_t margin) {
  const GestureSegment* g11 = nullptr;
  for (const auto& s : traj.segments)
    if (s.gesture_id == 11) g11 = &s;
  if (!g11) throw OracleError("trajectory has no G11 segment");
  const std::size_t begin = g11->start_index > margin
                                ? g11->start_index - margin
                                : 0;
  const std::size_t end = std::min(traj.size() - 1, g11->end_index + margin);
  std::vector<std::vector<double>> out;
  for (std::size_t i = begin; i <= end; ++i) {
    const auto& p = traj.samples[i].right.position;
    out.push_back({p[0], p[1], p[2]});
  }
  return out;
}

}  // namespace

std::vector<FailureEvent> failure_oracle(const Trajectory& faulted,
                                         const Trajectory& reference,
                                         const OracleParams& params) {
  if (faulted.segments.empty())
    throw OracleError("faulted trajectory has no gesture annotations");
  std::vector<FailureEvent> events;

  // Block drop: grasper opens past the drop threshold while carrying.
  for (const auto& seg : faulted.segments) {
    if (seg.gesture_id != 5 && seg.gesture_id != 6) continue;
    bool found = false;
    for (std::size_t i = seg.start_index; i <= seg.end_index; ++i) {
      if (faulted.samples[i].right.grasper_angle >
          params.blockdrop_grasper_rad) {
        events.push_back({FailureKind::BlockDrop,
                          faulted.samples[i].timestamp_ms, seg.gesture_id});
        found = true;
        break;
      }
    }
    if (found) break;
  }

  // Dropoff failure: the grasper never released during G11, or the
  // end-effector trace deviates badly from the reference around the drop.
  const GestureSegment* g11 = nullptr;
  for (const auto& seg : faulted.segments)
    if (seg.gesture_id == 11) g11 = &seg;
  if (g11) {
    double max_grasp = -std::numeric_limits<double>::infinity();
    for (std::size_t i = g11->start_index; i <= g11->end_index; ++i)
      max_grasp =
          std::max(max_grasp, faulted.samples[i].right.grasper_angle);
    bool dropoff = max_grasp <= params.release_grasper_rad;
    if (!dropoff && std::isfinite(params.dtw_threshold)) {
      const double dev =
          dtw_distance(drop_region_trace(faulted, params.dtw_margin_samples),
                       drop_region_trace(reference, params.dtw_margin_samples));
      dropoff = dev > params.dtw_threshold;
    }
    if (dropoff)
      events.push_back({FailureKind::DropoffFailure,
                        faulted.samples[g11->end_index].timestamp_ms, 11});
  }
  return events;
}

double calibrate_dtw_threshold(const std::vector<Trajectory>& fault_free,
                               std::size_t margin_samples) {
  double max_d = 0.0;
  for (std::size_t i = 0; i < fault_free.size(); ++i)
    for (std::size_t j = i + 1; j < fault_free.size(); ++j)
      max_d = std::max(
          max_d, dtw_distance(drop_region_trace(fault_free[i], margin_samples),
                              drop_region_trace(fault_free[j], margin_samples)));
  return 5.0 * max_d;
}

Trajectory label_erroneous_gestures(const Trajectory& traj,
                                    const FaultSpec& spec,
                                    const std::vector<FailureEvent>& events,
                                    std::optional<double> onset_ms) {
  Trajectory out = traj;
  if (events.empty()) return out;
  const WindowIdx w = fault_window(traj, spec);
  const double start_ms =
      onset_ms.value_or(traj.samples[w.begin].timestamp_ms);
  double latest_ms = start_ms;
  for (const auto& e : events) latest_ms = std::max(latest_ms, e.timestamp_ms);
  for (auto& seg : out.segments) {
    const double seg_start = traj.samples[seg.start_index].timestamp_ms;
    const double seg_end = traj.samples[seg.end_index].timestamp_ms;
    if (seg_start <= latest_ms && seg_end >= start_ms) seg.unsafe = true;
  }
  out.fault_onset_ms = start_ms;
  out.fault_end_ms = traj.samples[w.end - 1].timestamp_ms;
  return out;
}

CampaignResult run_campaign(const std::vector<CampaignCell>& grid,
                            const std::vector<Trajectory>& fault_free_corpus,
                            std::uint64_t seed,
                            const OracleParams& oracle) {
  if (fault_free_corpus.empty() && !grid.empty())
    throw StructuralError("fault-free corpus is empty");
  CampaignResult result;
  result.cells = grid;
  result.counts.assign(grid.size(), {});

  for (std::size_t c = 0; c < grid.size(); ++c) {
    const auto& cell = grid[c];
    for (std::size_t r = 0; r < cell.n_runs; ++r) {
      const std::uint64_t run_seed =
          derive_seed(seed, "campaign", c * 100003 + r);
      std::mt19937_64 rng(run_seed);
      std::uniform_real_distribution<double> u01(0.0, 1.0);

      CampaignRun run;
      run.cell_index = c;
      run.run_index = r;
      run.seed = run_seed;
      run.corpus_index = std::size_t(u01(rng) * double(fault_free_corpus.size())) %
                         fault_free_corpus.size();
      const Trajectory& ref = fault_free_corpus[run.corpus_index];

      Trajectory faulted = ref;
      auto draw_spec = [&](const FaultRange& fr, FaultVariable var) {
        FaultSpec spec;
        spec.variable = var;
        spec.theta = cell.theta;
        spec.target = fr.target_lo + (fr.target_hi - fr.target_lo) * u01(rng);
        spec.duration_fraction =
            fr.duration_lo + (fr.duration_hi - fr.duration_lo) * u01(rng);
        if (fr.align_end) {
          spec.start_fraction = 1.0 - spec.duration_fraction;
        } else {
          const double hi =
              std::min(fr.start_hi, 1.0 - spec.duration_fraction);
          const double lo = std::min(fr.start_lo, hi);
          spec.start_fraction = lo + (hi - lo) * u01(rng);
        }
        return spec;
      };

      if (cell.grasper) {
        FaultSpec spec = draw_spec(*cell.grasper, FaultVariable::GrasperAngle);
        faulted = inject_grasper_fault(faulted, spec);
        run.specs.push_back(spec);
      }
      if (cell.cartesian) {
        FaultSpec spec =
            draw_spec(*cell.cartesian, FaultVariable::CartesianPosition);
        faulted = inject_cartesian_fault(faulted, spec);
        run.specs.push_back(spec);
      }

      run.events = failure_oracle(faulted, ref, oracle);
      // Label against the earliest injection window.
      const FaultSpec* first = nullptr;
      for (const auto& s : run.specs)
        if (!first || s.start_fraction < first->start_fraction) first = &s;
      run.labeled = first ? label_erroneous_gestures(faulted, *first, run.events)
                          : faulted;

      auto& cc = result.counts[c];
      cc.injections += 1;
      for (const auto& e : run.events) {
        if (e.kind == FailureKind::BlockDrop) cc.block_drops += 1;
        if (e.kind == FailureKind::DropoffFailure) cc.dropoff_failures += 1;
      }
      result.runs.push_back(std::move(run));
    }
  }
  // Order independence: runs sorted by (cell, run) id before reporting.
  std::sort(result.runs.begin(), result.runs.end(),
            [](const CampaignRun& a, const CampaignRun& b) {
              return std::tie(a.cell_index, a.run_index) <
                     std::tie(b.cell_index, b.run_index);
            });
  return result;
}

void save_campaign_report(const CampaignResult& result,
                          const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StructuralError("cannot open for write: " + path);
  f << "grasper_lo,grasper_hi,dur_lo,dur_hi,cart_lo,cart_hi,"
       "n_injections,n_blockdrop,n_dropoff\n";
  char buf[256];
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const auto& cell = result.cells[c];
    const auto& cc = result.counts[c];
    const FaultRange g = cell.grasper.value_or(FaultRange{});
    const FaultRange x = cell.cartesian.value_or(FaultRange{});
    const double gd_lo = cell.grasper ? g.duration_lo : x.duration_lo;
    const double gd_hi = cell.grasper ? g.duration_hi : x.duration_hi;
    std::snprintf(buf, sizeof buf, "%g,%g,%g,%g,%g,%g,%zu,%zu,%zu\n",
                  g.target_lo, g.target_hi, gd_lo, gd_hi, x.target_lo,
                  x.target_hi, cc.injections, cc.block_drops,
                  cc.dropoff_failures);
    f << buf;
  }
}

}  // namespace ctxmon
