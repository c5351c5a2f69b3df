#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ctxmon/kinematics.hpp"

namespace ctxmon {

enum class FaultVariable { GrasperAngle, CartesianPosition };
enum class Arm { left, right };

struct FaultSpec {
  FaultVariable variable = FaultVariable::GrasperAngle;
  double start_fraction = 0.0;     // fraction of trajectory where it begins
  double duration_fraction = 0.0;  // D, fraction of trajectory
  double target = 0.0;             // S' (rad) for grasper, delta for Cartesian
  double theta = 0.005;            // rad per sample, grasper ramp
  Arm arm = Arm::right;

  void validate() const;
};

enum class FailureKind { BlockDrop, DropoffFailure };

struct FailureEvent {
  FailureKind kind;
  double timestamp_ms;
  int gesture_id;
};

// Grasper ramp: from the window start, the angle moves from its original
// value toward S' by theta per sample, holds S' once reached, and resumes the
// original signal after the window. Samples outside the window stay
// bit-identical.
Trajectory inject_grasper_fault(const Trajectory& traj, const FaultSpec& spec);

// Cartesian ramp: each axis of the target arm receives a linear ramp totaling
// delta/sqrt(3) across the window, so the Euclidean deviation at the window
// end equals delta.
Trajectory inject_cartesian_fault(const Trajectory& traj,
                                  const FaultSpec& spec);

// Classic DTW with Euclidean point cost, full window.
double dtw_distance(const std::vector<std::vector<double>>& a,
                    const std::vector<std::vector<double>>& b);

struct OracleParams {
  double blockdrop_grasper_rad = 0.8;  // drop when exceeded while carrying
  double release_grasper_rad = 1.0;    // must be exceeded in G11 to release
  // Dropoff also triggers when the end-effector trace around the drop point
  // deviates from the reference by more than this DTW cost; +inf disables.
  double dtw_threshold = std::numeric_limits<double>::infinity();
  std::size_t dtw_margin_samples = 20;  // extra context around G11
};

// Deterministic kinematic failure oracle. BlockDrop: first carry-phase
// (G5/G6) sample whose grasper angle exceeds the drop threshold. Dropoff: at
// the end of G11 when the grasper never opened past the release threshold, or
// when the end-effector trace deviates from the reference. At most one event
// per kind.
std::vector<FailureEvent> failure_oracle(const Trajectory& faulted,
                                         const Trajectory& reference,
                                         const OracleParams& params = {});

// 5x the max pairwise DTW of G11-region end-effector traces over fault-free
// demonstrations.
double calibrate_dtw_threshold(const std::vector<Trajectory>& fault_free,
                               std::size_t margin_samples = 20);

// Marks every gesture segment overlapping [onset, latest event] unsafe; no
// events, no marking. Also records the onset and window-end times. Onset
// defaults to the injection window start; callers that can compare against
// the fault-free reference pass the first observable deviation instead, so a
// clamp that idles at values the nominal schedule produces anyway does not
// mark untouched segments.
Trajectory label_erroneous_gestures(
    const Trajectory& traj, const FaultSpec& spec,
    const std::vector<FailureEvent>& events,
    std::optional<double> onset_ms = std::nullopt);

// --- Campaigns -------------------------------------------------------------

struct FaultRange {
  double target_lo = 0.0, target_hi = 0.0;
  double duration_lo = 0.0, duration_hi = 0.0;
  // Injection start: uniform in [start_lo, min(start_hi, 1-D)]; when
  // align_end is set the window is placed so it ends at the trajectory end.
  double start_lo = 0.0, start_hi = 1.0;
  bool align_end = false;
};

struct CampaignCell {
  std::size_t n_runs = 0;
  std::optional<FaultRange> grasper;
  std::optional<FaultRange> cartesian;
  double theta = 0.005;
};

struct CampaignRun {
  std::size_t cell_index = 0;
  std::size_t run_index = 0;
  std::uint64_t seed = 0;
  std::vector<FaultSpec> specs;
  std::vector<FailureEvent> events;
  Trajectory labeled;
  std::size_t corpus_index = 0;
};

struct CampaignCellCounts {
  std::size_t injections = 0;
  std::size_t block_drops = 0;
  std::size_t dropoff_failures = 0;
};

struct CampaignResult {
  std::vector<CampaignCell> cells;
  std::vector<CampaignCellCounts> counts;
  std::vector<CampaignRun> runs;
};

CampaignResult run_campaign(const std::vector<CampaignCell>& grid,
                            const std::vector<Trajectory>& fault_free_corpus,
                            std::uint64_t seed,
                            const OracleParams& oracle = {});

// Table-III-shaped CSV report: one row per cell with ranges and counts.
void save_campaign_report(const CampaignResult& result,
                          const std::string& path);

}  // namespace ctxmon
