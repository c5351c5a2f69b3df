#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ctxmon/common.hpp"

namespace ctxmon {

inline constexpr int kFeaturesPerArm = 19;
inline constexpr int kTotalFeatures = 38;

// One manipulator state: Cartesian position (3), rotation matrix (9,
// row-major), grasper angle (1), linear velocity (3), angular velocity (3).
struct ArmState {
  std::array<double, 3> position{};
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  double grasper_angle = 0.0;
  std::array<double, 3> linear_velocity{};
  std::array<double, 3> angular_velocity{};

  // Fixed feature order: position, rotation row-major, grasper, linear
  // velocity, angular velocity.
  double feature(int i) const;
  void set_feature(int i, double v);
};

struct KinematicsSample {
  double timestamp_ms = 0.0;
  ArmState left;
  ArmState right;

  // Global feature index in [0, 38): left arm first, then right.
  double feature(int i) const;
  void set_feature(int i, double v);
};

struct GestureSegment {
  int gesture_id = 0;
  std::size_t start_index = 0;  // inclusive
  std::size_t end_index = 0;    // inclusive
  bool unsafe = false;
  std::vector<std::string> error_codes;
};

enum class TrajectorySource { jigsaws, synthetic };

struct Trajectory {
  std::vector<KinematicsSample> samples;
  double sample_rate_hz = 30.0;
  std::vector<GestureSegment> segments;
  TrajectorySource source = TrajectorySource::synthetic;
  std::string length_unit = "mm";
  std::string group;  // super-trial / operator group id for LOSO splits

  // Set when the trajectory went through fault injection; the onset feeds the
  // reaction-time metric, and the pair brackets the perturbed samples for
  // training-window labeling.
  std::optional<double> fault_onset_ms;
  std::optional<double> fault_end_ms;

  std::size_t size() const { return samples.size(); }
  double duration_ms() const {
    return samples.empty() ? 0.0 : samples.back().timestamp_ms;
  }
  // Segment containing a sample index (inclusive ends), or nullptr.
  const GestureSegment* segment_at(std::size_t sample_index) const;
  // Gesture id per sample, -1 for unsegmented samples.
  std::vector<int> gesture_labels() const;

  // Throws StructuralError on non-monotone timestamps or bad segments.
  void validate() const;
};

struct SlidingWindowSpec {
  std::size_t window = 1;  // w, in samples
  std::size_t stride = 1;  // s, in samples
};

// Feature projections. CRG = Cartesian + Rotation + Grasper (13 per arm),
// CG = Cartesian + Grasper (4 per arm).
class FeatureSubset {
 public:
  static FeatureSubset all();
  static FeatureSubset crg();
  static FeatureSubset cg();
  static FeatureSubset grasper();
  static FeatureSubset custom(std::vector<int> indices);

  const std::vector<int>& indices() const { return indices_; }
  std::size_t dim() const { return indices_.size(); }
  const std::string& name() const { return name_; }

  static FeatureSubset from_name(const std::string& name);

 private:
  FeatureSubset(std::string name, std::vector<int> indices);
  std::string name_;
  std::vector<int> indices_;
};

std::vector<double> select_features(const KinematicsSample& sample,
                                    const FeatureSubset& subset);

struct Window {
  std::size_t start_index = 0;
  std::vector<double> features;  // w * |subset|, time-major
};

// floor((T - w) / s) + 1 windows; empty when T < w.
std::vector<Window> windows(const Trajectory& traj,
                            const SlidingWindowSpec& spec,
                            const FeatureSubset& subset);

struct FeatureStats {
  std::vector<double> mean;  // per feature, size 38
  std::vector<double> stddev;
};

FeatureStats compute_feature_stats(const std::vector<Trajectory>& corpus);

// (x - mu) / max(sigma, 1e-8), applied in place.
void zscore_normalize(std::vector<Trajectory>& corpus,
                      const FeatureStats& stats);
void zscore_normalize(Trajectory& traj, const FeatureStats& stats);

// --- Persistence -----------------------------------------------------------

enum class TrajectoryFormat { csv, jigsaws };

struct LoadOptions {
  double sample_rate_hz = 30.0;  // used when no timestamp column is present
  // For jigsaws rows: first column of the 38-feature block (0-based).
  // Default 38 skips the master-side console columns.
  int jigsaws_column_offset = 38;
  std::optional<std::string> transcription_path;  // "<start> <end> G<k>" lines
};

Trajectory load_trajectory(const std::string& path, TrajectoryFormat format,
                           const LoadOptions& opts = {});

// Canonical CSV: header t_ms,L_px,...,R_wz,gesture,unsafe; %.17g floats so
// save/load round-trips bit-exactly. A sidecar <path>.meta.json carries
// sample rate, source, group and fault metadata.
void save_trajectory_csv(const Trajectory& traj, const std::string& path);

std::vector<GestureSegment> parse_transcription(const std::string& path);

// Rebuilds the segment list from per-sample (gesture, unsafe) labels.
std::vector<GestureSegment> segments_from_labels(
    const std::vector<int>& gesture, const std::vector<int>& unsafe);

}  // namespace ctxmon
