#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "ctxmon/classifiers.hpp"
#include "ctxmon/metrics.hpp"

namespace ctxmon {

enum class MonitorMode { predicted_gestures, ground_truth_gestures, baseline };

std::string to_string(MonitorMode mode);
MonitorMode monitor_mode_from_string(const std::string& s);

struct MonitorAlert {
  double detected_t_ms = 0.0;
  int gesture_id = -1;  // context used for routing at alert time
  double score = 0.0;
  std::size_t sample_index = 0;
  std::string provenance;
};

// Sample-at-a-time monitor. Stage 1 runs statefully; stage 2 scores the
// trailing window ending at the current sample, so nothing looks ahead.
class StreamingMonitor {
 public:
  StreamingMonitor(const DetectorLibrary& library, MonitorMode mode);

  struct StepOutput {
    int gesture_id = -1;
    double score = 0.0;
    bool evaluated = false;  // a full window ended at this sample
    bool alert = false;
    std::string provenance;
    double latency_ms = 0.0;  // wall clock, excluded from reports
  };

  // `truth_gesture` is consulted only in ground_truth_gestures mode.
  StepOutput push(const KinematicsSample& sample, int truth_gesture = -1);
  void reset();

 private:
  const DetectorLibrary& library_;
  MonitorMode mode_;
  std::optional<nn::SequenceClassifier> stage1_;  // private stateful copy
  std::deque<std::vector<double>> window_buf_;    // stage-2 normalized rows
  std::deque<int> gesture_buf_;  // gesture context per buffered row
  std::size_t sample_index_ = 0;
  int last_context_ = -1;
  std::size_t last_change_ = 0;  // sample index of the last context switch
};

struct MonitorResult {
  std::vector<MonitorAlert> alerts;
  std::vector<int> gesture_ids;     // per sample, context used for routing
  std::vector<double> scores;       // per sample; NaN when not evaluated
  std::vector<double> latency_ms;   // per sample wall clock
};

MonitorResult run_monitor(const DetectorLibrary& library,
                          const Trajectory& traj,
                          MonitorMode mode = MonitorMode::predicted_gestures);

// A gesture segment is predicted unsafe iff any of its samples scores at or
// above the threshold. NaN scores never trigger. The score recorded at
// sample i describes the window of the trailing `window` samples and is
// routed by the gesture at the window's first sample, so with window > 1
// each score is attributed to the segment containing index i + 1 - window.
std::vector<int> gesture_level_aggregate(const std::vector<double>& scores,
                                         const std::vector<GestureSegment>& segments,
                                         double threshold,
                                         std::size_t window = 1);

// Max attributed score per segment (same attribution rule); NaN-free, 0 when
// a segment has no evaluated windows.
std::vector<double> per_segment_max_score(
    const std::vector<double>& scores,
    const std::vector<GestureSegment>& segments, std::size_t window = 1);

struct AlertTiming {
  int gesture_id = -1;
  double actual_t_ms = 0.0;
  double detected_t_ms = 0.0;
  double reaction_ms = 0.0;  // actual - detected; positive = early
};

struct ReactionReport {
  std::vector<AlertTiming> timings;  // at most one per unsafe gesture
  std::size_t missed = 0;            // unsafe gestures with no alert
  std::optional<double> mean_ms, stddev_ms;
};

// actual_t = fault onset clipped into the unsafe segment's span when the
// trajectory records one, otherwise the segment onset. Alerts match an
// unsafe segment by the start of the window that raised them (see
// gesture_level_aggregate).
ReactionReport reaction_time(const std::vector<MonitorAlert>& alerts,
                             const Trajectory& traj, std::size_t window = 1);

// 100 x positives / unsafe occurrences (matched + missed); absent when there
// are no unsafe occurrences.
std::optional<double> early_detection_pct(const ReactionReport& report);

struct MonitorReport {
  std::string mode;
  std::size_t n_demos = 0;
  std::size_t n_gestures = 0;
  std::size_t n_unsafe_gestures = 0;
  ConfusionCounts counts;  // gesture level
  ConfusionMetrics metrics;
  std::optional<double> auc;  // gesture-level score sweep
  std::optional<double> mean_reaction_ms, stddev_reaction_ms;
  std::optional<double> early_detection_percent;
  std::size_t missed_unsafe = 0;
  std::vector<MonitorAlert> alerts;  // pooled, demo-offset timestamps
  double mean_latency_ms = 0.0;      // wall clock; kept out of the report file
};

MonitorReport evaluate_pipeline(const DetectorLibrary& library,
                                const std::vector<Trajectory>& corpus,
                                MonitorMode mode);

// Deterministic JSON (latency excluded) plus a human-readable table.
void save_monitor_report(const MonitorReport& report, const std::string& path);
// Wall-clock sidecar, separate so the main report stays byte-stable.
void save_latency_sidecar(const MonitorReport& report, const std::string& path);
// Alert log CSV: t_ms,gesture,score.
void save_alert_csv(const std::vector<MonitorAlert>& alerts,
                    const std::string& path);
std::string format_report_table(const MonitorReport& report);

}  // namespace ctxmon
