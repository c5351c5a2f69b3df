#include "ctxmon/monitor.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace ctxmon {

using nlohmann::json;

std::string to_string(MonitorMode mode) {
  switch (mode) {
    case MonitorMode::predicted_gestures: return "predicted_gestures";
    case MonitorMode::ground_truth_gestures: return "ground_truth_gestures";
    case MonitorMode::baseline: return "baseline";
  }
  throw ConfigError("unknown monitor mode");
}

MonitorMode monitor_mode_from_string(const std::string& s) {
  if (s == "predicted_gestures") return MonitorMode::predicted_gestures;
  if (s == "ground_truth_gestures") return MonitorMode::ground_truth_gestures;
  if (s == "baseline") return MonitorMode::baseline;
  throw ConfigError("unknown monitor mode: " + s);
}

namespace {

std::vector<double> normalized_row(const KinematicsSample& sample,
                                   const FeatureStats& stats,
                                   const FeatureSubset& subset) {
  std::vector<double> out;
  out.reserve(subset.dim());
  for (int idx : subset.indices()) {
    const double sd = std::max(stats.stddev[idx], 1e-8);
    out.push_back((sample.feature(idx) - stats.mean[idx]) / sd);
  }
  return out;
}

}  // namespace

StreamingMonitor::StreamingMonitor(const DetectorLibrary& library,
                                   MonitorMode mode)
    : library_(library), mode_(mode) {
  if (mode_ == MonitorMode::predicted_gestures) {
    if (!library_.gesture)
      throw ConfigError("predicted-gesture mode needs a stage-1 model");
    stage1_ = library_.gesture->net;
    stage1_->reset_state();
  }
  if (mode_ == MonitorMode::baseline && !library_.baseline)
    throw ConfigError("baseline mode needs a baseline detector");
  if (!library_.baseline && library_.detectors.empty())
    throw ConfigError("detector library is empty");
}

void StreamingMonitor::reset() {
  if (stage1_) stage1_->reset_state();
  window_buf_.clear();
  gesture_buf_.clear();
  sample_index_ = 0;
}

StreamingMonitor::StepOutput StreamingMonitor::push(
    const KinematicsSample& sample, int truth_gesture) {
  const auto start = std::chrono::steady_clock::now();
  StepOutput out;

  if (mode_ == MonitorMode::predicted_gestures) {
    const GestureModel& gm = *library_.gesture;
    std::vector<double> row = normalized_row(sample, gm.stats, gm.subset);
    std::vector<double> probs = stage1_->step(row);
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c)
      if (probs[c] > probs[best]) best = c;
    out.gesture_id = best < gm.vocab.ids.size() ? gm.vocab.ids[best] : -1;
  } else {
    out.gesture_id = truth_gesture;
  }

  window_buf_.push_back(
      normalized_row(sample, library_.stats, library_.subset));
  gesture_buf_.push_back(out.gesture_id);
  const std::size_t w = library_.window.window;
  if (window_buf_.size() > w) {
    window_buf_.pop_front();
    gesture_buf_.pop_front();
  }

  const std::size_t index = sample_index_++;
  if (index == 0) last_context_ = out.gesture_id;
  if (out.gesture_id != last_context_) {
    last_context_ = out.gesture_id;
    last_change_ = index;
  }
  const bool context_settled =
      mode_ == MonitorMode::baseline ||
      index + 1 >= w + last_change_ + library_.context_guard;
  if (context_settled && window_buf_.size() == w && index + 1 >= w &&
      (index + 1 - w) % library_.window.stride == 0) {
    Mat x(w, library_.subset.dim());
    for (std::size_t r = 0; r < w; ++r)
      std::copy(window_buf_[r].begin(), window_buf_[r].end(), x.row(r));
    if (mode_ == MonitorMode::baseline) {
      out.score = library_.baseline->score(x);
      out.provenance = "baseline";
    } else {
      // Route by the gesture at the window's first sample, matching how
      // training windows are assigned; a window straddling a boundary would
      // otherwise be judged by a detector that never saw such content.
      ErrorScore es = score_window(library_, gesture_buf_.front(), x);
      out.score = es.score;
      out.provenance = es.provenance;
    }
    out.evaluated = true;
    out.alert = out.score >= library_.threshold;
  }

  out.latency_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return out;
}

MonitorResult run_monitor(const DetectorLibrary& library,
                          const Trajectory& traj, MonitorMode mode) {
  StreamingMonitor monitor(library, mode);
  std::vector<int> truth = traj.gesture_labels();
  MonitorResult result;
  result.gesture_ids.reserve(traj.size());
  result.scores.reserve(traj.size());
  result.latency_ms.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    auto step = monitor.push(traj.samples[i], truth[i]);
    result.gesture_ids.push_back(step.gesture_id);
    result.scores.push_back(step.evaluated
                                ? step.score
                                : std::numeric_limits<double>::quiet_NaN());
    result.latency_ms.push_back(step.latency_ms);
    if (step.alert)
      result.alerts.push_back({traj.samples[i].timestamp_ms, step.gesture_id,
                               step.score, i, step.provenance});
  }
  return result;
}

std::vector<double> per_segment_max_score(
    const std::vector<double>& scores,
    const std::vector<GestureSegment>& segments, std::size_t window) {
  if (window == 0) throw ConfigError("window must be >= 1");
  std::vector<double> out(segments.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i]) || i + 1 < window) continue;
    const std::size_t start = i + 1 - window;
    for (std::size_t s = 0; s < segments.size(); ++s)
      if (start >= segments[s].start_index && start <= segments[s].end_index) {
        out[s] = std::max(out[s], scores[i]);
        break;
      }
  }
  return out;
}

std::vector<int> gesture_level_aggregate(
    const std::vector<double>& scores,
    const std::vector<GestureSegment>& segments, double threshold,
    std::size_t window) {
  std::vector<double> mx = per_segment_max_score(scores, segments, window);
  std::vector<int> out;
  out.reserve(mx.size());
  for (double m : mx) out.push_back(m >= threshold ? 1 : 0);
  return out;
}

ReactionReport reaction_time(const std::vector<MonitorAlert>& alerts,
                             const Trajectory& traj, std::size_t window) {
  if (window == 0) throw ConfigError("window must be >= 1");
  ReactionReport report;
  double sum = 0.0;
  for (const auto& seg : traj.segments) {
    if (!seg.unsafe) continue;
    const double seg_start = traj.samples[seg.start_index].timestamp_ms;
    const double seg_end = traj.samples[seg.end_index].timestamp_ms;
    double actual = seg_start;
    if (traj.fault_onset_ms)
      actual = std::min(std::max(*traj.fault_onset_ms, seg_start), seg_end);
    const MonitorAlert* first = nullptr;
    for (const auto& a : alerts) {
      if (a.sample_index + 1 < window) continue;
      const std::size_t start = a.sample_index + 1 - window;
      if (start >= seg.start_index && start <= seg.end_index) {
        first = &a;
        break;
      }
    }
    if (!first) {
      ++report.missed;
      continue;
    }
    AlertTiming t{seg.gesture_id, actual, first->detected_t_ms,
                  actual - first->detected_t_ms};
    sum += t.reaction_ms;
    report.timings.push_back(t);
  }
  if (!report.timings.empty()) {
    const double n = double(report.timings.size());
    report.mean_ms = sum / n;
    if (report.timings.size() >= 2) {
      double ss = 0.0;
      for (const auto& t : report.timings) {
        const double d = t.reaction_ms - *report.mean_ms;
        ss += d * d;
      }
      report.stddev_ms = std::sqrt(ss / (n - 1.0));
    }
  }
  return report;
}

std::optional<double> early_detection_pct(const ReactionReport& report) {
  const std::size_t occurrences = report.timings.size() + report.missed;
  if (occurrences == 0) return std::nullopt;
  std::size_t positive = 0;
  for (const auto& t : report.timings)
    if (t.reaction_ms > 0) ++positive;
  return 100.0 * double(positive) / double(occurrences);
}

MonitorReport evaluate_pipeline(const DetectorLibrary& library,
                                const std::vector<Trajectory>& corpus,
                                MonitorMode mode) {
  MonitorReport report;
  report.mode = to_string(mode);
  report.n_demos = corpus.size();

  std::vector<double> seg_scores;
  std::vector<int> seg_labels;
  std::vector<AlertTiming> timings;
  double latency_sum = 0.0;
  std::size_t latency_count = 0;
  double reaction_sum = 0.0;

  for (const auto& traj : corpus) {
    MonitorResult res = run_monitor(library, traj, mode);
    const std::vector<double> mx = per_segment_max_score(
        res.scores, traj.segments, library.window.window);
    for (std::size_t s = 0; s < traj.segments.size(); ++s) {
      const bool truth = traj.segments[s].unsafe;
      const bool pred = mx[s] >= library.threshold;
      ++report.n_gestures;
      if (truth) ++report.n_unsafe_gestures;
      if (truth && pred) ++report.counts.tp;
      if (truth && !pred) ++report.counts.fn;
      if (!truth && pred) ++report.counts.fp;
      if (!truth && !pred) ++report.counts.tn;
      seg_scores.push_back(mx[s]);
      seg_labels.push_back(truth ? 1 : 0);
    }
    ReactionReport rr = reaction_time(res.alerts, traj, library.window.window);
    for (const auto& t : rr.timings) {
      timings.push_back(t);
      reaction_sum += t.reaction_ms;
    }
    report.missed_unsafe += rr.missed;
    for (const auto& a : res.alerts) report.alerts.push_back(a);
    for (double l : res.latency_ms) latency_sum += l;
    latency_count += res.latency_ms.size();
  }

  report.metrics = confusion_metrics(report.counts);
  report.auc = roc_auc(seg_scores, seg_labels).auc;
  if (!timings.empty()) {
    const double n = double(timings.size());
    report.mean_reaction_ms = reaction_sum / n;
    if (timings.size() >= 2) {
      double ss = 0.0;
      for (const auto& t : timings) {
        const double d = t.reaction_ms - *report.mean_reaction_ms;
        ss += d * d;
      }
      report.stddev_reaction_ms = std::sqrt(ss / (n - 1.0));
    }
  }
  ReactionReport pooled;
  pooled.timings = timings;
  pooled.missed = report.missed_unsafe;
  report.early_detection_percent = early_detection_pct(pooled);
  if (latency_count) report.mean_latency_ms = latency_sum / double(latency_count);
  return report;
}

namespace {

json opt_to_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

}  // namespace

void save_monitor_report(const MonitorReport& report, const std::string& path) {
  json j = {{"mode", report.mode},
            {"n_demos", report.n_demos},
            {"n_gestures", report.n_gestures},
            {"n_unsafe_gestures", report.n_unsafe_gestures},
            {"counts",
             {{"tp", report.counts.tp},
              {"fp", report.counts.fp},
              {"tn", report.counts.tn},
              {"fn", report.counts.fn}}},
            {"metrics",
             {{"tpr", opt_to_json(report.metrics.tpr)},
              {"tnr", opt_to_json(report.metrics.tnr)},
              {"ppv", opt_to_json(report.metrics.ppv)},
              {"npv", opt_to_json(report.metrics.npv)},
              {"f1", opt_to_json(report.metrics.f1)}}},
            {"auc", opt_to_json(report.auc)},
            {"mean_reaction_ms", opt_to_json(report.mean_reaction_ms)},
            {"stddev_reaction_ms", opt_to_json(report.stddev_reaction_ms)},
            {"early_detection_percent",
             opt_to_json(report.early_detection_percent)},
            {"missed_unsafe", report.missed_unsafe},
            {"n_alerts", report.alerts.size()}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IntegrityError("cannot write report: " + path);
  out << j.dump(2) << "\n";
}

void save_latency_sidecar(const MonitorReport& report,
                          const std::string& path) {
  json j = {{"mean_latency_ms", report.mean_latency_ms}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IntegrityError("cannot write latency sidecar: " + path);
  out << j.dump(2) << "\n";
}

void save_alert_csv(const std::vector<MonitorAlert>& alerts,
                    const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IntegrityError("cannot write alert log: " + path);
  out << "t_ms,gesture,score\n";
  char buf[64];
  for (const auto& a : alerts) {
    std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g\n", a.detected_t_ms,
                  a.gesture_id, a.score);
    out << buf;
  }
}

namespace {

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

std::string format_report_table(const MonitorReport& report) {
  std::ostringstream os;
  os << "mode: " << report.mode << "\n"
     << "demos: " << report.n_demos << "  gestures: " << report.n_gestures
     << "  unsafe: " << report.n_unsafe_gestures << "\n"
     << "F1 " << fmt_opt(report.metrics.f1) << "  AUC " << fmt_opt(report.auc)
     << "  TPR " << fmt_opt(report.metrics.tpr) << "  TNR "
     << fmt_opt(report.metrics.tnr) << "  PPV " << fmt_opt(report.metrics.ppv)
     << "  NPV " << fmt_opt(report.metrics.npv) << "\n"
     << "avg react (ms) " << fmt_opt(report.mean_reaction_ms) << " +- "
     << fmt_opt(report.stddev_reaction_ms) << "  early % "
     << fmt_opt(report.early_detection_percent) << "  missed "
     << report.missed_unsafe << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", report.mean_latency_ms);
  os << "mean compute (ms) " << buf << "\n";
  return os.str();
}

}  // namespace ctxmon
