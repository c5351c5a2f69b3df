#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctxmon/kinematics.hpp"
#include "ctxmon/nn/models.hpp"
#include "ctxmon/task_model.hpp"

namespace ctxmon {

using Mat = nn::Mat;

// --- LOSO folds ------------------------------------------------------------

struct LosoFold {
  std::string group;  // held-out super-trial / operator
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

// One fold per distinct trajectory group; throws ConfigError when the corpus
// has fewer than two groups or a trajectory has no group id.
std::vector<LosoFold> make_loso_folds(const std::vector<Trajectory>& corpus);

// --- Stage 1: gesture classifier -------------------------------------------

struct GestureModel {
  nn::SequenceClassifier net;
  FeatureSubset subset;
  FeatureStats stats;  // z-score normalization fitted on the training corpus
  GestureVocabulary vocab;
};

struct GestureTrainOptions {
  nn::SequenceClassifierConfig model;  // input_dim is overridden by the subset
  nn::TrainConfig train;
  FeatureSubset subset = FeatureSubset::all();
  std::size_t chunk_len = 64;  // truncated-BPTT chunk, in samples
  double val_fraction = 0.2;   // trajectories held out for early stopping
};

GestureModel train_gesture_model(const std::vector<Trajectory>& train_corpus,
                                 const GestureTrainOptions& opts,
                                 const GestureVocabulary& vocab);

// Stateful pass from a reset recurrent state; one probability row per sample.
Mat predict_gesture_stream(const GestureModel& model, const Trajectory& traj);

// argmax row -> gesture id via the vocabulary (-1 for out-of-vocabulary bins).
std::vector<int> predicted_gesture_ids(const Mat& probs,
                                       const GestureVocabulary& vocab);

double gesture_accuracy(const GestureModel& model,
                        const std::vector<Trajectory>& test_corpus);

struct GestureFoldReport {
  std::string group;
  double accuracy = 0.0;
};

struct GestureLosoResult {
  std::vector<GestureFoldReport> folds;
  double mean_accuracy = 0.0;
  GestureModel final_model;  // trained on the full corpus
};

GestureLosoResult train_gesture_classifier(
    const std::vector<Trajectory>& corpus, const GestureTrainOptions& opts,
    const GestureVocabulary& vocab);

// --- Boundary extraction and jitter ----------------------------------------

struct PredictedSegment {
  int gesture_id = -1;
  std::size_t start_index = 0;
  std::size_t end_index = 0;  // inclusive
  double detected_t_ms = 0.0;
};

// A new segment opens at the first sample whose label differs from the
// current segment and persists for >= k consecutive samples; shorter runs are
// absorbed into the enclosing segment.
std::vector<PredictedSegment> segment_predictions(
    const std::vector<int>& labels, const std::vector<double>& timestamps_ms,
    std::size_t persistence_k);

struct JitterEntry {
  int gesture_id = -1;
  double jitter_ms = 0.0;  // truth onset - detected onset; positive = early
};

struct JitterReport {
  std::vector<JitterEntry> matched;
  std::size_t unmatched_truth = 0;
  std::optional<double> mean_abs_ms;
  std::optional<double> mean_ms;
};

JitterReport compute_jitter(const std::vector<PredictedSegment>& predicted,
                            const std::vector<GestureSegment>& truth,
                            const std::vector<double>& timestamps_ms);

// --- Stage 2: per-gesture error detectors -----------------------------------

struct Detector {
  nn::WindowClassifier net;
  bool degenerate = false;  // trained without any unsafe windows
  std::size_t n_train_windows = 0;
};

struct DetectorLibrary {
  GestureVocabulary vocab;
  std::optional<GestureModel> gesture;  // stage-1 model, when bundled
  FeatureSubset subset = FeatureSubset::all();
  SlidingWindowSpec window{10, 1};
  FeatureStats stats;
  double threshold = 0.5;
  std::size_t min_samples = 50;
  // Windows are scored only once their gesture context has persisted this
  // many samples. Detectors are specialists: right after a context switch the
  // trailing window still holds the previous gesture's motion, and with
  // predicted gestures the switch itself can run early by a dozen samples,
  // either of which hands a specialist content it was never trained to judge.
  std::size_t context_guard = 30;
  std::map<int, Detector> detectors;  // keyed by gesture id
  std::optional<nn::WindowClassifier> baseline;

  // "G<k>" when the gesture's own detector serves, "baseline" otherwise.
  std::string route(int gesture_id) const;
};

struct DetectorTrainOptions {
  nn::WindowClassifierConfig model;  // input_dim/window overridden
  nn::TrainConfig train;
  FeatureSubset subset = FeatureSubset::all();
  SlidingWindowSpec window{10, 1};
  std::size_t min_samples = 50;
  double val_fraction = 0.2;  // windows held out for early stopping
};

// Labeled, windowed training item.
struct LabeledWindow {
  int gesture_id = -1;
  int unsafe = 0;
  std::size_t start_index = 0;
  std::size_t demo = 0;  // source trajectory, used for validation splits
  Mat features;          // [w x subset dim], normalized
};

// Window label and gesture come from the segment containing the start index.
std::vector<LabeledWindow> extract_labeled_windows(
    const Trajectory& normalized, const SlidingWindowSpec& spec,
    const FeatureSubset& subset);

DetectorLibrary train_error_detectors(const std::vector<Trajectory>& corpus,
                                      const DetectorTrainOptions& opts,
                                      const GestureVocabulary& vocab);

nn::WindowClassifier train_baseline_detector(
    const std::vector<LabeledWindow>& windows, const DetectorTrainOptions& opts,
    std::uint64_t seed);

struct ErrorScore {
  double score = 0.0;        // p(erroneous | gesture, window), in [0,1]
  std::string provenance;    // which detector produced it
};

// `window` is a normalized [w x subset dim] matrix.
ErrorScore score_window(const DetectorLibrary& library, int gesture_id,
                        const Mat& window);

// --- Persistence ------------------------------------------------------------

void save_gesture_model(const GestureModel& model, const std::string& dir);
GestureModel load_gesture_model(const std::string& dir);

// Directory layout: manifest.json + one model bundle per detector.
void save_detector_library(const DetectorLibrary& library,
                           const std::string& dir);
DetectorLibrary load_detector_library(const std::string& dir);

}  // namespace ctxmon
