#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctxmon/nn/layers.hpp"
#include "ctxmon/nn/train.hpp"

namespace ctxmon::nn {

// ---------------------------------------------------------------------------
// Gesture sequence classifier: stacked LSTM -> FC(ReLU) -> FC -> softmax,
// applied per timestep. Streaming inference keeps LSTM state across calls.

struct SequenceClassifierConfig {
  std::size_t input_dim = 38;
  std::vector<std::size_t> lstm_units = {64, 32};
  std::size_t fc_units = 32;
  std::size_t n_classes = 15;
  double dropout = 0.0;
  std::uint64_t seed = 0;
};

class SequenceClassifier {
 public:
  explicit SequenceClassifier(const SequenceClassifierConfig& config);

  const SequenceClassifierConfig& config() const { return config_; }
  std::vector<Param*> params();

  // Training pass over one (sub)sequence: mean per-timestep cross-entropy,
  // gradients accumulated. label < 0 masks the timestep out of the loss.
  double sequence_loss_and_grad(const Mat& x, const std::vector<int>& labels,
                                std::mt19937_64* dropout_rng = nullptr);

  // Whole-sequence inference from zero state: per-timestep class probs.
  Mat predict_sequence(const Mat& x) const;

  // Streaming inference with persistent state.
  void reset_state();
  std::vector<double> step(const std::vector<double>& features);

 private:
  SequenceClassifierConfig config_;
  std::mt19937_64 rng_;
  std::vector<LSTMLayer> lstm_;
  Dense fc1_;
  Dense fc2_;
  Dropout drop_;

  friend struct BundleAccess;
};

// ---------------------------------------------------------------------------
// Windowed anomaly detector: Conv1d stack (optional batch norm) -> flatten ->
// FC(ReLU) -> FC(1) -> sigmoid over fixed-length kinematic windows.

struct ConvSpec {
  std::size_t channels = 16;
  std::size_t kernel = 3;
};

struct WindowClassifierConfig {
  std::size_t input_dim = 38;
  std::size_t window = 10;
  std::vector<ConvSpec> conv = {{16, 3}, {16, 3}};
  bool batch_norm = true;
  std::size_t fc_units = 32;
  double dropout = 0.0;
  std::uint64_t seed = 0;
};

class WindowClassifier {
 public:
  explicit WindowClassifier(const WindowClassifierConfig& config);

  const WindowClassifierConfig& config() const { return config_; }
  std::vector<Param*> params();

  // Mean BCE over a mini-batch of windows; gradients accumulated. Batch norm
  // requires at least two windows per batch in training mode.
  double batch_loss_and_grad(const std::vector<Mat>& windows,
                             const std::vector<int>& labels,
                             std::mt19937_64* dropout_rng = nullptr);

  // Anomaly probability for one window (inference statistics).
  double score(const Mat& window) const;
  double logit(const Mat& window) const;

  // Batch-norm running statistics, flattened; empty without batch norm.
  // Checkpointing code must carry these alongside the weights.
  std::vector<double> norm_state() const;
  void set_norm_state(const std::vector<double>& state);

 private:
  WindowClassifierConfig config_;
  std::mt19937_64 rng_;
  std::vector<Conv1d> conv_;
  std::vector<BatchNorm1d> bn_;
  std::size_t flat_dim_ = 0;
  Dense fc1_;
  Dense fc2_;
  Dropout drop_;
  std::vector<std::vector<Mat>> relu_out_;

  friend struct BundleAccess;
};

// ---------------------------------------------------------------------------
// Versioned, checksummed binary bundle: magic, format version, JSON header
// describing the model kind and config, raw little-endian doubles for every
// parameter (and batch-norm running statistics), trailing FNV-1a checksum.

void save_sequence_classifier(const std::string& path,
                              const SequenceClassifier& model);
SequenceClassifier load_sequence_classifier(const std::string& path);

void save_window_classifier(const std::string& path,
                            const WindowClassifier& model);
WindowClassifier load_window_classifier(const std::string& path);

// Kind string stored in a bundle header without loading the full model.
std::string peek_bundle_kind(const std::string& path);

}  // namespace ctxmon::nn
