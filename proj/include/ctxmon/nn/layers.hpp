#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ctxmon/nn/tensor.hpp"

namespace ctxmon::nn {

// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in))
void uniform_init(Tensor& t, std::size_t fan_in, std::mt19937_64& rng);

struct Dense {
  Param w;  // [in x out]
  Param b;  // [out]
  bool relu = false;

  Dense(std::size_t in, std::size_t out, bool relu_act, const std::string& name,
        std::mt19937_64& rng);

  Mat forward(const Mat& x);
  // Accumulates dW/db, returns dX. Requires a preceding forward call.
  Mat backward(const Mat& dy);
  // Stateless forward for inference paths that must not touch caches.
  Mat infer(const Mat& x) const;

  std::size_t in_dim() const { return w.value.shape[0]; }
  std::size_t out_dim() const { return w.value.shape[1]; }

  void collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }

 private:
  Mat x_cache_, y_cache_;
};

// Single-sequence LSTM (batch of one sequence; mini-batches accumulate
// gradients across sequences). Gate order i, f, g, o; forget-gate bias
// initialized to 1.
struct LSTMLayer {
  Param wx;  // [in x 4H]
  Param wh;  // [H x 4H]
  Param b;   // [4H]

  LSTMLayer(std::size_t in, std::size_t hidden, const std::string& name,
            std::mt19937_64& rng);

  std::size_t in_dim() const { return wx.value.shape[0]; }
  std::size_t hidden_dim() const { return wh.value.shape[0]; }

  // Sequence pass for training: x [T x in] -> h [T x H]; caches everything
  // needed for backward_seq. Starts from zero state.
  Mat forward_seq(const Mat& x);
  // Full backpropagation through time. Returns dX [T x in].
  Mat backward_seq(const Mat& dh_out);
  // Cache-free sequence pass from zero state.
  Mat infer_seq(const Mat& x) const;

  // Streaming inference with persistent state.
  void reset_state();
  std::vector<double> step(const std::vector<double>& x);

  void collect(std::vector<Param*>& out) {
    out.push_back(&wx);
    out.push_back(&wh);
    out.push_back(&b);
  }

 private:
  struct StepCache {
    std::vector<double> x, h_prev, c_prev, i, f, g, o, c, tanh_c;
  };
  std::vector<StepCache> cache_;
  std::vector<double> h_state_, c_state_;

  void cell(const std::vector<double>& x, const std::vector<double>& h_prev,
            const std::vector<double>& c_prev, StepCache& out) const;
};

// Valid cross-correlation along time: x [T x Cin] -> y [(T-k+1) x Cout].
struct Conv1d {
  Param w;  // [Cout x k*Cin]
  Param b;  // [Cout]
  std::size_t kernel = 1;
  std::size_t in_channels = 1;

  Conv1d(std::size_t cin, std::size_t cout, std::size_t k,
         const std::string& name, std::mt19937_64& rng);

  std::size_t out_channels() const { return w.value.shape[0]; }

  Mat forward(const Mat& x);
  Mat backward(const Mat& dy);
  Mat infer(const Mat& x) const;
  // Batched variants caching one input per element.
  std::vector<Mat> forward_batch(const std::vector<Mat>& xs);
  std::vector<Mat> backward_batch(const std::vector<Mat>& dys);

  void collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }

 private:
  Mat x_cache_;
  std::vector<Mat> batch_cache_;
};

// Per-channel batch normalization over a batch of [T x C] feature maps.
// Training mode uses batch statistics (and needs >= 2 samples total);
// inference uses running stats with momentum 0.9.
struct BatchNorm1d {
  Param gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  explicit BatchNorm1d(std::size_t channels, const std::string& name);

  std::vector<Mat> forward_train(const std::vector<Mat>& xs);
  std::vector<Mat> backward(const std::vector<Mat>& dys);
  std::vector<Mat> infer(const std::vector<Mat>& xs) const;
  Mat infer(const Mat& x) const;

  void collect(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

 private:
  std::vector<Mat> xhat_;
  std::vector<double> invstd_;
  std::size_t count_ = 0;
};

// Inverted dropout; identity in inference mode and for rate 0.
struct Dropout {
  double rate = 0.0;

  Mat forward_train(const Mat& x, std::mt19937_64& rng);
  Mat backward(const Mat& dy) const;

 private:
  Mat mask_;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> dlogits;
};

// Numerically stabilized softmax cross-entropy against a class index.
LossGrad softmax_xent(const std::vector<double>& logits, std::size_t target);
std::vector<double> softmax(const std::vector<double>& logits);

// Binary cross-entropy on a single logit; gradient is sigmoid(z) - y.
LossGrad sigmoid_bce(double logit, int label);
double sigmoid(double z);

}  // namespace ctxmon::nn
