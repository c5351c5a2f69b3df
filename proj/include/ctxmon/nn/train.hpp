#pragma once

#include <functional>
#include <random>
#include <vector>

#include "ctxmon/nn/tensor.hpp"

namespace ctxmon::nn {

struct TrainConfig {
  double learning_rate = 1e-4;  // initial; paper range [1e-4, 1e-3]
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double decay_factor = 0.5;
  std::size_t decay_period_epochs = 20;
  std::size_t patience = 10;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
};

class Adam {
 public:
  explicit Adam(std::vector<Param*> params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  // One biased-moment-corrected update from the accumulated gradients.
  void step(double lr);
  void zero_grad();
  const std::vector<Param*>& params() const { return params_; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

std::vector<double> flatten_params(const std::vector<Param*>& params);
void restore_params(const std::vector<Param*>& params,
                    const std::vector<double>& flat);

struct FitHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;  // 0-based, weights restored from here
  std::size_t epochs_run = 0;
};

// Abstract training problem: items are indexed; a batch call must zero-start
// from accumulated gradients (fit zeroes them) and return the mean loss.
struct FitProblem {
  std::size_t n_items = 0;
  std::function<double(const std::vector<std::size_t>&)> batch_loss_and_grad;
  std::function<double()> validation_loss;
  std::vector<Param*> params;
  // Non-trainable model state that inference depends on (batch-norm running
  // statistics). Captured whenever validation improves and restored together
  // with the best weights; restoring one without the other leaves the model
  // normalizing best-epoch activations with last-epoch statistics.
  std::function<std::vector<double>()> capture_state;
  std::function<void(const std::vector<double>&)> restore_state;
};

// Mini-batch loop with a fixed shuffle per seed, step-decayed learning rate,
// early stopping on validation loss, best-validation weights restored.
FitHistory fit(FitProblem& problem, const TrainConfig& config);

// Central finite differences (h = 1e-5) on a random parameter subset against
// the analytic gradients of `loss` (which must also populate grads). Returns
// the max relative error with denominator max(|a|, |n|, 1e-8).
double gradient_check(const std::vector<Param*>& params,
                      const std::function<double()>& loss_and_grad,
                      double subset_fraction = 0.01, std::uint64_t seed = 0,
                      double h = 1e-5);

}  // namespace ctxmon::nn
