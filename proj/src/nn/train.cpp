#include "ctxmon/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ctxmon::nn {

Adam::Adam(std::vector<Param*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Param* p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      double& m = m_[k].data[i];
      double& v = v_[k].data[i];
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->grad.zero();
}

std::vector<double> flatten_params(const std::vector<Param*>& params) {
  std::vector<double> flat;
  for (const Param* p : params)
    flat.insert(flat.end(), p->value.data.begin(), p->value.data.end());
  return flat;
}

void restore_params(const std::vector<Param*>& params,
                    const std::vector<double>& flat) {
  std::size_t off = 0;
  for (Param* p : params) {
    if (off + p->value.size() > flat.size())
      throw ShapeError("restore_params: flat vector too short");
    std::copy(flat.begin() + off, flat.begin() + off + p->value.size(),
              p->value.data.begin());
    off += p->value.size();
  }
  if (off != flat.size())
    throw ShapeError("restore_params: flat vector size mismatch");
}

FitHistory fit(FitProblem& problem, const TrainConfig& config) {
  if (problem.n_items == 0) throw ConfigError("fit: no training items");
  if (config.batch_size == 0) throw ConfigError("fit: batch_size must be > 0");

  Adam opt(problem.params, config.beta1, config.beta2, config.adam_eps);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(problem.n_items);
  std::iota(order.begin(), order.end(), std::size_t{0});

  FitHistory hist;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_weights = flatten_params(problem.params);
  std::vector<double> best_state;
  if (problem.capture_state) best_state = problem.capture_state();
  std::size_t epochs_since_best = 0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr =
        config.learning_rate *
        std::pow(config.decay_factor,
                 static_cast<double>(config.decay_period_epochs
                                         ? epoch / config.decay_period_epochs
                                         : 0));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> batch(order.begin() + start,
                                     order.begin() + end);
      opt.zero_grad();
      epoch_loss += problem.batch_loss_and_grad(batch);
      opt.step(lr);
      ++n_batches;
    }
    hist.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));

    const double val = problem.validation_loss ? problem.validation_loss()
                                               : hist.train_loss.back();
    hist.val_loss.push_back(val);
    hist.epochs_run = epoch + 1;

    if (val < best_val) {
      best_val = val;
      best_weights = flatten_params(problem.params);
      if (problem.capture_state) best_state = problem.capture_state();
      hist.best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= config.patience) break;
    }
  }

  restore_params(problem.params, best_weights);
  if (problem.restore_state) problem.restore_state(best_state);
  return hist;
}

double gradient_check(const std::vector<Param*>& params,
                      const std::function<double()>& loss_and_grad,
                      double subset_fraction, std::uint64_t seed, double h) {
  for (Param* p : params) p->grad.zero();
  loss_and_grad();
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Param* p : params) analytic.push_back(p->grad);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double max_rel = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    bool any = false;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const bool last_chance = (i + 1 == p.value.size()) && !any;
      if (!last_chance && u01(rng) >= subset_fraction) continue;
      any = true;
      const double orig = p.value.data[i];
      p.value.data[i] = orig + h;
      const double lp = loss_and_grad();
      p.value.data[i] = orig - h;
      const double lm = loss_and_grad();
      p.value.data[i] = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[k].data[i];
      const double diff = std::abs(a - numeric);
      // Central differences carry ~eps*|L|/h of roundoff. Near-zero gradients
      // whose disagreement sits below that measurement floor say nothing
      // about correctness, so they are excluded rather than reported.
      const double mag = std::max(std::abs(a), std::abs(numeric));
      if (mag < 1e-6 && diff <= 1e-9) continue;
      const double denom =
          std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, diff / denom);
    }
  }
  // Leave the analytic gradients in place for the caller.
  for (std::size_t k = 0; k < params.size(); ++k)
    params[k]->grad = analytic[k];
  return max_rel;
}

}  // namespace ctxmon::nn
