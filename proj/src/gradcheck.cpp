#include "ctxmon/gradcheck.hpp"

#include <random>

namespace ctxmon {

namespace {

nn::Mat random_mat(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  nn::Mat m(rows, cols);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : m.d) v = g(rng);
  return m;
}

GradCheckReport check_sequence(const nn::SequenceClassifierConfig& cfg,
                               double subset_fraction, std::uint64_t seed,
                               const std::string& name) {
  nn::SequenceClassifier net(cfg);
  std::mt19937_64 rng(derive_seed(seed, "gradcheck-seq"));
  const std::size_t T = 20;
  nn::Mat x = random_mat(T, cfg.input_dim, rng);
  std::vector<int> labels(T);
  for (auto& l : labels) l = int(rng() % cfg.n_classes);
  auto params = net.params();
  const double err = nn::gradient_check(
      params, [&] { return net.sequence_loss_and_grad(x, labels); },
      subset_fraction, derive_seed(seed, "gradcheck-seq-pick"));
  return {name, err};
}

GradCheckReport check_window(const nn::WindowClassifierConfig& cfg,
                             double subset_fraction, std::uint64_t seed,
                             const std::string& name) {
  nn::WindowClassifier net(cfg);
  std::mt19937_64 rng(derive_seed(seed, "gradcheck-win"));
  std::vector<nn::Mat> xs;
  std::vector<int> ys;
  for (int i = 0; i < 8; ++i) {
    xs.push_back(random_mat(cfg.window, cfg.input_dim, rng));
    ys.push_back(int(rng() & 1));
  }
  auto params = net.params();
  const double err = nn::gradient_check(
      params, [&] { return net.batch_loss_and_grad(xs, ys); },
      subset_fraction, derive_seed(seed, "gradcheck-win-pick"));
  return {name, err};
}

}  // namespace

std::vector<GradCheckReport> gradcheck_architectures(
    const ExperimentConfig& config, double subset_fraction) {
  std::vector<GradCheckReport> out;

  nn::SequenceClassifierConfig seq = config.gesture.model;
  seq.input_dim = config.gesture.subset.dim();
  seq.seed = derive_seed(config.seed, "gradcheck-init", 0);
  out.push_back(
      check_sequence(seq, subset_fraction, config.seed, "recurrent_stack"));

  nn::WindowClassifierConfig det = config.detector.model;
  det.input_dim = config.detector.subset.dim();
  det.window = config.detector.window.window;
  det.seed = derive_seed(config.seed, "gradcheck-init", 1);
  out.push_back(
      check_window(det, subset_fraction, config.seed, "conv_detector"));

  // The pooled baseline shares the conv architecture; check the non-BN
  // variant too so both code paths stay covered.
  nn::WindowClassifierConfig base = det;
  base.batch_norm = false;
  base.seed = derive_seed(config.seed, "gradcheck-init", 2);
  out.push_back(check_window(base, subset_fraction, config.seed, "baseline"));
  return out;
}

}  // namespace ctxmon
