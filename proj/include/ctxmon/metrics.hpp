#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctxmon/common.hpp"

namespace ctxmon {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Rates are absent (nullopt) when their denominator is zero, never 0.
struct ConfusionMetrics {
  std::optional<double> tpr, tnr, ppv, npv, f1;
};

ConfusionMetrics confusion_metrics(const ConfusionCounts& c);
// Micro-average: counts are summed first, then rates computed.
ConfusionMetrics micro_average(const std::vector<ConfusionCounts>& counts);

struct RocPoint {
  double fpr, tpr;
};

struct RocResult {
  std::optional<double> auc;  // absent when only one class is present
  std::vector<RocPoint> points;
};

// Threshold sweep over unique scores, trapezoidal area; ties contribute half
// (equivalent to the rank / Mann-Whitney formulation).
RocResult roc_auc(const std::vector<double>& scores,
                  const std::vector<int>& labels);

// --- Kernel density estimation --------------------------------------------

struct DensityEstimate {
  std::vector<std::vector<double>> samples;  // n x d, zero-variance dims dropped
  std::vector<double> bandwidth;             // per kept dimension, Scott's rule
  std::vector<int> kept_dims;                // original column indices
};

DensityEstimate kde_fit(const std::vector<std::vector<double>>& samples);
double kde_eval(const DensityEstimate& est, const std::vector<double>& point);

struct Grid {
  // Uniform grid over a box; dims matches the density dimensionality.
  std::vector<double> lo, hi;
  std::size_t points_per_dim = 200;

  std::size_t dim() const { return lo.size(); }
};

// Shared evaluation grid covering both supports with 3-bandwidth padding.
Grid shared_grid(const DensityEstimate& p, const DensityEstimate& q,
                 std::size_t points_per_dim = 200);

// Jensen-Shannon divergence, base-2 logarithm, by grid quadrature on
// normalized discretized densities; range [0, 1]. Throws when the grid is too
// coarse (normalization error > 5%).
double js_divergence(const DensityEstimate& p, const DensityEstimate& q,
                     const Grid& grid);

struct DivergenceMatrix {
  std::vector<int> class_ids;           // gesture ids with enough samples
  std::vector<std::vector<double>> jsd; // symmetric, zero diagonal
};

// Pairwise JSD over per-class sample sets. Classes below min_samples are
// omitted with a warning on stderr. Sample sets above 2 dimensions are
// reduced by pairwise 2-D marginalization (JSD averaged over dimension
// pairs).
DivergenceMatrix divergence_matrix(
    const std::vector<int>& class_ids,
    const std::vector<std::vector<std::vector<double>>>& class_samples,
    std::size_t min_samples = 30, std::size_t points_per_dim = 200);

void save_divergence_csv(const DivergenceMatrix& m, const std::string& path);

}  // namespace ctxmon
