#include "ctxmon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>

namespace ctxmon {

namespace {

std::optional<double> ratio(double num, double den) {
  if (den <= 0) return std::nullopt;
  return num / den;
}

}  // namespace

ConfusionMetrics confusion_metrics(const ConfusionCounts& c) {
  ConfusionMetrics m;
  m.tpr = ratio(double(c.tp), double(c.tp + c.fn));
  m.tnr = ratio(double(c.tn), double(c.tn + c.fp));
  m.ppv = ratio(double(c.tp), double(c.tp + c.fp));
  m.npv = ratio(double(c.tn), double(c.tn + c.fn));
  m.f1 = ratio(2.0 * double(c.tp), double(2 * c.tp + c.fp + c.fn));
  return m;
}

ConfusionMetrics micro_average(const std::vector<ConfusionCounts>& counts) {
  ConfusionCounts total;
  for (const auto& c : counts) {
    total.tp += c.tp;
    total.fp += c.fp;
    total.tn += c.tn;
    total.fn += c.fn;
  }
  return confusion_metrics(total);
}

RocResult roc_auc(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ShapeError("scores and labels length mismatch");
  std::size_t pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg) += 1;
  RocResult result;
  if (pos == 0 || neg == 0) return result;  // AUC undefined

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  result.points.push_back({0.0, 0.0});
  double auc = 0.0;
  std::size_t tp = 0, fp = 0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    // advance over the tie block so tied positives/negatives move together
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] ? tp : fp) += 1;
      ++i;
    }
    const double fpr = double(fp) / double(neg);
    const double tpr = double(tp) / double(pos);
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    result.points.push_back({fpr, tpr});
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  result.auc = auc;
  return result;
}

// --- KDE -------------------------------------------------------------------

DensityEstimate kde_fit(const std::vector<std::vector<double>>& samples) {
  if (samples.size() < 2) throw EstimationError("kde needs >= 2 samples");
  const std::size_t n = samples.size();
  const std::size_t d = samples[0].size();
  if (d < 1) throw EstimationError("kde needs >= 1 dimension");
  for (const auto& row : samples)
    if (row.size() != d) throw ShapeError("ragged sample matrix");

  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (const auto& row : samples)
    for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
  for (auto& m : mean) m /= double(n);
  for (const auto& row : samples)
    for (std::size_t j = 0; j < d; ++j) {
      const double x = row[j] - mean[j];
      sd[j] += x * x;
    }
  for (auto& s : sd) s = std::sqrt(s / double(n - 1));

  std::vector<int> kept;
  for (std::size_t j = 0; j < d; ++j) {
    if (sd[j] > 0)
      kept.push_back(int(j));
    else
      std::cerr << "kde: dropping zero-variance dimension " << j << "\n";
  }
  if (kept.empty()) throw EstimationError("all dimensions have zero variance");

  DensityEstimate est;
  est.kept_dims = kept;
  const double dk = double(kept.size());
  for (int j : kept)
    est.bandwidth.push_back(sd[std::size_t(j)] *
                            std::pow(double(n), -1.0 / (dk + 4.0)));
  est.samples.reserve(n);
  for (const auto& row : samples) {
    std::vector<double> r;
    for (int j : kept) r.push_back(row[std::size_t(j)]);
    est.samples.push_back(std::move(r));
  }
  return est;
}

double kde_eval(const DensityEstimate& est, const std::vector<double>& point) {
  if (point.size() != est.bandwidth.size())
    throw ShapeError("point dimensionality mismatch");
  static const double inv_sqrt_2pi = 0.3989422804014327;
  double total = 0.0;
  for (const auto& s : est.samples) {
    double k = 1.0;
    for (std::size_t j = 0; j < point.size(); ++j) {
      const double z = (point[j] - s[j]) / est.bandwidth[j];
      k *= inv_sqrt_2pi * std::exp(-0.5 * z * z) / est.bandwidth[j];
    }
    total += k;
  }
  return total / double(est.samples.size());
}

Grid shared_grid(const DensityEstimate& p, const DensityEstimate& q,
                 std::size_t points_per_dim) {
  if (p.bandwidth.size() != q.bandwidth.size())
    throw ShapeError("density dimensionality mismatch");
  const std::size_t d = p.bandwidth.size();
  Grid g;
  g.points_per_dim = points_per_dim;
  g.lo.assign(d, std::numeric_limits<double>::infinity());
  g.hi.assign(d, -std::numeric_limits<double>::infinity());
  for (const DensityEstimate* est : {&p, &q}) {
    for (const auto& row : est->samples)
      for (std::size_t j = 0; j < d; ++j) {
        g.lo[j] = std::min(g.lo[j], row[j]);
        g.hi[j] = std::max(g.hi[j], row[j]);
      }
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double pad = 3.0 * std::max(p.bandwidth[j], q.bandwidth[j]);
    g.lo[j] -= pad;
    g.hi[j] += pad;
  }
  return g;
}

namespace {

std::vector<double> grid_axis(const Grid& g, std::size_t j) {
  std::vector<double> axis(g.points_per_dim);
  const double step =
      (g.hi[j] - g.lo[j]) / double(g.points_per_dim - 1);
  for (std::size_t k = 0; k < g.points_per_dim; ++k)
    axis[k] = g.lo[j] + step * double(k);
  return axis;
}

// Factorized per-dimension kernel tables keep grid evaluation cheap for the
// 1-D and 2-D cases the quadrature supports.
std::vector<double> eval_on_grid(const DensityEstimate& est, const Grid& g) {
  const std::size_t d = est.bandwidth.size();
  if (d > 2) throw ConfigError("grid quadrature supports at most 2 dims");
  static const double inv_sqrt_2pi = 0.3989422804014327;
  const std::size_t n = est.samples.size();
  const std::size_t p = g.points_per_dim;

  std::vector<std::vector<double>> tables(d);  // [dim][grid*n]
  for (std::size_t j = 0; j < d; ++j) {
    const auto axis = grid_axis(g, j);
    tables[j].resize(p * n);
    for (std::size_t k = 0; k < p; ++k)
      for (std::size_t i = 0; i < n; ++i) {
        const double z = (axis[k] - est.samples[i][j]) / est.bandwidth[j];
        tables[j][k * n + i] =
            inv_sqrt_2pi * std::exp(-0.5 * z * z) / est.bandwidth[j];
      }
  }

  if (d == 1) {
    std::vector<double> out(p, 0.0);
    for (std::size_t k = 0; k < p; ++k) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) acc += tables[0][k * n + i];
      out[k] = acc / double(n);
    }
    return out;
  }
  std::vector<double> out(p * p, 0.0);
  for (std::size_t kx = 0; kx < p; ++kx)
    for (std::size_t ky = 0; ky < p; ++ky) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i)
        acc += tables[0][kx * n + i] * tables[1][ky * n + i];
      out[kx * p + ky] = acc / double(n);
    }
  return out;
}

double cell_volume(const Grid& g) {
  double v = 1.0;
  for (std::size_t j = 0; j < g.dim(); ++j)
    v *= (g.hi[j] - g.lo[j]) / double(g.points_per_dim - 1);
  return v;
}

}  // namespace

double js_divergence(const DensityEstimate& p, const DensityEstimate& q,
                     const Grid& grid) {
  auto dp = eval_on_grid(p, grid);
  auto dq = eval_on_grid(q, grid);
  const double vol = cell_volume(grid);
  double sp = 0, sq = 0;
  for (double v : dp) sp += v * vol;
  for (double v : dq) sq += v * vol;
  if (std::abs(sp - 1.0) > 0.05 || std::abs(sq - 1.0) > 0.05)
    throw EstimationError("quadrature grid too coarse (normalization error > 5%)");
  // discrete probability masses
  double tp = 0, tq = 0;
  for (double v : dp) tp += v;
  for (double v : dq) tq += v;
  double jsd = 0.0;
  const double log2e = 1.4426950408889634;
  for (std::size_t i = 0; i < dp.size(); ++i) {
    const double pi = dp[i] / tp;
    const double qi = dq[i] / tq;
    const double mi = 0.5 * (pi + qi);
    // Subnormal masses can round mi to 0; those terms contribute nothing.
    if (mi <= 0) continue;
    if (pi > 0) jsd += 0.5 * pi * std::log(pi / mi) * log2e;
    if (qi > 0) jsd += 0.5 * qi * std::log(qi / mi) * log2e;
  }
  return std::clamp(jsd, 0.0, 1.0);
}

DivergenceMatrix divergence_matrix(
    const std::vector<int>& class_ids,
    const std::vector<std::vector<std::vector<double>>>& class_samples,
    std::size_t min_samples, std::size_t points_per_dim) {
  if (class_ids.size() != class_samples.size())
    throw ShapeError("class id / sample list mismatch");
  DivergenceMatrix m;
  std::vector<std::size_t> eligible;
  for (std::size_t c = 0; c < class_ids.size(); ++c) {
    if (class_samples[c].size() >= min_samples) {
      eligible.push_back(c);
      m.class_ids.push_back(class_ids[c]);
    } else {
      std::cerr << "divergence_matrix: skipping class G" << class_ids[c]
                << " (" << class_samples[c].size() << " samples < "
                << min_samples << ")\n";
    }
  }
  if (eligible.size() < 2)
    throw EstimationError("fewer than 2 classes with enough samples");

  auto marginal = [](const std::vector<std::vector<double>>& rows,
                     std::size_t a, std::size_t b) {
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back({r[a], r[b]});
    return out;
  };

  const std::size_t k = eligible.size();
  m.jsd.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const auto& sa = class_samples[eligible[a]];
      const auto& sb = class_samples[eligible[b]];
      const std::size_t d = sa[0].size();
      double value = 0.0;
      if (d <= 2) {
        auto pa = kde_fit(sa);
        auto pb = kde_fit(sb);
        value = js_divergence(pa, pb, shared_grid(pa, pb, points_per_dim));
      } else {
        // pairwise 2-D marginalization, averaged
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t x = 0; x < d; ++x)
          for (std::size_t y = x + 1; y < d; ++y) {
            try {
              auto pa = kde_fit(marginal(sa, x, y));
              auto pb = kde_fit(marginal(sb, x, y));
              sum += js_divergence(pa, pb, shared_grid(pa, pb, points_per_dim));
              pairs += 1;
            } catch (const EstimationError&) {
              // zero-variance marginal pair; skip it
            }
          }
        if (pairs == 0)
          throw EstimationError("no usable dimension pairs for JSD");
        value = sum / double(pairs);
      }
      m.jsd[a][b] = m.jsd[b][a] = value;
    }
  }
  return m;
}

void save_divergence_csv(const DivergenceMatrix& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StructuralError("cannot open for write: " + path);
  f << "class";
  for (int id : m.class_ids) f << ",G" << id;
  f << "\n";
  char buf[64];
  for (std::size_t i = 0; i < m.class_ids.size(); ++i) {
    f << "G" << m.class_ids[i];
    for (std::size_t j = 0; j < m.class_ids.size(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.6g", m.jsd[i][j]);
      f << buf;
    }
    f << "\n";
  }
}

}  // namespace ctxmon
