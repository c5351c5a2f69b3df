#include "ctxmon/nn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace ctxmon::nn {

void uniform_init(Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / double(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.data) v = u(rng);
}

// --- Dense -----------------------------------------------------------------

Dense::Dense(std::size_t in, std::size_t out, bool relu_act,
             const std::string& name, std::mt19937_64& rng)
    : w(name + ".w", {in, out}), b(name + ".b", {out}), relu(relu_act) {
  uniform_init(w.value, in, rng);
}

Mat Dense::forward(const Mat& x) {
  x_cache_ = x;
  y_cache_ = infer(x);
  return y_cache_;
}

Mat Dense::infer(const Mat& x) const {
  if (x.cols != in_dim()) throw ShapeError("dense input dim mismatch");
  Mat wm;
  wm.rows = w.value.shape[0];
  wm.cols = w.value.shape[1];
  wm.d = w.value.data;
  Mat y = matmul(x, wm);
  for (std::size_t r = 0; r < y.rows; ++r)
    for (std::size_t c = 0; c < y.cols; ++c) {
      y.at(r, c) += b.value.data[c];
      if (relu && y.at(r, c) < 0) y.at(r, c) = 0;
    }
  return y;
}

Mat Dense::backward(const Mat& dy_in) {
  Mat dy = dy_in;
  if (relu) {
    for (std::size_t i = 0; i < dy.d.size(); ++i)
      if (y_cache_.d[i] <= 0) dy.d[i] = 0;
  }
  // dW += x^T dy, db += column sums of dy
  Mat dw = matmul_tn(x_cache_, dy);
  for (std::size_t i = 0; i < dw.d.size(); ++i) w.grad.data[i] += dw.d[i];
  for (std::size_t r = 0; r < dy.rows; ++r)
    for (std::size_t c = 0; c < dy.cols; ++c) b.grad.data[c] += dy.at(r, c);
  // dX = dy W^T
  Mat wm;
  wm.rows = w.value.shape[0];
  wm.cols = w.value.shape[1];
  wm.d = w.value.data;
  return matmul_nt(dy, wm);
}

// --- LSTM ------------------------------------------------------------------

LSTMLayer::LSTMLayer(std::size_t in, std::size_t hidden,
                     const std::string& name, std::mt19937_64& rng)
    : wx(name + ".wx", {in, 4 * hidden}),
      wh(name + ".wh", {hidden, 4 * hidden}),
      b(name + ".b", {4 * hidden}) {
  uniform_init(wx.value, in, rng);
  uniform_init(wh.value, hidden, rng);
  // forget-gate bias at 1 helps early recurrent training
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b.value.data[j] = 1.0;
  reset_state();
}

void LSTMLayer::reset_state() {
  h_state_.assign(hidden_dim(), 0.0);
  c_state_.assign(hidden_dim(), 0.0);
}

void LSTMLayer::cell(const std::vector<double>& x,
                     const std::vector<double>& h_prev,
                     const std::vector<double>& c_prev, StepCache& sc) const {
  const std::size_t in = in_dim();
  const std::size_t h = hidden_dim();
  std::vector<double> z(b.value.data);
  for (std::size_t r = 0; r < in; ++r) {
    const double xv = x[r];
    if (xv == 0.0) continue;
    const double* wr = wx.value.data.data() + r * 4 * h;
    for (std::size_t j = 0; j < 4 * h; ++j) z[j] += xv * wr[j];
  }
  for (std::size_t r = 0; r < h; ++r) {
    const double hv = h_prev[r];
    if (hv == 0.0) continue;
    const double* wr = wh.value.data.data() + r * 4 * h;
    for (std::size_t j = 0; j < 4 * h; ++j) z[j] += hv * wr[j];
  }
  sc.x = x;
  sc.h_prev = h_prev;
  sc.c_prev = c_prev;
  sc.i.resize(h);
  sc.f.resize(h);
  sc.g.resize(h);
  sc.o.resize(h);
  sc.c.resize(h);
  sc.tanh_c.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    sc.i[j] = sigmoid(z[j]);
    sc.f[j] = sigmoid(z[h + j]);
    sc.g[j] = std::tanh(z[2 * h + j]);
    sc.o[j] = sigmoid(z[3 * h + j]);
    sc.c[j] = sc.f[j] * c_prev[j] + sc.i[j] * sc.g[j];
    sc.tanh_c[j] = std::tanh(sc.c[j]);
  }
}

Mat LSTMLayer::forward_seq(const Mat& x) {
  if (x.cols != in_dim()) throw ShapeError("lstm input dim mismatch");
  const std::size_t t_len = x.rows;
  const std::size_t h = hidden_dim();
  cache_.assign(t_len, StepCache{});
  Mat out(t_len, h);
  std::vector<double> hp(h, 0.0), cp(h, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    std::vector<double> xt(x.row(t), x.row(t) + x.cols);
    cell(xt, hp, cp, cache_[t]);
    for (std::size_t j = 0; j < h; ++j) {
      hp[j] = cache_[t].o[j] * cache_[t].tanh_c[j];
      out.at(t, j) = hp[j];
    }
    cp = cache_[t].c;
  }
  return out;
}

Mat LSTMLayer::backward_seq(const Mat& dh_out) {
  const std::size_t t_len = cache_.size();
  if (dh_out.rows != t_len || dh_out.cols != hidden_dim())
    throw ShapeError("lstm backward shape mismatch");
  const std::size_t h = hidden_dim();
  const std::size_t in = in_dim();
  Mat dx(t_len, in);
  std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0);
  std::vector<double> dz(4 * h);
  for (std::size_t t = t_len; t-- > 0;) {
    const StepCache& sc = cache_[t];
    for (std::size_t j = 0; j < h; ++j) {
      const double dh = dh_out.at(t, j) + dh_next[j];
      const double dc =
          dh * sc.o[j] * (1.0 - sc.tanh_c[j] * sc.tanh_c[j]) + dc_next[j];
      const double do_ = dh * sc.tanh_c[j];
      const double di = dc * sc.g[j];
      const double df = dc * sc.c_prev[j];
      const double dg = dc * sc.i[j];
      dz[j] = di * sc.i[j] * (1.0 - sc.i[j]);
      dz[h + j] = df * sc.f[j] * (1.0 - sc.f[j]);
      dz[2 * h + j] = dg * (1.0 - sc.g[j] * sc.g[j]);
      dz[3 * h + j] = do_ * sc.o[j] * (1.0 - sc.o[j]);
      dc_next[j] = dc * sc.f[j];
    }
    // parameter gradients
    for (std::size_t r = 0; r < in; ++r) {
      const double xv = sc.x[r];
      if (xv != 0.0) {
        double* gr = wx.grad.data.data() + r * 4 * h;
        for (std::size_t j = 0; j < 4 * h; ++j) gr[j] += xv * dz[j];
      }
    }
    for (std::size_t r = 0; r < h; ++r) {
      const double hv = sc.h_prev[r];
      if (hv != 0.0) {
        double* gr = wh.grad.data.data() + r * 4 * h;
        for (std::size_t j = 0; j < 4 * h; ++j) gr[j] += hv * dz[j];
      }
    }
    for (std::size_t j = 0; j < 4 * h; ++j) b.grad.data[j] += dz[j];
    // input and recurrent gradients
    for (std::size_t r = 0; r < in; ++r) {
      const double* wr = wx.value.data.data() + r * 4 * h;
      double acc = 0;
      for (std::size_t j = 0; j < 4 * h; ++j) acc += wr[j] * dz[j];
      dx.at(t, r) = acc;
    }
    for (std::size_t r = 0; r < h; ++r) {
      const double* wr = wh.value.data.data() + r * 4 * h;
      double acc = 0;
      for (std::size_t j = 0; j < 4 * h; ++j) acc += wr[j] * dz[j];
      dh_next[r] = acc;
    }
  }
  return dx;
}

Mat LSTMLayer::infer_seq(const Mat& x) const {
  if (x.cols != in_dim()) throw ShapeError("lstm input dim mismatch");
  const std::size_t h = hidden_dim();
  Mat out(x.rows, h);
  std::vector<double> hp(h, 0.0), cp(h, 0.0);
  StepCache sc;
  for (std::size_t t = 0; t < x.rows; ++t) {
    std::vector<double> xt(x.row(t), x.row(t) + x.cols);
    cell(xt, hp, cp, sc);
    for (std::size_t j = 0; j < h; ++j) {
      hp[j] = sc.o[j] * sc.tanh_c[j];
      out.at(t, j) = hp[j];
    }
    cp = sc.c;
  }
  return out;
}

std::vector<double> LSTMLayer::step(const std::vector<double>& x) {
  StepCache sc;
  cell(x, h_state_, c_state_, sc);
  const std::size_t h = hidden_dim();
  for (std::size_t j = 0; j < h; ++j) h_state_[j] = sc.o[j] * sc.tanh_c[j];
  c_state_ = sc.c;
  return h_state_;
}

// --- Conv1d ----------------------------------------------------------------

Conv1d::Conv1d(std::size_t cin, std::size_t cout, std::size_t k,
               const std::string& name, std::mt19937_64& rng)
    : w(name + ".w", {cout, k * cin}),
      b(name + ".b", {cout}),
      kernel(k),
      in_channels(cin) {
  uniform_init(w.value, k * cin, rng);
}

Mat Conv1d::infer(const Mat& x) const {
  if (x.cols != in_channels) throw ShapeError("conv input channel mismatch");
  if (x.rows < kernel) throw ShapeError("conv kernel longer than input");
  const std::size_t t_out = x.rows - kernel + 1;
  const std::size_t cout = out_channels();
  Mat y(t_out, cout);
  for (std::size_t t = 0; t < t_out; ++t)
    for (std::size_t co = 0; co < cout; ++co) {
      const double* wr = w.value.data.data() + co * kernel * in_channels;
      double acc = b.value.data[co];
      for (std::size_t k = 0; k < kernel; ++k) {
        const double* xr = x.row(t + k);
        for (std::size_t ci = 0; ci < in_channels; ++ci)
          acc += wr[k * in_channels + ci] * xr[ci];
      }
      y.at(t, co) = acc;
    }
  return y;
}

Mat Conv1d::forward(const Mat& x) {
  x_cache_ = x;
  return infer(x);
}

Mat Conv1d::backward(const Mat& dy) {
  const std::size_t t_out = dy.rows;
  const std::size_t cout = out_channels();
  Mat dx(x_cache_.rows, in_channels);
  for (std::size_t t = 0; t < t_out; ++t)
    for (std::size_t co = 0; co < cout; ++co) {
      const double g = dy.at(t, co);
      if (g == 0.0) continue;
      b.grad.data[co] += g;
      double* wg = w.grad.data.data() + co * kernel * in_channels;
      const double* wv = w.value.data.data() + co * kernel * in_channels;
      for (std::size_t k = 0; k < kernel; ++k) {
        const double* xr = x_cache_.row(t + k);
        double* dxr = dx.row(t + k);
        for (std::size_t ci = 0; ci < in_channels; ++ci) {
          wg[k * in_channels + ci] += g * xr[ci];
          dxr[ci] += g * wv[k * in_channels + ci];
        }
      }
    }
  return dx;
}

std::vector<Mat> Conv1d::forward_batch(const std::vector<Mat>& xs) {
  batch_cache_ = xs;
  std::vector<Mat> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(infer(x));
  return out;
}

std::vector<Mat> Conv1d::backward_batch(const std::vector<Mat>& dys) {
  if (dys.size() != batch_cache_.size())
    throw ShapeError("conv batch backward size mismatch");
  std::vector<Mat> out;
  out.reserve(dys.size());
  for (std::size_t i = 0; i < dys.size(); ++i) {
    x_cache_ = batch_cache_[i];
    out.push_back(backward(dys[i]));
  }
  return out;
}

// --- BatchNorm -------------------------------------------------------------

BatchNorm1d::BatchNorm1d(std::size_t channels, const std::string& name)
    : gamma(name + ".gamma", {channels}),
      beta(name + ".beta", {channels}),
      running_mean({channels}),
      running_var({channels}) {
  std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.0);
  std::fill(running_var.data.begin(), running_var.data.end(), 1.0);
}

std::vector<Mat> BatchNorm1d::forward_train(const std::vector<Mat>& xs) {
  const std::size_t c = gamma.value.size();
  std::size_t n = 0;
  for (const auto& x : xs) n += x.rows;
  if (n < 2)
    throw ConfigError("batch normalization needs a batch of at least 2");
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  for (const auto& x : xs)
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t j = 0; j < c; ++j) mean[j] += x.at(r, j);
  for (auto& m : mean) m /= double(n);
  for (const auto& x : xs)
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = x.at(r, j) - mean[j];
        var[j] += d * d;
      }
  for (auto& v : var) v /= double(n);

  invstd_.resize(c);
  for (std::size_t j = 0; j < c; ++j) {
    invstd_[j] = 1.0 / std::sqrt(var[j] + eps);
    running_mean.data[j] =
        momentum * running_mean.data[j] + (1 - momentum) * mean[j];
    running_var.data[j] =
        momentum * running_var.data[j] + (1 - momentum) * var[j];
  }
  count_ = n;

  xhat_.clear();
  std::vector<Mat> out;
  for (const auto& x : xs) {
    Mat xh(x.rows, c), y(x.rows, c);
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        xh.at(r, j) = (x.at(r, j) - mean[j]) * invstd_[j];
        y.at(r, j) = gamma.value.data[j] * xh.at(r, j) + beta.value.data[j];
      }
    xhat_.push_back(std::move(xh));
    out.push_back(std::move(y));
  }
  return out;
}

std::vector<Mat> BatchNorm1d::backward(const std::vector<Mat>& dys) {
  const std::size_t c = gamma.value.size();
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t bi = 0; bi < dys.size(); ++bi)
    for (std::size_t r = 0; r < dys[bi].rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        sum_dy[j] += dys[bi].at(r, j);
        sum_dy_xhat[j] += dys[bi].at(r, j) * xhat_[bi].at(r, j);
      }
  for (std::size_t j = 0; j < c; ++j) {
    gamma.grad.data[j] += sum_dy_xhat[j];
    beta.grad.data[j] += sum_dy[j];
  }
  std::vector<Mat> out;
  const double inv_n = 1.0 / double(count_);
  for (std::size_t bi = 0; bi < dys.size(); ++bi) {
    Mat dx(dys[bi].rows, c);
    for (std::size_t r = 0; r < dys[bi].rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        dx.at(r, j) = gamma.value.data[j] * invstd_[j] *
                      (dys[bi].at(r, j) - inv_n * sum_dy[j] -
                       xhat_[bi].at(r, j) * inv_n * sum_dy_xhat[j]);
      }
    out.push_back(std::move(dx));
  }
  return out;
}

Mat BatchNorm1d::infer(const Mat& x) const {
  const std::size_t c = gamma.value.size();
  Mat y(x.rows, c);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t j = 0; j < c; ++j)
      y.at(r, j) = gamma.value.data[j] * (x.at(r, j) - running_mean.data[j]) /
                       std::sqrt(running_var.data[j] + eps) +
                   beta.value.data[j];
  return y;
}

std::vector<Mat> BatchNorm1d::infer(const std::vector<Mat>& xs) const {
  std::vector<Mat> out;
  for (const auto& x : xs) out.push_back(infer(x));
  return out;
}

// --- Dropout ---------------------------------------------------------------

Mat Dropout::forward_train(const Mat& x, std::mt19937_64& rng) {
  if (rate < 0 || rate >= 1) throw ConfigError("dropout rate must be in [0,1)");
  if (rate == 0.0) {
    mask_ = Mat();
    return x;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  mask_ = Mat(x.rows, x.cols);
  Mat y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.d.size(); ++i) {
    const double m = u(rng) < rate ? 0.0 : keep_scale;
    mask_.d[i] = m;
    y.d[i] = x.d[i] * m;
  }
  return y;
}

Mat Dropout::backward(const Mat& dy) const {
  if (mask_.d.empty()) return dy;
  Mat dx = dy;
  for (std::size_t i = 0; i < dx.d.size(); ++i) dx.d[i] *= mask_.d[i];
  return dx;
}

// --- Losses ----------------------------------------------------------------

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

LossGrad softmax_xent(const std::vector<double>& logits, std::size_t target) {
  if (target >= logits.size()) throw ShapeError("target class out of range");
  LossGrad lg;
  lg.dlogits = softmax(logits);
  lg.loss = -std::log(std::max(lg.dlogits[target], 1e-300));
  lg.dlogits[target] -= 1.0;  // p - y
  return lg;
}

LossGrad sigmoid_bce(double logit, int label) {
  LossGrad lg;
  const double p = sigmoid(logit);
  const double y = label ? 1.0 : 0.0;
  // numerically stable form: max(z,0) - z*y + log(1+exp(-|z|))
  lg.loss = std::max(logit, 0.0) - logit * y +
            std::log1p(std::exp(-std::abs(logit)));
  lg.dlogits = {p - y};
  return lg;
}

}  // namespace ctxmon::nn
