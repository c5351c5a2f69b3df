#include "ctxmon/nn/models.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace ctxmon::nn {

using nlohmann::json;

// --- SequenceClassifier ----------------------------------------------------

namespace {

std::vector<LSTMLayer> make_lstm_stack(const SequenceClassifierConfig& cfg,
                                       std::mt19937_64& rng) {
  if (cfg.lstm_units.empty())
    throw ConfigError("sequence classifier needs at least one LSTM layer");
  if (cfg.input_dim == 0 || cfg.n_classes == 0)
    throw ConfigError("sequence classifier dims must be positive");
  std::vector<LSTMLayer> out;
  std::size_t in = cfg.input_dim;
  for (std::size_t i = 0; i < cfg.lstm_units.size(); ++i) {
    if (cfg.lstm_units[i] == 0)
      throw ConfigError("lstm layer width must be positive");
    out.emplace_back(in, cfg.lstm_units[i], "lstm" + std::to_string(i), rng);
    in = cfg.lstm_units[i];
  }
  return out;
}

}  // namespace

SequenceClassifier::SequenceClassifier(const SequenceClassifierConfig& config)
    : config_(config),
      rng_(config.seed),
      lstm_(make_lstm_stack(config_, rng_)),
      fc1_(config_.lstm_units.back(), config_.fc_units, true, "fc1", rng_),
      fc2_(config_.fc_units, config_.n_classes, false, "fc2", rng_) {
  drop_.rate = config_.dropout;
}

std::vector<Param*> SequenceClassifier::params() {
  std::vector<Param*> out;
  for (auto& l : lstm_) l.collect(out);
  fc1_.collect(out);
  fc2_.collect(out);
  return out;
}

double SequenceClassifier::sequence_loss_and_grad(
    const Mat& x, const std::vector<int>& labels,
    std::mt19937_64* dropout_rng) {
  if (labels.size() != x.rows)
    throw ShapeError("label count does not match sequence length");
  Mat h = x;
  for (auto& l : lstm_) h = l.forward_seq(h);
  h = drop_.forward_train(h, dropout_rng ? *dropout_rng : rng_);
  Mat a1 = fc1_.forward(h);
  Mat logits = fc2_.forward(a1);

  Mat dlogits(logits.rows, logits.cols);
  double loss = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < logits.rows; ++t) {
    if (labels[t] < 0) continue;
    std::vector<double> row(logits.row(t), logits.row(t) + logits.cols);
    LossGrad lg = softmax_xent(row, static_cast<std::size_t>(labels[t]));
    loss += lg.loss;
    for (std::size_t c = 0; c < logits.cols; ++c)
      dlogits.at(t, c) = lg.dlogits[c];
    ++count;
  }
  if (count == 0) throw ConfigError("sequence has no labeled timesteps");
  const double scale = 1.0 / static_cast<double>(count);
  loss *= scale;
  for (auto& v : dlogits.d) v *= scale;

  Mat d = fc2_.backward(dlogits);
  d = fc1_.backward(d);
  d = drop_.backward(d);
  for (std::size_t i = lstm_.size(); i-- > 0;) d = lstm_[i].backward_seq(d);
  return loss;
}

Mat SequenceClassifier::predict_sequence(const Mat& x) const {
  Mat h = x;
  for (const auto& l : lstm_) h = l.infer_seq(h);
  Mat logits = fc2_.infer(fc1_.infer(h));
  for (std::size_t t = 0; t < logits.rows; ++t) {
    std::vector<double> row(logits.row(t), logits.row(t) + logits.cols);
    std::vector<double> p = softmax(row);
    for (std::size_t c = 0; c < logits.cols; ++c) logits.at(t, c) = p[c];
  }
  return logits;
}

void SequenceClassifier::reset_state() {
  for (auto& l : lstm_) l.reset_state();
}

std::vector<double> SequenceClassifier::step(
    const std::vector<double>& features) {
  if (features.size() != config_.input_dim)
    throw ShapeError("feature vector dim mismatch");
  std::vector<double> h = features;
  for (auto& l : lstm_) h = l.step(h);
  Mat hm(1, h.size());
  std::copy(h.begin(), h.end(), hm.d.begin());
  Mat logits = fc2_.infer(fc1_.infer(hm));
  return softmax(logits.d);
}

// --- WindowClassifier ------------------------------------------------------

namespace {

std::vector<Conv1d> make_conv_stack(const WindowClassifierConfig& cfg,
                                    std::mt19937_64& rng) {
  if (cfg.conv.empty())
    throw ConfigError("window classifier needs at least one conv layer");
  if (cfg.input_dim == 0 || cfg.window == 0)
    throw ConfigError("window classifier dims must be positive");
  std::vector<Conv1d> out;
  std::size_t cin = cfg.input_dim;
  for (std::size_t i = 0; i < cfg.conv.size(); ++i) {
    const auto& cs = cfg.conv[i];
    if (cs.channels == 0 || cs.kernel == 0)
      throw ConfigError("conv spec must be positive");
    out.emplace_back(cin, cs.channels, cs.kernel, "conv" + std::to_string(i),
                     rng);
    cin = cs.channels;
  }
  return out;
}

std::vector<BatchNorm1d> make_bn_stack(const WindowClassifierConfig& cfg) {
  std::vector<BatchNorm1d> out;
  if (!cfg.batch_norm) return out;
  for (std::size_t i = 0; i < cfg.conv.size(); ++i)
    out.emplace_back(cfg.conv[i].channels, "bn" + std::to_string(i));
  return out;
}

std::size_t conv_flat_dim(const WindowClassifierConfig& cfg) {
  std::size_t t = cfg.window;
  for (const auto& cs : cfg.conv) {
    if (t < cs.kernel)
      throw ConfigError("conv stack consumes more timesteps than the window");
    t = t - cs.kernel + 1;
  }
  return t * cfg.conv.back().channels;
}

void relu_inplace(std::vector<Mat>& xs) {
  for (auto& x : xs)
    for (auto& v : x.d)
      if (v < 0) v = 0;
}

Mat flatten_batch(const std::vector<Mat>& xs, std::size_t flat_dim) {
  Mat out(xs.size(), flat_dim);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].d.size() != flat_dim)
      throw ShapeError("flatten dim mismatch");
    std::copy(xs[i].d.begin(), xs[i].d.end(), out.row(i));
  }
  return out;
}

}  // namespace

WindowClassifier::WindowClassifier(const WindowClassifierConfig& config)
    : config_(config),
      rng_(config.seed),
      conv_(make_conv_stack(config_, rng_)),
      bn_(make_bn_stack(config_)),
      flat_dim_(conv_flat_dim(config_)),
      fc1_(flat_dim_, config_.fc_units, true, "fc1", rng_),
      fc2_(config_.fc_units, 1, false, "fc2", rng_) {
  drop_.rate = config_.dropout;
}

std::vector<Param*> WindowClassifier::params() {
  std::vector<Param*> out;
  for (auto& c : conv_) {
    out.push_back(&c.w);
    // A per-channel bias ahead of batch norm is redundant: the normalization
    // subtracts it back out, so its gradient is identically zero.
    if (bn_.empty()) out.push_back(&c.b);
  }
  for (auto& b : bn_) b.collect(out);
  fc1_.collect(out);
  fc2_.collect(out);
  return out;
}

double WindowClassifier::batch_loss_and_grad(const std::vector<Mat>& windows,
                                             const std::vector<int>& labels,
                                             std::mt19937_64* dropout_rng) {
  if (windows.empty()) throw ConfigError("empty training batch");
  if (windows.size() != labels.size())
    throw ShapeError("window/label count mismatch");

  std::vector<Mat> acts = windows;
  relu_out_.assign(conv_.size(), {});
  for (std::size_t s = 0; s < conv_.size(); ++s) {
    acts = conv_[s].forward_batch(acts);
    if (!bn_.empty()) acts = bn_[s].forward_train(acts);
    relu_inplace(acts);
    relu_out_[s] = acts;
  }
  Mat flat = flatten_batch(acts, flat_dim_);
  flat = drop_.forward_train(flat, dropout_rng ? *dropout_rng : rng_);
  Mat a1 = fc1_.forward(flat);
  Mat logits = fc2_.forward(a1);

  const double scale = 1.0 / static_cast<double>(windows.size());
  Mat dlogits(logits.rows, 1);
  double loss = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    LossGrad lg = sigmoid_bce(logits.at(i, 0), labels[i]);
    loss += lg.loss * scale;
    dlogits.at(i, 0) = lg.dlogits[0] * scale;
  }

  Mat d = fc2_.backward(dlogits);
  d = fc1_.backward(d);
  d = drop_.backward(d);
  std::vector<Mat> dacts(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    dacts[i] = Mat(relu_out_.back()[i].rows, relu_out_.back()[i].cols);
    std::copy(d.row(i), d.row(i) + flat_dim_, dacts[i].d.begin());
  }
  for (std::size_t s = conv_.size(); s-- > 0;) {
    for (std::size_t i = 0; i < dacts.size(); ++i)
      for (std::size_t k = 0; k < dacts[i].d.size(); ++k)
        if (relu_out_[s][i].d[k] <= 0) dacts[i].d[k] = 0;
    if (!bn_.empty()) dacts = bn_[s].backward(dacts);
    dacts = conv_[s].backward_batch(dacts);
  }
  return loss;
}

double WindowClassifier::logit(const Mat& window) const {
  if (window.rows != config_.window || window.cols != config_.input_dim)
    throw ShapeError("window shape mismatch");
  Mat h = window;
  for (std::size_t s = 0; s < conv_.size(); ++s) {
    h = conv_[s].infer(h);
    if (!bn_.empty()) h = bn_[s].infer(h);
    for (auto& v : h.d)
      if (v < 0) v = 0;
  }
  Mat flat(1, flat_dim_);
  if (h.d.size() != flat_dim_) throw ShapeError("flatten dim mismatch");
  std::copy(h.d.begin(), h.d.end(), flat.d.begin());
  Mat out = fc2_.infer(fc1_.infer(flat));
  return out.at(0, 0);
}

double WindowClassifier::score(const Mat& window) const {
  return sigmoid(logit(window));
}

std::vector<double> WindowClassifier::norm_state() const {
  std::vector<double> out;
  for (const auto& b : bn_) {
    out.insert(out.end(), b.running_mean.data.begin(),
               b.running_mean.data.end());
    out.insert(out.end(), b.running_var.data.begin(), b.running_var.data.end());
  }
  return out;
}

void WindowClassifier::set_norm_state(const std::vector<double>& state) {
  std::size_t off = 0;
  for (auto& b : bn_) {
    const std::size_t c = b.running_mean.size();
    if (off + 2 * c > state.size())
      throw ShapeError("norm state shorter than the batch-norm stack");
    std::copy(state.begin() + off, state.begin() + off + c,
              b.running_mean.data.begin());
    std::copy(state.begin() + off + c, state.begin() + off + 2 * c,
              b.running_var.data.begin());
    off += 2 * c;
  }
  if (off != state.size())
    throw ShapeError("norm state size does not match the batch-norm stack");
}

// --- Bundle IO -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'T', 'X', 'M', 'D', 'L', '0', '1'};

void append_u64(std::string& buf, std::uint64_t v) {
  char raw[8];
  std::memcpy(raw, &v, 8);
  buf.append(raw, 8);
}

void append_doubles(std::string& buf, const std::vector<double>& v) {
  append_u64(buf, v.size());
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * 8);
}

struct BundleReader {
  std::string data;
  std::size_t pos = 0;

  explicit BundleReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open model bundle: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    data = ss.str();
    if (data.size() < 8 + 8 + 8)
      throw IntegrityError("model bundle truncated: " + path);
    const std::uint64_t stored =
        *reinterpret_cast<const std::uint64_t*>(data.data() + data.size() - 8);
    if (fnv1a(data.data(), data.size() - 8) != stored)
      throw IntegrityError("model bundle checksum mismatch: " + path);
    if (std::memcmp(data.data(), kMagic, 8) != 0)
      throw IntegrityError("not a model bundle: " + path);
    pos = 8;
  }

  std::uint64_t read_u64() {
    if (pos + 8 > data.size() - 8)
      throw IntegrityError("model bundle truncated");
    std::uint64_t v;
    std::memcpy(&v, data.data() + pos, 8);
    pos += 8;
    return v;
  }

  std::string read_bytes(std::uint64_t n) {
    if (pos + n > data.size() - 8)
      throw IntegrityError("model bundle truncated");
    std::string out = data.substr(pos, n);
    pos += n;
    return out;
  }

  std::vector<double> read_doubles() {
    const std::uint64_t n = read_u64();
    std::string raw = read_bytes(n * 8);
    std::vector<double> out(n);
    std::memcpy(out.data(), raw.data(), n * 8);
    return out;
  }
};

void write_bundle(const std::string& path, const json& header,
                  const std::vector<std::pair<std::string,
                                              const std::vector<double>*>>&
                      blobs) {
  std::string buf(kMagic, 8);
  const std::string hdr = header.dump();
  append_u64(buf, hdr.size());
  buf += hdr;
  append_u64(buf, blobs.size());
  for (const auto& [name, vec] : blobs) {
    append_u64(buf, name.size());
    buf += name;
    append_doubles(buf, *vec);
  }
  append_u64(buf, fnv1a(buf.data(), buf.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IntegrityError("cannot write model bundle: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IntegrityError("short write on model bundle: " + path);
}

json read_header(BundleReader& r) {
  const std::uint64_t n = r.read_u64();
  const std::string hdr = r.read_bytes(n);
  json j = json::parse(hdr, nullptr, false);
  if (j.is_discarded())
    throw IntegrityError("model bundle header is not valid JSON");
  return j;
}

std::map<std::string, std::vector<double>> read_blobs(BundleReader& r) {
  const std::uint64_t n = r.read_u64();
  std::map<std::string, std::vector<double>> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t len = r.read_u64();
    std::string name = r.read_bytes(len);
    out[name] = r.read_doubles();
  }
  return out;
}

void restore_blob(const std::map<std::string, std::vector<double>>& blobs,
                  const std::string& name, std::vector<double>& dst) {
  auto it = blobs.find(name);
  if (it == blobs.end())
    throw IntegrityError("model bundle missing tensor: " + name);
  if (it->second.size() != dst.size())
    throw IntegrityError("model bundle tensor size mismatch: " + name);
  dst = it->second;
}

}  // namespace

struct BundleAccess {
  static std::vector<BatchNorm1d>& bn(WindowClassifier& m) { return m.bn_; }
};

void save_sequence_classifier(const std::string& path,
                              const SequenceClassifier& model) {
  const auto& cfg = model.config();
  json header = {{"kind", "sequence_classifier"},
                 {"input_dim", cfg.input_dim},
                 {"lstm_units", cfg.lstm_units},
                 {"fc_units", cfg.fc_units},
                 {"n_classes", cfg.n_classes},
                 {"dropout", cfg.dropout},
                 {"seed", cfg.seed}};
  auto& mut = const_cast<SequenceClassifier&>(model);
  std::vector<std::pair<std::string, const std::vector<double>*>> blobs;
  for (Param* p : mut.params()) blobs.emplace_back(p->name, &p->value.data);
  write_bundle(path, header, blobs);
}

SequenceClassifier load_sequence_classifier(const std::string& path) {
  BundleReader r(path);
  json header = read_header(r);
  if (header.value("kind", "") != "sequence_classifier")
    throw IntegrityError("bundle is not a sequence classifier: " + path);
  SequenceClassifierConfig cfg;
  cfg.input_dim = header.at("input_dim").get<std::size_t>();
  cfg.lstm_units = header.at("lstm_units").get<std::vector<std::size_t>>();
  cfg.fc_units = header.at("fc_units").get<std::size_t>();
  cfg.n_classes = header.at("n_classes").get<std::size_t>();
  cfg.dropout = header.at("dropout").get<double>();
  cfg.seed = header.at("seed").get<std::uint64_t>();
  SequenceClassifier model(cfg);
  auto blobs = read_blobs(r);
  for (Param* p : model.params()) restore_blob(blobs, p->name, p->value.data);
  return model;
}

void save_window_classifier(const std::string& path,
                            const WindowClassifier& model) {
  const auto& cfg = model.config();
  json conv = json::array();
  for (const auto& cs : cfg.conv)
    conv.push_back({{"channels", cs.channels}, {"kernel", cs.kernel}});
  json header = {{"kind", "window_classifier"},
                 {"input_dim", cfg.input_dim},
                 {"window", cfg.window},
                 {"conv", conv},
                 {"batch_norm", cfg.batch_norm},
                 {"fc_units", cfg.fc_units},
                 {"dropout", cfg.dropout},
                 {"seed", cfg.seed}};
  auto& mut = const_cast<WindowClassifier&>(model);
  std::vector<std::pair<std::string, const std::vector<double>*>> blobs;
  for (Param* p : mut.params()) blobs.emplace_back(p->name, &p->value.data);
  auto& bn = BundleAccess::bn(mut);
  for (std::size_t i = 0; i < bn.size(); ++i) {
    blobs.emplace_back("bn" + std::to_string(i) + ".running_mean",
                       &bn[i].running_mean.data);
    blobs.emplace_back("bn" + std::to_string(i) + ".running_var",
                       &bn[i].running_var.data);
  }
  write_bundle(path, header, blobs);
}

WindowClassifier load_window_classifier(const std::string& path) {
  BundleReader r(path);
  json header = read_header(r);
  if (header.value("kind", "") != "window_classifier")
    throw IntegrityError("bundle is not a window classifier: " + path);
  WindowClassifierConfig cfg;
  cfg.input_dim = header.at("input_dim").get<std::size_t>();
  cfg.window = header.at("window").get<std::size_t>();
  cfg.conv.clear();
  for (const auto& cs : header.at("conv"))
    cfg.conv.push_back({cs.at("channels").get<std::size_t>(),
                        cs.at("kernel").get<std::size_t>()});
  cfg.batch_norm = header.at("batch_norm").get<bool>();
  cfg.fc_units = header.at("fc_units").get<std::size_t>();
  cfg.dropout = header.at("dropout").get<double>();
  cfg.seed = header.at("seed").get<std::uint64_t>();
  WindowClassifier model(cfg);
  auto blobs = read_blobs(r);
  for (Param* p : model.params()) restore_blob(blobs, p->name, p->value.data);
  auto& bn = BundleAccess::bn(model);
  for (std::size_t i = 0; i < bn.size(); ++i) {
    restore_blob(blobs, "bn" + std::to_string(i) + ".running_mean",
                 bn[i].running_mean.data);
    restore_blob(blobs, "bn" + std::to_string(i) + ".running_var",
                 bn[i].running_var.data);
  }
  return model;
}

std::string peek_bundle_kind(const std::string& path) {
  BundleReader r(path);
  json header = read_header(r);
  return header.value("kind", "");
}

}  // namespace ctxmon::nn
