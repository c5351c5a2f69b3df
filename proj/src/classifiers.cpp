#include "ctxmon/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"

namespace ctxmon {

namespace fs = std::filesystem;
using nlohmann::json;

// --- LOSO folds ------------------------------------------------------------

std::vector<LosoFold> make_loso_folds(const std::vector<Trajectory>& corpus) {
  std::vector<std::string> groups;
  for (const auto& t : corpus) {
    if (t.group.empty())
      throw ConfigError("trajectory without a group id cannot join LOSO");
    if (std::find(groups.begin(), groups.end(), t.group) == groups.end())
      groups.push_back(t.group);
  }
  if (groups.size() < 2)
    throw ConfigError("LOSO needs at least two distinct groups, got " +
                      std::to_string(groups.size()));
  std::vector<LosoFold> folds;
  for (const auto& g : groups) {
    LosoFold fold;
    fold.group = g;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      (corpus[i].group == g ? fold.test_indices : fold.train_indices)
          .push_back(i);
    folds.push_back(std::move(fold));
  }
  return folds;
}

// --- Stage 1 ---------------------------------------------------------------

namespace {

Mat subset_matrix(const Trajectory& traj, const FeatureSubset& subset) {
  Mat x(traj.size(), subset.dim());
  for (std::size_t t = 0; t < traj.size(); ++t) {
    std::vector<double> f = select_features(traj.samples[t], subset);
    std::copy(f.begin(), f.end(), x.row(t));
  }
  return x;
}

std::vector<int> vocab_labels(const Trajectory& traj,
                              const GestureVocabulary& vocab) {
  std::vector<int> out;
  out.reserve(traj.size());
  for (int g : traj.gesture_labels())
    out.push_back(g >= 0 && vocab.contains(g)
                      ? static_cast<int>(vocab.index_of(g))
                      : -1);
  return out;
}

struct Chunk {
  Mat x;
  std::vector<int> labels;
};

void scale_grads(const std::vector<nn::Param*>& params, double scale) {
  for (nn::Param* p : params)
    for (auto& g : p->grad.data) g *= scale;
}

}  // namespace

GestureModel train_gesture_model(const std::vector<Trajectory>& train_corpus,
                                 const GestureTrainOptions& opts,
                                 const GestureVocabulary& vocab) {
  if (train_corpus.empty()) throw ConfigError("empty gesture training corpus");
  if (opts.chunk_len == 0) throw ConfigError("chunk_len must be positive");

  FeatureStats stats = compute_feature_stats(train_corpus);
  std::vector<Trajectory> corpus = train_corpus;
  zscore_normalize(corpus, stats);

  nn::SequenceClassifierConfig cfg = opts.model;
  cfg.input_dim = opts.subset.dim();
  if (cfg.n_classes < vocab.ids.size())
    throw ConfigError("classifier output narrower than the vocabulary");
  cfg.seed = derive_seed(opts.train.seed, "gesture-init");
  GestureModel model{nn::SequenceClassifier(cfg), opts.subset, stats, vocab};

  // Trajectory-level validation split for early stopping.
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 split_rng(derive_seed(opts.train.seed, "gesture-valsplit"));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_val = 0;
  if (corpus.size() >= 4 && opts.val_fraction > 0)
    n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(opts.val_fraction * double(corpus.size()))));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> fit_idx(order.begin() + n_val, order.end());

  std::vector<Chunk> chunks;
  for (std::size_t ti : fit_idx) {
    Mat x = subset_matrix(corpus[ti], opts.subset);
    std::vector<int> labels = vocab_labels(corpus[ti], vocab);
    for (std::size_t start = 0; start < x.rows; start += opts.chunk_len) {
      const std::size_t end = std::min(x.rows, start + opts.chunk_len);
      Chunk c;
      c.x = Mat(end - start, x.cols);
      std::copy(x.row(start), x.row(start) + (end - start) * x.cols,
                c.x.d.begin());
      c.labels.assign(labels.begin() + start, labels.begin() + end);
      if (std::any_of(c.labels.begin(), c.labels.end(),
                      [](int l) { return l >= 0; }))
        chunks.push_back(std::move(c));
    }
  }
  if (chunks.empty()) throw ConfigError("no labeled samples to train on");

  std::vector<Chunk> val_chunks;
  for (std::size_t ti : val_idx) {
    Chunk c;
    c.x = subset_matrix(corpus[ti], opts.subset);
    c.labels = vocab_labels(corpus[ti], vocab);
    val_chunks.push_back(std::move(c));
  }

  nn::FitProblem problem;
  problem.n_items = chunks.size();
  problem.params = model.net.params();
  problem.batch_loss_and_grad =
      [&](const std::vector<std::size_t>& batch) -> double {
    double loss = 0.0;
    for (std::size_t idx : batch)
      loss += model.net.sequence_loss_and_grad(chunks[idx].x,
                                               chunks[idx].labels);
    const double scale = 1.0 / double(batch.size());
    scale_grads(problem.params, scale);
    return loss * scale;
  };
  if (!val_chunks.empty()) {
    problem.validation_loss = [&]() -> double {
      double loss = 0.0;
      std::size_t count = 0;
      for (const auto& c : val_chunks) {
        Mat p = model.net.predict_sequence(c.x);
        for (std::size_t t = 0; t < p.rows; ++t) {
          if (c.labels[t] < 0) continue;
          loss -= std::log(std::max(p.at(t, std::size_t(c.labels[t])), 1e-300));
          ++count;
        }
      }
      return count ? loss / double(count) : 0.0;
    };
  }
  nn::fit(problem, opts.train);
  return model;
}

Mat predict_gesture_stream(const GestureModel& model, const Trajectory& traj) {
  Trajectory norm = traj;
  zscore_normalize(norm, model.stats);
  return model.net.predict_sequence(subset_matrix(norm, model.subset));
}

std::vector<int> predicted_gesture_ids(const Mat& probs,
                                       const GestureVocabulary& vocab) {
  std::vector<int> out;
  out.reserve(probs.rows);
  for (std::size_t t = 0; t < probs.rows; ++t) {
    const double* r = probs.row(t);
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols; ++c)
      if (r[c] > r[best]) best = c;
    out.push_back(best < vocab.ids.size() ? vocab.ids[best] : -1);
  }
  return out;
}

double gesture_accuracy(const GestureModel& model,
                        const std::vector<Trajectory>& test_corpus) {
  std::size_t correct = 0, total = 0;
  for (const auto& traj : test_corpus) {
    Mat probs = predict_gesture_stream(model, traj);
    std::vector<int> pred = predicted_gesture_ids(probs, model.vocab);
    std::vector<int> truth = traj.gesture_labels();
    for (std::size_t t = 0; t < pred.size(); ++t) {
      if (truth[t] < 0) continue;
      ++total;
      if (pred[t] == truth[t]) ++correct;
    }
  }
  if (total == 0) throw ConfigError("no labeled samples in test corpus");
  return double(correct) / double(total);
}

GestureLosoResult train_gesture_classifier(
    const std::vector<Trajectory>& corpus, const GestureTrainOptions& opts,
    const GestureVocabulary& vocab) {
  std::vector<LosoFold> folds = make_loso_folds(corpus);
  GestureLosoResult result{
      {}, 0.0, GestureModel{nn::SequenceClassifier(opts.model), opts.subset,
                            FeatureStats{}, vocab}};
  double acc_sum = 0.0;
  for (const auto& fold : folds) {
    std::vector<Trajectory> train, test;
    for (std::size_t i : fold.train_indices) train.push_back(corpus[i]);
    for (std::size_t i : fold.test_indices) test.push_back(corpus[i]);
    if (train.empty() || test.empty())
      throw ConfigError("LOSO fold with an empty split: " + fold.group);
    GestureModel m = train_gesture_model(train, opts, vocab);
    const double acc = gesture_accuracy(m, test);
    result.folds.push_back({fold.group, acc});
    acc_sum += acc;
  }
  result.mean_accuracy = acc_sum / double(folds.size());
  result.final_model = train_gesture_model(corpus, opts, vocab);
  return result;
}

// --- Boundary extraction and jitter ----------------------------------------

std::vector<PredictedSegment> segment_predictions(
    const std::vector<int>& labels, const std::vector<double>& timestamps_ms,
    std::size_t persistence_k) {
  if (persistence_k < 1) throw ConfigError("persistence k must be >= 1");
  if (labels.size() != timestamps_ms.size())
    throw ShapeError("label/timestamp length mismatch");
  std::vector<PredictedSegment> out;
  if (labels.empty()) return out;

  PredictedSegment cur{labels[0], 0, 0, timestamps_ms[0]};
  std::size_t i = 1;
  while (i < labels.size()) {
    if (labels[i] == cur.gesture_id) {
      ++i;
      continue;
    }
    std::size_t run = 1;
    while (i + run < labels.size() && labels[i + run] == labels[i]) ++run;
    if (run >= persistence_k) {
      cur.end_index = i - 1;
      out.push_back(cur);
      cur = PredictedSegment{labels[i], i, i, timestamps_ms[i]};
    }
    i += run;
  }
  cur.end_index = labels.size() - 1;
  out.push_back(cur);
  return out;
}

JitterReport compute_jitter(const std::vector<PredictedSegment>& predicted,
                            const std::vector<GestureSegment>& truth,
                            const std::vector<double>& timestamps_ms) {
  JitterReport report;
  double sum = 0.0, sum_abs = 0.0;
  for (const auto& ts : truth) {
    if (ts.start_index >= timestamps_ms.size())
      throw ShapeError("truth segment outside the time base");
    const double onset = timestamps_ms[ts.start_index];
    const PredictedSegment* best = nullptr;
    for (const auto& ps : predicted) {
      if (ps.gesture_id != ts.gesture_id) continue;
      if (!best || std::abs(onset - ps.detected_t_ms) <
                       std::abs(onset - best->detected_t_ms))
        best = &ps;
    }
    if (!best) {
      ++report.unmatched_truth;
      continue;
    }
    const double jitter = onset - best->detected_t_ms;
    report.matched.push_back({ts.gesture_id, jitter});
    sum += jitter;
    sum_abs += std::abs(jitter);
  }
  if (!report.matched.empty()) {
    report.mean_ms = sum / double(report.matched.size());
    report.mean_abs_ms = sum_abs / double(report.matched.size());
  }
  return report;
}

// --- Stage 2 ---------------------------------------------------------------

std::vector<LabeledWindow> extract_labeled_windows(
    const Trajectory& normalized, const SlidingWindowSpec& spec,
    const FeatureSubset& subset) {
  std::vector<LabeledWindow> out;
  for (const Window& w : windows(normalized, spec, subset)) {
    const GestureSegment* seg = normalized.segment_at(w.start_index);
    if (!seg) continue;
    LabeledWindow lw;
    lw.gesture_id = seg->gesture_id;
    bool unsafe = seg->unsafe;
    // An unsafe segment can extend beyond the injection window on either
    // side, and a window that merely grazes the perturbed span is still
    // dominated by untouched motion. Training labels require a majority of
    // the window's samples inside [onset, end]; labeling grazing windows
    // positive teaches the detector that clean content is erroneous.
    if (unsafe && normalized.fault_onset_ms) {
      const std::size_t last =
          std::min(w.start_index + spec.window - 1, normalized.size() - 1);
      std::size_t covered = 0;
      for (std::size_t i = w.start_index; i <= last; ++i) {
        const double t = normalized.samples[i].timestamp_ms;
        if (t >= *normalized.fault_onset_ms &&
            (!normalized.fault_end_ms || t <= *normalized.fault_end_ms))
          ++covered;
      }
      if (covered * 2 < last - w.start_index + 1) unsafe = false;
    }
    lw.unsafe = unsafe ? 1 : 0;
    lw.start_index = w.start_index;
    lw.features = Mat(spec.window, subset.dim());
    std::copy(w.features.begin(), w.features.end(), lw.features.d.begin());
    out.push_back(std::move(lw));
  }
  return out;
}

namespace {

nn::WindowClassifier train_window_net(
    const std::vector<const LabeledWindow*>& items,
    const DetectorTrainOptions& opts, std::uint64_t seed) {
  nn::WindowClassifierConfig cfg = opts.model;
  cfg.input_dim = opts.subset.dim();
  cfg.window = opts.window.window;
  cfg.seed = derive_seed(seed, "window-init");
  nn::WindowClassifier net(cfg);

  // Validation split by source demo: stride-1 windows overlap almost
  // entirely, so a window-level split leaks training content into the
  // validation set and early stopping never fires.
  std::vector<std::size_t> demos;
  for (const LabeledWindow* w : items)
    if (std::find(demos.begin(), demos.end(), w->demo) == demos.end())
      demos.push_back(w->demo);
  std::mt19937_64 split_rng(derive_seed(seed, "window-valsplit"));
  std::shuffle(demos.begin(), demos.end(), split_rng);
  std::size_t n_val_demos = 0;
  if (demos.size() >= 4 && opts.val_fraction > 0)
    n_val_demos = std::min(
        demos.size() - 1,
        std::max<std::size_t>(
            1, static_cast<std::size_t>(
                   std::llround(opts.val_fraction * double(demos.size())))));
  const std::vector<std::size_t> val_demos(demos.begin(),
                                           demos.begin() + n_val_demos);
  std::vector<std::size_t> val_idx, fit_idx;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const bool in_val = std::find(val_demos.begin(), val_demos.end(),
                                  items[i]->demo) != val_demos.end();
    (in_val ? val_idx : fit_idx).push_back(i);
  }
  if (fit_idx.empty()) throw ConfigError("no windows left after split");

  nn::FitProblem problem;
  problem.n_items = fit_idx.size();
  problem.params = net.params();
  problem.batch_loss_and_grad =
      [&](const std::vector<std::size_t>& batch) -> double {
    std::vector<Mat> xs;
    std::vector<int> ys;
    for (std::size_t b : batch) {
      xs.push_back(items[fit_idx[b]]->features);
      ys.push_back(items[fit_idx[b]]->unsafe);
    }
    return net.batch_loss_and_grad(xs, ys);
  };
  if (!val_idx.empty()) {
    problem.validation_loss = [&]() -> double {
      double loss = 0.0;
      for (std::size_t v : val_idx) {
        nn::LossGrad lg = nn::sigmoid_bce(net.logit(items[v]->features),
                                          items[v]->unsafe);
        loss += lg.loss;
      }
      return loss / double(val_idx.size());
    };
  }
  problem.capture_state = [&] { return net.norm_state(); };
  problem.restore_state = [&](const std::vector<double>& s) {
    net.set_norm_state(s);
  };
  nn::fit(problem, [&] {
    nn::TrainConfig tc = opts.train;
    tc.seed = derive_seed(seed, "window-shuffle");
    return tc;
  }());
  return net;
}

}  // namespace

nn::WindowClassifier train_baseline_detector(
    const std::vector<LabeledWindow>& windows, const DetectorTrainOptions& opts,
    std::uint64_t seed) {
  if (windows.empty()) throw ConfigError("no windows for baseline training");
  std::vector<const LabeledWindow*> items;
  items.reserve(windows.size());
  for (const auto& w : windows) items.push_back(&w);
  return train_window_net(items, opts, seed);
}

DetectorLibrary train_error_detectors(const std::vector<Trajectory>& corpus,
                                      const DetectorTrainOptions& opts,
                                      const GestureVocabulary& vocab) {
  if (corpus.empty()) throw ConfigError("empty detector training corpus");
  FeatureStats stats = compute_feature_stats(corpus);
  std::vector<Trajectory> norm = corpus;
  zscore_normalize(norm, stats);

  std::vector<LabeledWindow> all;
  for (std::size_t d = 0; d < norm.size(); ++d) {
    auto w = extract_labeled_windows(norm[d], opts.window, opts.subset);
    for (auto& lw : w) lw.demo = d;
    all.insert(all.end(), std::make_move_iterator(w.begin()),
               std::make_move_iterator(w.end()));
  }
  if (all.empty()) throw ConfigError("corpus produced no labeled windows");

  DetectorLibrary lib;
  lib.vocab = vocab;
  lib.subset = opts.subset;
  lib.window = opts.window;
  lib.stats = stats;
  lib.min_samples = opts.min_samples;
  lib.baseline = train_baseline_detector(
      all, opts, derive_seed(opts.train.seed, "baseline"));

  for (int g : vocab.ids) {
    std::vector<const LabeledWindow*> items;
    std::size_t n_unsafe = 0;
    for (const auto& w : all) {
      if (w.gesture_id != g) continue;
      items.push_back(&w);
      n_unsafe += std::size_t(w.unsafe);
    }
    if (items.size() < opts.min_samples) continue;
    Detector det{train_window_net(
                     items, opts,
                     derive_seed(opts.train.seed, "detector", std::uint64_t(g))),
                 n_unsafe == 0 || n_unsafe == items.size(), items.size()};
    lib.detectors.emplace(g, std::move(det));
  }
  return lib;
}

std::string DetectorLibrary::route(int gesture_id) const {
  // A degenerate detector (trained on one class only) still serves: it
  // converges to the constant prior for its gesture, which beats borrowing
  // the pooled baseline's context-free false alarms.
  auto it = detectors.find(gesture_id);
  if (it != detectors.end() && it->second.n_train_windows >= min_samples)
    return "G" + std::to_string(gesture_id);
  if (baseline) return "baseline";
  throw ConfigError("no detector route for gesture " +
                    std::to_string(gesture_id));
}

ErrorScore score_window(const DetectorLibrary& library, int gesture_id,
                        const Mat& window) {
  const std::string route = library.route(gesture_id);
  const nn::WindowClassifier& net = route == "baseline"
                                        ? *library.baseline
                                        : library.detectors.at(gesture_id).net;
  return {net.score(window), route};
}

// --- Persistence ------------------------------------------------------------

namespace {

json subset_to_json(const FeatureSubset& s) {
  return {{"name", s.name()}, {"indices", s.indices()}};
}

FeatureSubset subset_from_json(const json& j) {
  const std::string name = j.at("name").get<std::string>();
  if (name == "all" || name == "crg" || name == "cg")
    return FeatureSubset::from_name(name);
  return FeatureSubset::custom(j.at("indices").get<std::vector<int>>());
}

json stats_to_json(const FeatureStats& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}};
}

FeatureStats stats_from_json(const json& j) {
  return {j.at("mean").get<std::vector<double>>(),
          j.at("stddev").get<std::vector<double>>()};
}

json vocab_to_json(const GestureVocabulary& v) {
  return {{"ids", v.ids}, {"names", v.names}};
}

GestureVocabulary vocab_from_json(const json& j) {
  GestureVocabulary v;
  v.ids = j.at("ids").get<std::vector<int>>();
  v.names = j.at("names").get<std::vector<std::string>>();
  return v;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IntegrityError("cannot write " + path);
  out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("cannot read " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError("invalid JSON in " + path);
  return j;
}

}  // namespace

void save_gesture_model(const GestureModel& model, const std::string& dir) {
  fs::create_directories(dir);
  nn::save_sequence_classifier(dir + "/gesture.bin", model.net);
  json meta = {{"subset", subset_to_json(model.subset)},
               {"stats", stats_to_json(model.stats)},
               {"vocab", vocab_to_json(model.vocab)}};
  write_json(dir + "/gesture.json", meta);
}

GestureModel load_gesture_model(const std::string& dir) {
  json meta = read_json(dir + "/gesture.json");
  return GestureModel{nn::load_sequence_classifier(dir + "/gesture.bin"),
                      subset_from_json(meta.at("subset")),
                      stats_from_json(meta.at("stats")),
                      vocab_from_json(meta.at("vocab"))};
}

void save_detector_library(const DetectorLibrary& library,
                           const std::string& dir) {
  fs::create_directories(dir);
  json detectors = json::array();
  for (const auto& [g, det] : library.detectors) {
    const std::string file = "detector_G" + std::to_string(g) + ".bin";
    nn::save_window_classifier(dir + "/" + file, det.net);
    detectors.push_back({{"gesture", g},
                         {"file", file},
                         {"degenerate", det.degenerate},
                         {"n_train_windows", det.n_train_windows}});
  }
  json manifest = {{"vocab", vocab_to_json(library.vocab)},
                   {"subset", subset_to_json(library.subset)},
                   {"window", {{"window", library.window.window},
                               {"stride", library.window.stride}}},
                   {"stats", stats_to_json(library.stats)},
                   {"threshold", library.threshold},
                   {"min_samples", library.min_samples},
                   {"detectors", detectors},
                   {"has_baseline", library.baseline.has_value()},
                   {"has_gesture_model", library.gesture.has_value()}};
  if (library.baseline)
    nn::save_window_classifier(dir + "/baseline.bin", *library.baseline);
  if (library.gesture) save_gesture_model(*library.gesture, dir + "/gesture");
  write_json(dir + "/manifest.json", manifest);
}

DetectorLibrary load_detector_library(const std::string& dir) {
  json manifest = read_json(dir + "/manifest.json");
  DetectorLibrary lib;
  lib.vocab = vocab_from_json(manifest.at("vocab"));
  lib.subset = subset_from_json(manifest.at("subset"));
  lib.window = {manifest.at("window").at("window").get<std::size_t>(),
                manifest.at("window").at("stride").get<std::size_t>()};
  lib.stats = stats_from_json(manifest.at("stats"));
  lib.threshold = manifest.at("threshold").get<double>();
  lib.min_samples = manifest.at("min_samples").get<std::size_t>();
  for (const auto& d : manifest.at("detectors")) {
    Detector det{nn::load_window_classifier(
                     dir + "/" + d.at("file").get<std::string>()),
                 d.at("degenerate").get<bool>(),
                 d.at("n_train_windows").get<std::size_t>()};
    lib.detectors.emplace(d.at("gesture").get<int>(), std::move(det));
  }
  if (manifest.at("has_baseline").get<bool>())
    lib.baseline = nn::load_window_classifier(dir + "/baseline.bin");
  if (manifest.at("has_gesture_model").get<bool>())
    lib.gesture = load_gesture_model(dir + "/gesture");
  return lib;
}

}  // namespace ctxmon
