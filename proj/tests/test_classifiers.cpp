#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>

#include "ctxmon/classifiers.hpp"
#include "ctxmon/metrics.hpp"
#include "doctest.h"

using namespace ctxmon;

namespace {

// One segment per (gesture, unsafe) pair; position x encodes the gesture and
// the grasper encodes the unsafe condition, so both stages are separable.
Trajectory synth_traj(const std::vector<std::tuple<int, bool>>& segs,
                      std::size_t seg_len, const std::string& group) {
  Trajectory t;
  t.sample_rate_hz = 100.0;
  t.source = TrajectorySource::synthetic;
  t.group = group;
  std::size_t idx = 0;
  for (const auto& [gid, unsafe] : segs) {
    const std::size_t start = idx;
    for (std::size_t k = 0; k < seg_len; ++k, ++idx) {
      KinematicsSample s;
      s.timestamp_ms = double(idx) * 10.0;
      s.right.position = {double(gid), 0.1 * double(k), 0.0};
      s.right.grasper_angle = unsafe ? 2.5 : 0.4;
      s.left.grasper_angle = 0.4;
      t.samples.push_back(s);
    }
    t.segments.push_back({gid, start, idx - 1, unsafe, {}});
  }
  return t;
}

GestureTrainOptions fast_gesture_opts() {
  GestureTrainOptions opts;
  opts.subset = FeatureSubset::custom({19});  // right-arm x encodes gestures
  opts.model.lstm_units = {8};
  opts.model.fc_units = 8;
  opts.model.n_classes = 5;
  opts.model.seed = 1;
  opts.train.learning_rate = 0.02;
  opts.train.max_epochs = 400;
  opts.train.decay_period_epochs = 150;
  opts.train.patience = 400;
  opts.train.batch_size = 2;
  opts.train.seed = 1;
  return opts;
}

DetectorTrainOptions fast_detector_opts() {
  DetectorTrainOptions opts;
  opts.subset = FeatureSubset::custom({12, 31});  // both grasper angles
  opts.window = {10, 1};
  opts.min_samples = 20;
  opts.model.conv = {{4, 3}};
  opts.model.fc_units = 8;
  opts.train.learning_rate = 0.01;
  opts.train.max_epochs = 40;
  opts.train.patience = 40;
  opts.train.batch_size = 16;
  opts.train.seed = 7;
  return opts;
}

}  // namespace

TEST_CASE("loso folds") {
  std::vector<Trajectory> corpus;
  for (const char* g : {"B001", "C002", "B001", "D003", "C002"})
    corpus.push_back(synth_traj({{2, false}}, 4, g));

  SUBCASE("one fold per group, first-appearance order, exact partition") {
    auto folds = make_loso_folds(corpus);
    REQUIRE(folds.size() == 3);
    CHECK(folds[0].group == "B001");
    CHECK(folds[1].group == "C002");
    CHECK(folds[2].group == "D003");
    CHECK(folds[0].test_indices == std::vector<std::size_t>{0, 2});
    CHECK(folds[0].train_indices == std::vector<std::size_t>{1, 3, 4});
    for (const auto& f : folds)
      CHECK(f.train_indices.size() + f.test_indices.size() == corpus.size());
  }
  SUBCASE("a single group cannot form folds") {
    std::vector<Trajectory> one{synth_traj({{2, false}}, 4, "B001"),
                                synth_traj({{2, false}}, 4, "B001")};
    CHECK_THROWS_AS(make_loso_folds(one), ConfigError);
  }
  SUBCASE("a missing group id is rejected") {
    corpus[1].group.clear();
    CHECK_THROWS_AS(make_loso_folds(corpus), ConfigError);
  }
}

TEST_CASE("segment extraction from streaming labels") {
  std::vector<double> ts{0, 10, 20, 30, 40};
  SUBCASE("a run of k opens a new segment") {
    auto segs = segment_predictions({2, 2, 5, 5, 5}, ts, 2);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].gesture_id == 2);
    CHECK(segs[0].end_index == 1);
    CHECK(segs[1].gesture_id == 5);
    CHECK(segs[1].start_index == 2);
    CHECK(segs[1].detected_t_ms == 20.0);
  }
  SUBCASE("runs shorter than k are absorbed") {
    auto segs = segment_predictions({2, 2, 5, 2, 2}, ts, 2);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].gesture_id == 2);
    CHECK(segs[0].start_index == 0);
    CHECK(segs[0].end_index == 4);
  }
  SUBCASE("k=1 splits on every change") {
    auto segs = segment_predictions({2, 5, 2}, {0, 10, 20}, 1);
    REQUIRE(segs.size() == 3);
    CHECK(segs[1].gesture_id == 5);
  }
  SUBCASE("constant stream is one segment") {
    auto segs = segment_predictions({5, 5, 5, 5, 5}, ts, 3);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].end_index == 4);
  }
  SUBCASE("empty input, invalid k") {
    CHECK(segment_predictions({}, {}, 2).empty());
    CHECK_THROWS_AS(segment_predictions({1}, {0.0}, 0), ConfigError);
    CHECK_THROWS_AS(segment_predictions({1, 1}, {0.0}, 1), ShapeError);
  }
}

TEST_CASE("boundary jitter") {
  std::vector<double> ts(200);
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = double(i) * 10.0;
  std::vector<GestureSegment> truth{{2, 0, 99, false, {}},
                                    {5, 100, 199, false, {}}};
  SUBCASE("late detection is negative, early is positive") {
    std::vector<PredictedSegment> pred{{2, 0, 104, 0.0},
                                       {5, 105, 199, 1057.0}};
    JitterReport r = compute_jitter(pred, truth, ts);
    REQUIRE(r.matched.size() == 2);
    CHECK(r.matched[1].jitter_ms == doctest::Approx(1000.0 - 1057.0));
    pred[1].detected_t_ms = 500.0;
    r = compute_jitter(pred, truth, ts);
    CHECK(r.matched[1].jitter_ms == doctest::Approx(500.0));
  }
  SUBCASE("perfect segmentation has zero jitter") {
    std::vector<PredictedSegment> pred{{2, 0, 99, 0.0}, {5, 100, 199, 1000.0}};
    JitterReport r = compute_jitter(pred, truth, ts);
    CHECK(*r.mean_abs_ms == 0.0);
    CHECK(*r.mean_ms == 0.0);
    CHECK(r.unmatched_truth == 0);
  }
  SUBCASE("gestures never predicted are counted, not matched") {
    std::vector<PredictedSegment> pred{{2, 0, 199, 0.0}};
    JitterReport r = compute_jitter(pred, truth, ts);
    CHECK(r.matched.size() == 1);
    CHECK(r.unmatched_truth == 1);
  }
}

TEST_CASE("labeled window extraction follows the start-index rule") {
  Trajectory t = synth_traj({{2, false}, {5, true}}, 10, "B001");
  auto w = extract_labeled_windows(t, {10, 1}, FeatureSubset::custom({0}));
  REQUIRE(w.size() == 11);
  CHECK(w[0].gesture_id == 2);
  CHECK(w[0].unsafe == 0);
  CHECK(w[9].gesture_id == 2);  // starts at 9, crosses into G5
  CHECK(w[10].gesture_id == 5);
  CHECK(w[10].unsafe == 1);
  CHECK(w[10].features.rows == 10);
  CHECK(w[10].features.cols == 1);

  SUBCASE("windows starting outside any segment are skipped") {
    t.segments = {{2, 0, 4, false, {}}};
    auto partial =
        extract_labeled_windows(t, {10, 1}, FeatureSubset::custom({0}));
    CHECK(partial.size() == 5);
  }
}

TEST_CASE("gesture classifier overfits two separable demos") {
  GestureVocabulary vocab = GestureVocabulary::block_transfer();
  std::vector<std::tuple<int, bool>> plan{
      {12, false}, {2, false}, {5, false}, {6, false}, {11, false}};
  std::vector<Trajectory> corpus{synth_traj(plan, 30, "B001"),
                                 synth_traj(plan, 30, "C002")};
  GestureModel model = train_gesture_model(corpus, fast_gesture_opts(), vocab);
  CHECK(gesture_accuracy(model, corpus) >= 0.99);

  SUBCASE("stream predictions cover every sample") {
    Mat probs = predict_gesture_stream(model, corpus[0]);
    CHECK(probs.rows == corpus[0].size());
    auto ids = predicted_gesture_ids(probs, vocab);
    CHECK(ids.size() == corpus[0].size());
    for (int id : ids) CHECK(vocab.contains(id));
  }
  SUBCASE("model bundle round trip replays predictions") {
    const std::string dir =
        (std::filesystem::temp_directory_path() / "gesture_model").string();
    save_gesture_model(model, dir);
    GestureModel back = load_gesture_model(dir);
    Mat a = predict_gesture_stream(model, corpus[1]);
    Mat b = predict_gesture_stream(back, corpus[1]);
    REQUIRE(a.d.size() == b.d.size());
    for (std::size_t i = 0; i < a.d.size(); ++i) CHECK(a.d[i] == b.d[i]);
  }
}

TEST_CASE("loso over gestures reports one fold per group") {
  GestureVocabulary vocab = GestureVocabulary::block_transfer();
  std::vector<std::tuple<int, bool>> plan{{12, false}, {2, false}, {5, false}};
  std::vector<Trajectory> corpus;
  for (const char* g : {"B001", "C002", "D003"})
    corpus.push_back(synth_traj(plan, 25, g));
  GestureLosoResult r =
      train_gesture_classifier(corpus, fast_gesture_opts(), vocab);
  REQUIRE(r.folds.size() == 3);
  double sum = 0.0;
  for (const auto& f : r.folds) {
    CHECK(f.accuracy >= 0.0);
    CHECK(f.accuracy <= 1.0);
    sum += f.accuracy;
  }
  CHECK(r.mean_accuracy == doctest::Approx(sum / 3.0));
  CHECK(gesture_accuracy(r.final_model, corpus) >= 0.99);
}

TEST_CASE("error detector library") {
  GestureVocabulary vocab = GestureVocabulary::block_transfer();
  std::vector<Trajectory> corpus;
  for (int i = 0; i < 6; ++i) {
    corpus.push_back(synth_traj({{5, false}, {5, true}}, 30,
                                "B00" + std::to_string(i % 2)));
    corpus.push_back(synth_traj({{6, false}}, 30, "C003"));
  }
  DetectorTrainOptions opts = fast_detector_opts();
  DetectorLibrary lib = train_error_detectors(corpus, opts, vocab);

  std::vector<Trajectory> norm = corpus;
  zscore_normalize(norm, lib.stats);
  std::vector<LabeledWindow> probe;
  for (const auto& t : norm) {
    auto w = extract_labeled_windows(t, lib.window, lib.subset);
    probe.insert(probe.end(), w.begin(), w.end());
  }
  REQUIRE_FALSE(probe.empty());

  SUBCASE("routing: own detector when trainable, baseline otherwise") {
    CHECK(lib.route(5) == "G5");
    CHECK(lib.route(6) == "baseline");  // degenerate: no unsafe windows
    CHECK(lib.route(2) == "baseline");  // never seen
  }
  SUBCASE("scores are probabilities with matching provenance") {
    for (std::size_t i = 0; i < probe.size(); i += 17) {
      ErrorScore s = score_window(lib, probe[i].gesture_id, probe[i].features);
      CHECK(s.score >= 0.0);
      CHECK(s.score <= 1.0);
      CHECK(s.provenance == lib.route(probe[i].gesture_id));
    }
  }
  SUBCASE("separable faults give near-perfect window AUC") {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& w : probe) {
      if (w.gesture_id != 5) continue;
      scores.push_back(score_window(lib, 5, w.features).score);
      labels.push_back(w.unsafe);
    }
    CHECK(*roc_auc(scores, labels).auc >= 0.99);
  }
  SUBCASE("same seed trains an identical library") {
    DetectorLibrary again = train_error_detectors(corpus, opts, vocab);
    for (std::size_t i = 0; i < probe.size(); i += 29) {
      const auto a = score_window(lib, probe[i].gesture_id, probe[i].features);
      const auto b =
          score_window(again, probe[i].gesture_id, probe[i].features);
      CHECK(a.score == b.score);
    }
  }
  SUBCASE("raising min_samples forces the baseline route") {
    DetectorLibrary strict = lib;
    strict.min_samples = 100000;
    CHECK(strict.route(5) == "baseline");
  }
  SUBCASE("own detector and baseline disagree on the same window") {
    bool any_diff = false;
    for (const auto& w : probe) {
      if (w.gesture_id != 5) continue;
      const double own = score_window(lib, 5, w.features).score;
      const double base = lib.baseline->score(w.features);
      if (own != base) any_diff = true;
    }
    CHECK(any_diff);
  }
  SUBCASE("library round trip replays scores byte-identically") {
    const std::string dir =
        (std::filesystem::temp_directory_path() / "detector_lib").string();
    save_detector_library(lib, dir);
    DetectorLibrary back = load_detector_library(dir);
    CHECK(back.vocab.ids == lib.vocab.ids);
    CHECK(back.threshold == lib.threshold);
    for (std::size_t i = 0; i < probe.size(); i += 23) {
      const auto a = score_window(lib, probe[i].gesture_id, probe[i].features);
      const auto b =
          score_window(back, probe[i].gesture_id, probe[i].features);
      CHECK(a.score == b.score);
      CHECK(a.provenance == b.provenance);
    }
  }
}
