#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ctxmon/nn/models.hpp"
#include "doctest.h"

using namespace ctxmon;
using namespace ctxmon::nn;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Mat random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat m(r, c);
  for (auto& v : m.d) v = u(rng);
  return m;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("dense layer basics") {
  std::mt19937_64 rng(1);
  SUBCASE("identity weights pass input through") {
    Dense d(3, 3, false, "d", rng);
    std::fill(d.w.value.data.begin(), d.w.value.data.end(), 0.0);
    for (int i = 0; i < 3; ++i) d.w.value.data[i * 3 + i] = 1.0;
    std::fill(d.b.value.data.begin(), d.b.value.data.end(), 0.0);
    Mat x = random_mat(4, 3, rng);
    Mat y = d.forward(x);
    for (std::size_t i = 0; i < x.d.size(); ++i) CHECK(y.d[i] == x.d[i]);
  }
  SUBCASE("relu clips negatives") {
    Dense d(1, 1, true, "d", rng);
    d.w.value.data[0] = 1.0;
    d.b.value.data[0] = 0.0;
    Mat x(2, 1);
    x.d = {-1.0, 2.0};
    Mat y = d.forward(x);
    CHECK(y.d[0] == 0.0);
    CHECK(y.d[1] == 2.0);
  }
  SUBCASE("gradient check on a random 8x8 layer") {
    Dense d(8, 8, true, "d", rng);
    Mat x = random_mat(5, 8, rng);
    Mat target = random_mat(5, 8, rng);
    std::vector<Param*> params;
    d.collect(params);
    auto loss = [&]() -> double {
      Mat y = d.forward(x);
      double l = 0.0;
      Mat dy(y.rows, y.cols);
      for (std::size_t i = 0; i < y.d.size(); ++i) {
        const double e = y.d[i] - target.d[i];
        l += 0.5 * e * e;
        dy.d[i] = e;
      }
      d.backward(dy);
      return l;
    };
    CHECK(gradient_check(params, loss, 1.0, 7) <= 1e-4);
  }
}

TEST_CASE("lstm cell and BPTT") {
  std::mt19937_64 rng(2);
  SUBCASE("all-zero parameters and input give zero state") {
    LSTMLayer l(3, 4, "l", rng);
    std::fill(l.wx.value.data.begin(), l.wx.value.data.end(), 0.0);
    std::fill(l.wh.value.data.begin(), l.wh.value.data.end(), 0.0);
    std::fill(l.b.value.data.begin(), l.b.value.data.end(), 0.0);
    Mat x(1, 3);
    Mat h = l.forward_seq(x);
    for (double v : h.d) CHECK(v == 0.0);
  }
  SUBCASE("sequence gradient check, 2 steps, 4 units") {
    LSTMLayer l(3, 4, "l", rng);
    Mat x = random_mat(2, 3, rng);
    Mat target = random_mat(2, 4, rng);
    std::vector<Param*> params;
    l.collect(params);
    auto loss = [&]() -> double {
      Mat h = l.forward_seq(x);
      double out = 0.0;
      Mat dh(h.rows, h.cols);
      for (std::size_t i = 0; i < h.d.size(); ++i) {
        const double e = h.d[i] - target.d[i];
        out += 0.5 * e * e;
        dh.d[i] = e;
      }
      l.backward_seq(dh);
      return out;
    };
    CHECK(gradient_check(params, loss, 1.0, 3) <= 1e-4);
  }
  SUBCASE("streaming step matches the sequence pass") {
    LSTMLayer l(3, 4, "l", rng);
    Mat x = random_mat(6, 3, rng);
    Mat h = l.infer_seq(x);
    l.reset_state();
    for (std::size_t t = 0; t < x.rows; ++t) {
      std::vector<double> xt(x.row(t), x.row(t) + 3);
      std::vector<double> ht = l.step(xt);
      for (std::size_t j = 0; j < 4; ++j) CHECK(ht[j] == h.at(t, j));
    }
  }
}

TEST_CASE("conv1d") {
  std::mt19937_64 rng(3);
  SUBCASE("kernel [1] with unit weight is the identity") {
    Conv1d c(1, 1, 1, "c", rng);
    c.w.value.data[0] = 1.0;
    c.b.value.data[0] = 0.0;
    Mat x(4, 1);
    x.d = {1, 2, 3, 4};
    Mat y = c.forward(x);
    CHECK(y.d == x.d);
  }
  SUBCASE("cross-correlation with kernel [0,1]") {
    Conv1d c(1, 1, 2, "c", rng);
    c.w.value.data = {0.0, 1.0};
    c.b.value.data[0] = 0.0;
    Mat x(4, 1);
    x.d = {1, 2, 3, 4};
    Mat y = c.forward(x);
    REQUIRE(y.rows == 3);
    CHECK(y.d == std::vector<double>{2, 3, 4});
  }
  SUBCASE("kernel longer than input throws") {
    Conv1d c(1, 1, 5, "c", rng);
    Mat x(3, 1);
    CHECK_THROWS_AS(c.forward(x), ShapeError);
  }
  SUBCASE("gradient check, T=12, k=3, 2 filters") {
    Conv1d c(2, 2, 3, "c", rng);
    Mat x = random_mat(12, 2, rng);
    Mat target = random_mat(10, 2, rng);
    std::vector<Param*> params;
    c.collect(params);
    auto loss = [&]() -> double {
      Mat y = c.forward(x);
      double l = 0.0;
      Mat dy(y.rows, y.cols);
      for (std::size_t i = 0; i < y.d.size(); ++i) {
        const double e = y.d[i] - target.d[i];
        l += 0.5 * e * e;
        dy.d[i] = e;
      }
      c.backward(dy);
      return l;
    };
    CHECK(gradient_check(params, loss, 1.0, 5) <= 1e-4);
  }
}

TEST_CASE("batch normalization") {
  std::mt19937_64 rng(4);
  SUBCASE("training output has mean 0 and variance 1") {
    BatchNorm1d bn(3, "bn");
    std::vector<Mat> xs{random_mat(7, 3, rng), random_mat(5, 3, rng)};
    auto ys = bn.forward_train(xs);
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0.0, var = 0.0;
      std::size_t n = 0;
      for (const auto& y : ys)
        for (std::size_t r = 0; r < y.rows; ++r) {
          mean += y.at(r, j);
          ++n;
        }
      mean /= double(n);
      for (const auto& y : ys)
        for (std::size_t r = 0; r < y.rows; ++r) {
          const double d = y.at(r, j) - mean;
          var += d * d;
        }
      var /= double(n);
      CHECK(std::abs(mean) < 1e-9);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
  SUBCASE("training batch of one row is a configuration error") {
    BatchNorm1d bn(2, "bn");
    std::vector<Mat> xs{random_mat(1, 2, rng)};
    CHECK_THROWS_AS(bn.forward_train(xs), ConfigError);
  }
  SUBCASE("inference with running stats (0,1) is the identity") {
    BatchNorm1d bn(2, "bn");
    Mat x = random_mat(4, 2, rng);
    Mat y = bn.infer(x);
    for (std::size_t i = 0; i < x.d.size(); ++i)
      CHECK(y.d[i] == doctest::Approx(x.d[i]).epsilon(1e-4));
  }
  SUBCASE("gradient check") {
    BatchNorm1d bn(2, "bn");
    std::vector<Mat> xs{random_mat(4, 2, rng), random_mat(3, 2, rng)};
    std::vector<Mat> targets{random_mat(4, 2, rng), random_mat(3, 2, rng)};
    std::vector<Param*> params;
    bn.collect(params);
    auto loss = [&]() -> double {
      auto ys = bn.forward_train(xs);
      double l = 0.0;
      std::vector<Mat> dys;
      for (std::size_t k = 0; k < ys.size(); ++k) {
        Mat dy(ys[k].rows, ys[k].cols);
        for (std::size_t i = 0; i < ys[k].d.size(); ++i) {
          const double e = ys[k].d[i] - targets[k].d[i];
          l += 0.5 * e * e;
          dy.d[i] = e;
        }
        dys.push_back(std::move(dy));
      }
      bn.backward(dys);
      return l;
    };
    CHECK(gradient_check(params, loss, 1.0, 8) <= 1e-4);
  }
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(5);
  Dropout drop;
  SUBCASE("rate 0 is the identity") {
    drop.rate = 0.0;
    Mat x = random_mat(3, 3, rng);
    Mat y = drop.forward_train(x, rng);
    CHECK(y.d == x.d);
  }
  SUBCASE("survivors are scaled so the mean is preserved") {
    drop.rate = 0.5;
    const int n = 100000;
    Mat x(n, 1);
    std::fill(x.d.begin(), x.d.end(), 1.0);
    Mat y = drop.forward_train(x, rng);
    double mean = 0.0;
    for (double v : y.d) mean += v;
    mean /= n;
    CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("losses") {
  SUBCASE("zero logits give uniform probabilities and loss ln K") {
    std::vector<double> logits(5, 0.0);
    LossGrad lg = softmax_xent(logits, 2);
    CHECK(lg.loss == doctest::Approx(std::log(5.0)));
    auto p = softmax(logits);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v == doctest::Approx(0.2));
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("softmax gradient is p - y") {
    std::vector<double> logits{0.3, -1.2, 2.0};
    LossGrad lg = softmax_xent(logits, 0);
    auto p = softmax(logits);
    CHECK(lg.dlogits[0] == doctest::Approx(p[0] - 1.0));
    CHECK(lg.dlogits[1] == doctest::Approx(p[1]));
    CHECK(lg.dlogits[2] == doctest::Approx(p[2]));
  }
  SUBCASE("bce gradient is sigmoid(z) - y") {
    LossGrad lg = sigmoid_bce(0.7, 1);
    CHECK(lg.dlogits[0] == doctest::Approx(sigmoid(0.7) - 1.0));
    CHECK(lg.loss == doctest::Approx(-std::log(sigmoid(0.7))));
  }
}

TEST_CASE("adam") {
  Param p("p", {1});
  p.value.data[0] = 1.0;
  Adam opt({&p});
  SUBCASE("first step with unit gradient moves by about lr") {
    p.grad.data[0] = 1.0;
    opt.step(0.01);
    CHECK(p.value.data[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  }
  SUBCASE("zero gradient from fresh state means zero update") {
    p.grad.data[0] = 0.0;
    opt.step(0.01);
    CHECK(p.value.data[0] == 1.0);
  }
}

TEST_CASE("fit mechanics") {
  SUBCASE("monotone-increasing validation loss stops after patience epochs") {
    Param p("p", {1});
    std::size_t calls = 0;
    FitProblem problem;
    problem.n_items = 1;
    problem.params = {&p};
    problem.batch_loss_and_grad = [&](const std::vector<std::size_t>&) {
      return 0.0;
    };
    problem.validation_loss = [&]() -> double { return double(++calls); };
    TrainConfig cfg;
    cfg.patience = 10;
    cfg.max_epochs = 100;
    FitHistory h = fit(problem, cfg);
    CHECK(h.epochs_run == 11);
    CHECK(h.best_epoch == 0);
  }
  SUBCASE("step decay halves the rate every period") {
    // Epochs 0..44 with factor 0.5 / period 20: lr at epoch 45 would be lr/4.
    TrainConfig cfg;
    const double lr0 = 1e-3;
    auto lr_at = [&](std::size_t epoch) {
      return lr0 * std::pow(0.5, double(epoch / 20));
    };
    CHECK(lr_at(45) == doctest::Approx(lr0 / 4.0));
  }
  SUBCASE("separable 2-class toy set reaches 99% accuracy") {
    std::mt19937_64 rng(6);
    WindowClassifierConfig cfg;
    cfg.input_dim = 2;
    cfg.window = 4;
    cfg.conv = {{4, 2}};
    cfg.batch_norm = false;
    cfg.fc_units = 8;
    cfg.seed = 9;
    WindowClassifier net(cfg);
    std::vector<Mat> xs;
    std::vector<int> ys;
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int i = 0; i < 80; ++i) {
      Mat x(4, 2);
      const int label = i % 2;
      for (auto& v : x.d) v = u(rng) + (label ? 1.0 : -1.0);
      xs.push_back(x);
      ys.push_back(label);
    }
    FitProblem problem;
    problem.n_items = xs.size();
    problem.params = net.params();
    problem.batch_loss_and_grad =
        [&](const std::vector<std::size_t>& batch) -> double {
      std::vector<Mat> bx;
      std::vector<int> by;
      for (std::size_t b : batch) {
        bx.push_back(xs[b]);
        by.push_back(ys[b]);
      }
      return net.batch_loss_and_grad(bx, by);
    };
    TrainConfig cfg2;
    cfg2.learning_rate = 1e-2;
    cfg2.max_epochs = 200;
    cfg2.patience = 200;
    cfg2.batch_size = 16;
    fit(problem, cfg2);
    int correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
      if ((net.score(xs[i]) >= 0.5) == (ys[i] == 1)) ++correct;
    CHECK(double(correct) / double(xs.size()) >= 0.99);
  }
}

TEST_CASE("gradient_check catches corrupted gradients") {
  std::mt19937_64 rng(7);
  Dense d(4, 4, false, "d", rng);
  Mat x = random_mat(3, 4, rng);
  std::vector<Param*> params;
  d.collect(params);
  auto loss = [&]() -> double {
    Mat y = d.forward(x);
    double l = 0.0;
    Mat dy(y.rows, y.cols);
    for (std::size_t i = 0; i < y.d.size(); ++i) {
      l += 0.5 * y.d[i] * y.d[i];
      dy.d[i] = -y.d[i];  // deliberately wrong sign
    }
    d.backward(dy);
    return l;
  };
  CHECK(gradient_check(params, loss, 1.0, 2) > 0.1);
}

TEST_CASE("full architectures pass the gradient check") {
  SUBCASE("stacked lstm sequence classifier") {
    SequenceClassifierConfig cfg;
    cfg.input_dim = 5;
    cfg.lstm_units = {6, 4};
    cfg.fc_units = 4;
    cfg.n_classes = 3;
    cfg.seed = 11;
    SequenceClassifier net(cfg);
    std::mt19937_64 rng(8);
    Mat x = random_mat(7, 5, rng);
    std::vector<int> labels{0, 1, 2, -1, 1, 0, 2};
    auto params = net.params();
    auto loss = [&]() -> double {
      return net.sequence_loss_and_grad(x, labels);
    };
    CHECK(gradient_check(params, loss, 0.2, 4) <= 1e-4);
  }
  SUBCASE("conv window detector with batch norm") {
    WindowClassifierConfig cfg;
    cfg.input_dim = 4;
    cfg.window = 10;
    cfg.conv = {{6, 3}, {4, 3}};
    cfg.batch_norm = true;
    cfg.fc_units = 6;
    cfg.seed = 12;
    WindowClassifier net(cfg);
    std::mt19937_64 rng(9);
    std::vector<Mat> xs{random_mat(10, 4, rng), random_mat(10, 4, rng),
                        random_mat(10, 4, rng)};
    std::vector<int> ys{1, 0, 1};
    auto params = net.params();
    auto loss = [&]() -> double { return net.batch_loss_and_grad(xs, ys); };
    CHECK(gradient_check(params, loss, 0.2, 5) <= 1e-4);
  }
}

TEST_CASE("model bundles") {
  SequenceClassifierConfig scfg;
  scfg.input_dim = 4;
  scfg.lstm_units = {5};
  scfg.fc_units = 4;
  scfg.n_classes = 3;
  scfg.seed = 13;
  SequenceClassifier seq(scfg);

  WindowClassifierConfig wcfg;
  wcfg.input_dim = 3;
  wcfg.window = 8;
  wcfg.conv = {{4, 3}};
  wcfg.seed = 14;
  WindowClassifier win(wcfg);

  SUBCASE("save-load-save is byte-identical and predictions replay") {
    const std::string p1 = tmp_path("seq1.bin"), p2 = tmp_path("seq2.bin");
    save_sequence_classifier(p1, seq);
    SequenceClassifier back = load_sequence_classifier(p1);
    save_sequence_classifier(p2, back);
    CHECK(file_bytes(p1) == file_bytes(p2));
    std::mt19937_64 rng(10);
    Mat x = random_mat(6, 4, rng);
    Mat a = seq.predict_sequence(x);
    Mat b = back.predict_sequence(x);
    CHECK(a.d == b.d);
    CHECK(peek_bundle_kind(p1) == "sequence_classifier");
  }
  SUBCASE("window classifier round trip preserves running stats") {
    std::mt19937_64 rng(11);
    std::vector<Mat> xs{random_mat(8, 3, rng), random_mat(8, 3, rng)};
    std::vector<int> ys{0, 1};
    win.batch_loss_and_grad(xs, ys);  // move running stats off their defaults
    const std::string p = tmp_path("win.bin");
    save_window_classifier(p, win);
    WindowClassifier back = load_window_classifier(p);
    CHECK(back.score(xs[0]) == win.score(xs[0]));
  }
  SUBCASE("truncated bundle raises an integrity error") {
    const std::string p = tmp_path("trunc.bin");
    save_sequence_classifier(p, seq);
    std::string bytes = file_bytes(p);
    std::ofstream(p, std::ios::binary | std::ios::trunc)
        .write(bytes.data(), std::streamsize(bytes.size() / 2));
    CHECK_THROWS_AS(load_sequence_classifier(p), IntegrityError);
  }
  SUBCASE("wrong kind raises an integrity error") {
    const std::string p = tmp_path("kind.bin");
    save_window_classifier(p, win);
    CHECK_THROWS_AS(load_sequence_classifier(p), IntegrityError);
  }
}
