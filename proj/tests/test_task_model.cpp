#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <random>

#include "ctxmon/task_model.hpp"
#include "doctest.h"

using namespace ctxmon;

TEST_CASE("vocabularies match the task definitions") {
  auto sut = GestureVocabulary::suturing();
  CHECK(sut.ids == std::vector<int>{1, 2, 3, 4, 5, 6, 8, 9, 10, 11});
  CHECK_FALSE(sut.contains(7));
  auto bt = GestureVocabulary::block_transfer();
  CHECK(bt.ids == std::vector<int>{12, 2, 5, 6, 11});
  CHECK(bt.index_of(5) == 2);
  CHECK_THROWS_AS(bt.index_of(3), ConfigError);
}

TEST_CASE("error rubric covers every gesture except G10") {
  for (int g : GestureVocabulary::suturing().ids) {
    if (g == 10)
      CHECK(rubric_for(g) == nullptr);
    else {
      REQUIRE(rubric_for(g) != nullptr);
      CHECK_FALSE(rubric_for(g)->errors.empty());
    }
  }
  REQUIRE(rubric_for(12) != nullptr);
}

TEST_CASE("markov estimation from counts") {
  GestureVocabulary v;
  v.ids = {1, 2, 3};
  v.names = {"A", "B", "C"};
  SUBCASE("counts A->B:1, A->C:3 give row (0, 0.25, 0.75)") {
    std::vector<std::vector<int>> seqs{{1, 2}, {1, 3}, {1, 3}, {1, 3}};
    MarkovChain c = estimate_markov(v, seqs);
    CHECK(c.transitions[0][1] == doctest::Approx(0.25));
    CHECK(c.transitions[0][2] == doctest::Approx(0.75));
    c.validate();
  }
  SUBCASE("10 identical block-transfer sequences give probability-1 edges") {
    auto bt = GestureVocabulary::block_transfer();
    std::vector<std::vector<int>> seqs(10,
                                       std::vector<int>{12, 2, 5, 6, 11});
    MarkovChain c = estimate_markov(bt, seqs);
    for (std::size_t i = 0; i + 1 < bt.ids.size(); ++i)
      CHECK(c.transitions[i][i + 1] == doctest::Approx(1.0));
    CHECK(c.initial[0] == doctest::Approx(1.0));
  }
  SUBCASE("empty input is an estimation error") {
    CHECK_THROWS_AS(estimate_markov(v, {}), EstimationError);
  }
}

TEST_CASE("sampling is deterministic and terminates") {
  auto bt = GestureVocabulary::block_transfer();
  std::vector<std::vector<int>> seqs(5, std::vector<int>{12, 2, 5, 6, 11});
  MarkovChain c = estimate_markov(bt, seqs);
  auto a = sample_sequence(c, 42, 100);
  auto b = sample_sequence(c, 42, 100);
  CHECK(a == b);
  CHECK(a == std::vector<int>{12, 2, 5, 6, 11});
}

TEST_CASE("estimation is row-stochastic on random corpora") {
  GestureVocabulary v;
  v.ids = {1, 2, 3, 4};
  v.names = {"A", "B", "C", "D"};
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<int>> seqs;
    for (int s = 0; s < 10; ++s) {
      std::vector<int> seq;
      const std::size_t len = 2 + rng() % 8;
      for (std::size_t i = 0; i < len; ++i)
        seq.push_back(v.ids[rng() % v.ids.size()]);
      seqs.push_back(seq);
    }
    MarkovChain c = estimate_markov(v, seqs);
    CHECK_NOTHROW(c.validate());
  }
}

TEST_CASE("estimate recovers the source chain from sampled sequences") {
  GestureVocabulary v;
  v.ids = {1, 2, 3};
  v.names = {"A", "B", "C"};
  MarkovChain src;
  src.states = v;
  src.initial = {1.0, 0.0, 0.0};
  src.transitions = {{0.1, 0.6, 0.3}, {0.0, 0.2, 0.8}, {0.0, 0.0, 1.0}};
  std::vector<std::vector<int>> seqs;
  for (int i = 0; i < 2000; ++i)
    seqs.push_back(sample_sequence(src, 1000 + i, 50));
  MarkovChain est = estimate_markov(v, seqs);
  for (std::size_t i = 0; i < 2; ++i)  // row of the absorbing state excluded
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(std::abs(est.transitions[i][j] - src.transitions[i][j]) < 0.03);
}

TEST_CASE("markov chains round-trip through the text format") {
  auto bt = GestureVocabulary::block_transfer();
  std::vector<std::vector<int>> seqs(3, std::vector<int>{12, 2, 5, 6, 11});
  MarkovChain c = estimate_markov(bt, seqs);
  const std::string path =
      (std::filesystem::temp_directory_path() / "chain.txt").string();
  save_markov(c, path);
  MarkovChain back = load_markov(path);
  CHECK(back.states.ids == c.states.ids);
  CHECK(back.initial == c.initial);
  CHECK(back.transitions == c.transitions);
}
