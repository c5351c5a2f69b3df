#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxmon/common.hpp"

namespace ctxmon {

// Gesture ids follow the G1..G12 vocabulary; classifier output stays a
// fixed-size one-hot over indices 0..14 so both tasks share an encoding.
inline constexpr int kDefaultClassifierDim = 15;

struct GestureVocabulary {
  std::vector<int> ids;  // ordered
  std::vector<std::string> names;

  bool contains(int id) const;
  // Position of a gesture id in the ordered vocabulary; throws if absent.
  std::size_t index_of(int id) const;

  // Suturing: G1..G11 excluding G7. Block Transfer: task order
  // G12 -> G2 -> G5 -> G6 -> G11 (reach, grasp, lift, carry, drop).
  static GestureVocabulary suturing();
  static GestureVocabulary block_transfer();
};

struct ErrorRubricEntry {
  int gesture_id;
  std::vector<std::string> errors;
  std::vector<std::string> causal_fault_variables;
};

// Per-gesture error rubric for Suturing / Block Transfer. G10 has no entry.
const std::vector<ErrorRubricEntry>& error_rubric();
const ErrorRubricEntry* rubric_for(int gesture_id);

struct MarkovChain {
  GestureVocabulary states;
  std::vector<double> initial;                   // |states|
  std::vector<std::vector<double>> transitions;  // row-stochastic

  void validate() const;  // rows sum to 1 +- 1e-9, entries >= 0
};

// transitions[i][j] = (count(i->j) + alpha) / (sum_k count(i->k) + alpha*K).
// With alpha = 0 a state with no outgoing counts becomes self-absorbing.
MarkovChain estimate_markov(const GestureVocabulary& vocab,
                            const std::vector<std::vector<int>>& sequences,
                            double alpha = 0.0);

// Deterministic for a fixed seed; stops at max_len or at a self-absorbing
// state (a state whose row keeps all mass on itself).
std::vector<int> sample_sequence(const MarkovChain& chain, std::uint64_t seed,
                                 std::size_t max_len);

void save_markov(const MarkovChain& chain, const std::string& path);
MarkovChain load_markov(const std::string& path);

}  // namespace ctxmon
