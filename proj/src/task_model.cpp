#include "ctxmon/task_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace ctxmon {

bool GestureVocabulary::contains(int id) const {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

std::size_t GestureVocabulary::index_of(int id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end())
    throw ConfigError("gesture G" + std::to_string(id) + " not in vocabulary");
  return static_cast<std::size_t>(it - ids.begin());
}

GestureVocabulary GestureVocabulary::suturing() {
  GestureVocabulary v;
  v.ids = {1, 2, 3, 4, 5, 6, 8, 9, 10, 11};
  v.names = {"Reaching for needle with right hand",
             "Positioning needle",
             "Pushing needle through the tissue",
             "Transferring needle from left to right",
             "Moving to center with needle in grip",
             "Pulling suture with left hand",
             "Orienting needle",
             "Using right hand to help tighten suture",
             "Loosening more suture",
             "Dropping suture and moving to end points"};
  return v;
}

GestureVocabulary GestureVocabulary::block_transfer() {
  GestureVocabulary v;
  v.ids = {12, 2, 5, 6, 11};
  v.names = {"Reaching for object with left hand", "Positioning and grasping",
             "Moving to center with object in grip",
             "Pulling and carrying object",
             "Dropping object and moving to end points"};
  return v;
}

const std::vector<ErrorRubricEntry>& error_rubric() {
  static const std::vector<ErrorRubricEntry> rubric = {
      {1, {"More than one attempt to reach"}, {"rotation"}},
      {2, {"More than one attempt to position"}, {"rotation"}},
      {3,
       {"Driving with more than one movement",
        "Not removing the needle along its curve"},
       {"cartesian_position"}},
      {4,
       {"Unintentional needle drop",
        "Needle holder not in view at all times"},
       {"cartesian_position"}},
      {5, {"Unintentional needle drop"}, {"grasper_angle"}},
      {6,
       {"Needle holder not in view at all times",
        "Unintentional needle drop"},
       {"cartesian_position"}},
      {8,
       {"Uses tissue/instrument for stability",
        "More than one attempt at orienting"},
       {"rotation"}},
      {9, {"Knot left loose"}, {"grasper_angle"}},
      // G10 has no rubric entry.
      {11, {"Failure to dropoff"}, {"grasper_angle"}},
      {12, {"More than one attempt to reach"}, {"cartesian_position"}},
  };
  return rubric;
}

const ErrorRubricEntry* rubric_for(int gesture_id) {
  for (const auto& e : error_rubric())
    if (e.gesture_id == gesture_id) return &e;
  return nullptr;
}

void MarkovChain::validate() const {
  const std::size_t n = states.ids.size();
  if (initial.size() != n || transitions.size() != n)
    throw StructuralError("markov chain dimension mismatch");
  double isum = 0;
  for (double p : initial) {
    if (p < 0) throw StructuralError("negative initial probability");
    isum += p;
  }
  if (std::abs(isum - 1.0) > 1e-9)
    throw StructuralError("initial distribution does not sum to 1");
  for (const auto& row : transitions) {
    if (row.size() != n) throw StructuralError("transition row size mismatch");
    double rsum = 0;
    for (double p : row) {
      if (p < 0) throw StructuralError("negative transition probability");
      rsum += p;
    }
    if (std::abs(rsum - 1.0) > 1e-9)
      throw StructuralError("transition row does not sum to 1");
  }
}

MarkovChain estimate_markov(const GestureVocabulary& vocab,
                            const std::vector<std::vector<int>>& sequences,
                            double alpha) {
  if (sequences.empty()) throw EstimationError("no sequences given");
  const std::size_t n = vocab.ids.size();
  MarkovChain chain;
  chain.states = vocab;
  chain.initial.assign(n, 0.0);
  chain.transitions.assign(n, std::vector<double>(n, 0.0));

  std::vector<std::vector<double>> counts(n, std::vector<double>(n, 0.0));
  double starts = 0;
  for (const auto& seq : sequences) {
    if (seq.empty()) throw EstimationError("empty sequence in input");
    chain.initial[vocab.index_of(seq.front())] += 1.0;
    starts += 1.0;
    for (std::size_t k = 1; k < seq.size(); ++k)
      counts[vocab.index_of(seq[k - 1])][vocab.index_of(seq[k])] += 1.0;
  }
  for (auto& p : chain.initial) p /= starts;

  for (std::size_t i = 0; i < n; ++i) {
    double total = alpha * double(n);
    for (std::size_t j = 0; j < n; ++j) total += counts[i][j];
    if (total <= 0.0) {
      chain.transitions[i][i] = 1.0;  // self-absorbing
      continue;
    }
    for (std::size_t j = 0; j < n; ++j)
      chain.transitions[i][j] = (counts[i][j] + alpha) / total;
  }
  chain.validate();
  return chain;
}

namespace {

std::size_t draw(const std::vector<double>& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return i;
  }
  return probs.size() - 1;
}

bool absorbing(const MarkovChain& chain, std::size_t i) {
  return chain.transitions[i][i] >= 1.0 - 1e-12;
}

}  // namespace

std::vector<int> sample_sequence(const MarkovChain& chain, std::uint64_t seed,
                                 std::size_t max_len) {
  chain.validate();
  std::mt19937_64 rng(seed);
  std::vector<int> out;
  if (max_len == 0) return out;
  std::size_t cur = draw(chain.initial, rng);
  out.push_back(chain.states.ids[cur]);
  while (out.size() < max_len && !absorbing(chain, cur)) {
    cur = draw(chain.transitions[cur], rng);
    out.push_back(chain.states.ids[cur]);
  }
  return out;
}

void save_markov(const MarkovChain& chain, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StructuralError("cannot open for write: " + path);
  f << "states";
  for (int id : chain.states.ids) f << " G" << id;
  f << "\ninitial";
  char buf[64];
  for (double p : chain.initial) {
    std::snprintf(buf, sizeof buf, " %.17g", p);
    f << buf;
  }
  f << "\n";
  for (std::size_t i = 0; i < chain.transitions.size(); ++i) {
    f << "row G" << chain.states.ids[i];
    for (double p : chain.transitions[i]) {
      std::snprintf(buf, sizeof buf, " %.17g", p);
      f << buf;
    }
    f << "\n";
  }
}

MarkovChain load_markov(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw StructuralError("cannot open: " + path);
  MarkovChain chain;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "states") {
      std::string tok;
      while (ss >> tok) {
        if (tok.empty() || tok[0] != 'G')
          throw ParseError("bad state token: " + tok);
        chain.states.ids.push_back(std::stoi(tok.substr(1)));
        chain.states.names.push_back("");
      }
    } else if (key == "initial") {
      double p;
      while (ss >> p) chain.initial.push_back(p);
    } else if (key == "row") {
      std::string state;
      ss >> state;
      std::vector<double> row;
      double p;
      while (ss >> p) row.push_back(p);
      chain.transitions.push_back(std::move(row));
    } else if (!key.empty()) {
      throw ParseError("unknown line in markov file: " + key);
    }
  }
  chain.validate();
  return chain;
}

}  // namespace ctxmon
