#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxmon/fault.hpp"
#include "ctxmon/sim.hpp"

namespace ctxmon {

struct CorpusParams {
  std::size_t n_demos = 100;
  double fault_fraction = 0.5;
  std::size_t n_groups = 4;  // operator groups, used as LOSO folds
  // Corpus faults ramp at the nominal grasper slew rate so the transient
  // itself looks like an ordinary open or close; what is wrong is where it
  // happens, which is exactly what a context-free detector cannot see.
  double theta = 0.02;
  // Fault families drawn per faulted demo (50/50), both held to the end of
  // the demonstration so the injector never snaps back mid-gesture:
  // over-opening to a normal open angle during the lift (the oracle flags the
  // drop threshold crossing inside G5), and holding the grasper closed
  // through the drop-off (armed in late G6 where the clamp is a no-op, first
  // observable once G11's release fails to happen).
  FaultRange blockdrop{1.15, 1.25, 0.58, 0.61, 0.0, 0.0, true};
  FaultRange dropoff{0.29, 0.32, 0.22, 0.24, 0.0, 0.0, true};

  void validate() const;
};

// Labeled synthetic demonstration corpus. Groups cycle S1..Sn with
// alternating duration/noise styles; about fault_fraction of the demos carry
// one injected grasper fault whose erroneous gestures are labeled by the
// failure oracle.
std::vector<Trajectory> generate_demo_corpus(const CorpusParams& params,
                                             const SimParams& sim,
                                             std::uint64_t seed);

// Directory of canonical trajectory CSVs (demo_###.csv + sidecars).
void save_corpus(const std::vector<Trajectory>& corpus, const std::string& dir);
std::vector<Trajectory> load_corpus(const std::string& dir);

}  // namespace ctxmon
