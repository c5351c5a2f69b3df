#pragma once

#include <string>
#include <vector>

#include "ctxmon/config.hpp"

namespace ctxmon {

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
};

// Central-difference gradient checks (h=1e-5) on seeded synthetic batches for
// every architecture the pipeline trains: the recurrent gesture stack, the
// batch-normalized conv detector, and the pooled baseline variant.
std::vector<GradCheckReport> gradcheck_architectures(
    const ExperimentConfig& config, double subset_fraction = 0.01);

}  // namespace ctxmon
