#include "ctxmon/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>

namespace fs = std::filesystem;

namespace ctxmon {

void CorpusParams::validate() const {
  if (n_demos == 0) throw ConfigError("corpus.n_demos must be > 0");
  if (fault_fraction < 0.0 || fault_fraction > 1.0)
    throw ConfigError("corpus.fault_fraction must lie in [0, 1]");
  if (n_groups < 2) throw ConfigError("corpus.n_groups must be >= 2");
  if (theta <= 0.0) throw ConfigError("corpus.theta must be > 0");
  for (const FaultRange* fr : {&blockdrop, &dropoff}) {
    if (fr->target_lo > fr->target_hi)
      throw ConfigError("corpus fault range: target_lo > target_hi");
    if (fr->duration_lo > fr->duration_hi || fr->duration_lo <= 0.0 ||
        fr->duration_hi > 1.0)
      throw ConfigError("corpus fault range: duration must lie in (0, 1]");
  }
}

namespace {

FaultSpec draw_spec(const FaultRange& fr, double theta,
                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  FaultSpec spec;
  spec.variable = FaultVariable::GrasperAngle;
  spec.theta = theta;
  spec.target = fr.target_lo + (fr.target_hi - fr.target_lo) * u01(rng);
  spec.duration_fraction =
      fr.duration_lo + (fr.duration_hi - fr.duration_lo) * u01(rng);
  if (fr.align_end) {
    spec.start_fraction = 1.0 - spec.duration_fraction;
  } else {
    const double hi = std::min(fr.start_hi, 1.0 - spec.duration_fraction);
    const double lo = std::min(fr.start_lo, hi);
    spec.start_fraction = lo + (hi - lo) * u01(rng);
  }
  return spec;
}

}  // namespace

std::vector<Trajectory> generate_demo_corpus(const CorpusParams& params,
                                             const SimParams& sim,
                                             std::uint64_t seed) {
  params.validate();
  std::vector<Trajectory> corpus;
  corpus.reserve(params.n_demos);
  for (std::size_t i = 0; i < params.n_demos; ++i) {
    const std::size_t g = i % params.n_groups;
    SimParams sp = sim;
    sp.seed = derive_seed(seed, "sim", i);
    sp.style_duration_scale = (g % 2 == 0) ? 0.9 : 1.1;
    sp.style_noise_scale = (g % 2 == 0) ? 1.0 : 1.4;
    Trajectory ref = generate_block_transfer(sp);
    ref.group = "S" + std::to_string(g + 1);

    std::mt19937_64 rng(derive_seed(seed, "corpus-fault", i));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (u01(rng) >= params.fault_fraction) {
      corpus.push_back(std::move(ref));
      continue;
    }
    const FaultRange& fr = (rng() & 1) ? params.dropoff : params.blockdrop;
    FaultSpec spec = draw_spec(fr, params.theta, rng);
    Trajectory faulted = inject_grasper_fault(ref, spec);
    // The injector overrides the commanded grasper angle, but the recorded
    // kinematics still pass through the same noisy measurement chain; a
    // noise-free stretch would hand every detector a context-free tell.
    {
      std::normal_distribution<double> gauss(
          0.0, sim.noise_grasper * sp.style_noise_scale);
      const std::size_t t = faulted.size();
      const std::size_t begin =
          std::size_t(std::llround(spec.start_fraction * double(t)));
      std::size_t len =
          std::size_t(std::llround(spec.duration_fraction * double(t)));
      if (len == 0) len = 1;
      for (std::size_t k = begin; k < std::min(begin + len, t); ++k)
        faulted.samples[k].right.grasper_angle += gauss(rng);
    }
    std::vector<FailureEvent> events = failure_oracle(faulted, ref);
    // The injector can sit armed while commanding values the nominal schedule
    // would produce anyway (a clamp at the closed angle, the foot of a ramp).
    // Nothing is observably wrong until the faulted signal leaves the noise
    // band around the reference, so the onset that drives segment labels,
    // training-window labels and reaction-time scoring starts at the first
    // sustained deviation (three consecutive samples clear of the band, so a
    // lone noise spike cannot pull the onset into an untouched gesture).
    std::optional<double> onset_ms;
    {
      const double tau = 0.08;  // ~4 sigma of grasper measurement noise
      const std::size_t t = faulted.size();
      const std::size_t begin =
          std::size_t(std::llround(spec.start_fraction * double(t)));
      std::size_t streak = 0;
      for (std::size_t k = begin; k < t; ++k) {
        if (std::abs(faulted.samples[k].right.grasper_angle -
                     ref.samples[k].right.grasper_angle) > tau) {
          if (++streak == 3) {
            onset_ms = faulted.samples[k - 2].timestamp_ms;
            break;
          }
        } else {
          streak = 0;
        }
      }
    }
    Trajectory labeled =
        label_erroneous_gestures(faulted, spec, events, onset_ms);
    labeled.group = ref.group;
    corpus.push_back(std::move(labeled));
  }
  return corpus;
}

void save_corpus(const std::vector<Trajectory>& corpus,
                 const std::string& dir) {
  fs::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::snprintf(name, sizeof name, "demo_%03zu.csv", i);
    save_trajectory_csv(corpus[i], (fs::path(dir) / name).string());
  }
}

std::vector<Trajectory> load_corpus(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw StructuralError("corpus directory not found: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".csv") paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty())
    throw StructuralError("no trajectory CSVs in: " + dir);
  std::vector<Trajectory> corpus;
  corpus.reserve(paths.size());
  for (const auto& p : paths)
    corpus.push_back(load_trajectory(p, TrajectoryFormat::csv));
  return corpus;
}

}  // namespace ctxmon
