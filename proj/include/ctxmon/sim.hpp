#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "ctxmon/kinematics.hpp"

namespace ctxmon {

// Desk-scale kinematic simulator for the Block Transfer task. Geometry is in
// raw device units (nominally mm); right arm is the active manipulator, the
// left arm idles near a rest point.
struct SimParams {
  double sample_rate_hz = 100.0;

  std::array<double, 3> home{50.0, -80.0, 150.0};
  std::array<double, 3> pickup{150.0, -100.0, 30.0};
  std::array<double, 3> receptacle{350.0, 120.0, 30.0};
  double approach_height = 60.0;  // hover above pickup / receptacle
  double carry_height = 120.0;    // lift height while carrying
  std::array<double, 3> left_rest{-120.0, -60.0, 100.0};

  double grasper_open = 1.2;    // radians
  double grasper_closed = 0.3;  // radians

  // Nominal per-gesture durations in ms, task order G12, G2, G5, G6, G11.
  std::array<double, 5> gesture_durations_ms{1200, 900, 1000, 1800, 1100};
  double duration_jitter_fraction = 0.10;

  // Operator style: durations scaled, noise scaled. Two styles stand in for
  // the two human subjects.
  double style_duration_scale = 1.0;
  double style_noise_scale = 1.0;

  // Noise sigma per feature family.
  double noise_position = 1.5;       // device units
  double noise_rotation_rad = 0.01;  // small-angle perturbation
  double noise_grasper = 0.015;      // radians

  std::uint64_t seed = 1;

  void validate() const;
};

// Fault-free annotated demonstration: 5 contiguous gesture segments covering
// every sample, smooth Cartesian path, grasper schedule closing in G2 and
// opening in G11, velocities by finite differencing.
Trajectory generate_block_transfer(const SimParams& params);

struct NoiseSigma {
  double position = 0.0;
  double rotation = 0.0;
  double grasper = 0.0;
  double velocity = 0.0;
};

// Adds independent Gaussian noise per feature family; labels untouched.
Trajectory add_noise(const Trajectory& traj, const NoiseSigma& sigma,
                     std::uint64_t seed);

// Sidecar parameter dump for reproducibility.
void save_sim_metadata(const SimParams& params, const std::string& path);

}  // namespace ctxmon
