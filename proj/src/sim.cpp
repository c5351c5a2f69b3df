#include "ctxmon/sim.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

namespace ctxmon {

void SimParams::validate() const {
  if (sample_rate_hz <= 0) throw ConfigError("sample_rate_hz must be > 0");
  if (grasper_open <= grasper_closed)
    throw ConfigError("grasper open angle must exceed closed angle");
  for (double d : gesture_durations_ms)
    if (d <= 0) throw ConfigError("gesture durations must be > 0");
  if (duration_jitter_fraction < 0 || duration_jitter_fraction >= 1)
    throw ConfigError("duration_jitter_fraction must be in [0, 1)");
  if (noise_position < 0 || noise_rotation_rad < 0 || noise_grasper < 0)
    throw ConfigError("noise sigmas must be >= 0");
}

namespace {

using Vec3 = std::array<double, 3>;

Vec3 lerp(const Vec3& a, const Vec3& b, double u) {
  return {a[0] + (b[0] - a[0]) * u, a[1] + (b[1] - a[1]) * u,
          a[2] + (b[2] - a[2]) * u};
}

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

// Position along a waypoint polyline with cubic ease on each leg, u in [0,1].
Vec3 path_point(const std::vector<Vec3>& wps, double u) {
  if (wps.size() == 1) return wps[0];
  const double scaled = u * double(wps.size() - 1);
  std::size_t leg = std::min<std::size_t>(std::size_t(scaled), wps.size() - 2);
  return lerp(wps[leg], wps[leg + 1], smoothstep(scaled - double(leg)));
}

std::array<double, 9> small_angle_rotation(double ax, double ay, double az) {
  const double cx = std::cos(ax), sx = std::sin(ax);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cz = std::cos(az), sz = std::sin(az);
  // Rz * Ry * Rx, row-major
  return {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx,
          sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx,
          -sy,     cy * sx,               cy * cx};
}

std::array<double, 9> matmul3(const std::array<double, 9>& a,
                              const std::array<double, 9>& b) {
  std::array<double, 9> r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return r;
}

}  // namespace

Trajectory generate_block_transfer(const SimParams& p) {
  p.validate();
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> jitter(1.0 - p.duration_jitter_fraction,
                                                1.0 + p.duration_jitter_fraction);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Key poses
  const Vec3 above_pickup{p.pickup[0], p.pickup[1],
                          p.pickup[2] + p.approach_height};
  const Vec3 pickup_low{p.pickup[0], p.pickup[1], p.pickup[2] - 5.0};
  const Vec3 pickup_lift{p.pickup[0], p.pickup[1], p.carry_height};
  const Vec3 mid_carry{(p.pickup[0] + p.receptacle[0]) / 2.0,
                       (p.pickup[1] + p.receptacle[1]) / 2.0, p.carry_height};
  const Vec3 above_recept{p.receptacle[0], p.receptacle[1], p.carry_height};
  const Vec3 recept_approach{p.receptacle[0], p.receptacle[1],
                             p.receptacle[2] + p.approach_height};
  const Vec3 drop_point{p.receptacle[0], p.receptacle[1],
                        p.receptacle[2] + 15.0};

  // Waypoints per gesture, task order G12, G2, G5, G6, G11.
  const std::vector<std::vector<Vec3>> gesture_paths = {
      {p.home, above_pickup, p.pickup},          // G12 reach
      {p.pickup, pickup_low},                    // G2 position + grasp
      {pickup_low, pickup_lift, mid_carry},      // G5 lift, move to center
      {mid_carry, above_recept, recept_approach},// G6 carry to receptacle
      {recept_approach, drop_point, recept_approach},  // G11 drop, retreat
  };
  const std::vector<int> gesture_ids = {12, 2, 5, 6, 11};

  // Per-gesture sample counts with jittered durations.
  std::vector<std::size_t> counts;
  for (double d : p.gesture_durations_ms) {
    const double ms = d * p.style_duration_scale * jitter(rng);
    counts.push_back(std::max<std::size_t>(
        2, std::size_t(std::llround(ms * p.sample_rate_hz / 1000.0))));
  }

  Trajectory traj;
  traj.sample_rate_hz = p.sample_rate_hz;
  traj.source = TrajectorySource::synthetic;
  traj.length_unit = "device_units";
  const double dt_ms = 1000.0 / p.sample_rate_hz;

  std::size_t index = 0;
  std::vector<std::array<double, 3>> right_angles;  // small-angle log of R
  for (std::size_t g = 0; g < gesture_paths.size(); ++g) {
    GestureSegment seg;
    seg.gesture_id = gesture_ids[g];
    seg.start_index = index;
    for (std::size_t k = 0; k < counts[g]; ++k, ++index) {
      const double u = counts[g] == 1 ? 0.0 : double(k) / double(counts[g] - 1);
      KinematicsSample s;
      s.timestamp_ms = double(index) * dt_ms;

      // Right arm: active path + grasper schedule.
      Vec3 pos = path_point(gesture_paths[g], u);
      const double npos = p.noise_position * p.style_noise_scale;
      for (int a = 0; a < 3; ++a)
        s.right.position[a] = pos[a] + npos * gauss(rng);

      double grasp;
      if (gesture_ids[g] == 12) {
        grasp = p.grasper_open;
      } else if (gesture_ids[g] == 2) {
        // close over the middle of the grasp gesture
        const double v = std::clamp((u - 0.2) / 0.6, 0.0, 1.0);
        grasp = p.grasper_open +
                (p.grasper_closed - p.grasper_open) * smoothstep(v);
      } else if (gesture_ids[g] == 11) {
        // release begins on arrival: constant slew over the first 40%
        const double v = std::clamp(u / 0.4, 0.0, 1.0);
        grasp = p.grasper_closed + (p.grasper_open - p.grasper_closed) * v;
      } else {
        grasp = p.grasper_closed;  // carry phases G5, G6
      }
      s.right.grasper_angle =
          grasp + p.noise_grasper * p.style_noise_scale * gauss(rng);

      const double nrot = p.noise_rotation_rad * p.style_noise_scale;
      std::array<double, 3> ang{nrot * gauss(rng), nrot * gauss(rng),
                                nrot * gauss(rng)};
      right_angles.push_back(ang);
      s.right.rotation = small_angle_rotation(ang[0], ang[1], ang[2]);

      // Left arm: idle drift near its rest pose, grasper open.
      for (int a = 0; a < 3; ++a)
        s.left.position[a] = p.left_rest[a] + 0.5 * npos * gauss(rng);
      s.left.grasper_angle =
          p.grasper_open + 0.5 * p.noise_grasper * gauss(rng);
      s.left.rotation = small_angle_rotation(0.5 * nrot * gauss(rng),
                                             0.5 * nrot * gauss(rng),
                                             0.5 * nrot * gauss(rng));

      traj.samples.push_back(s);
    }
    seg.end_index = index - 1;
    traj.segments.push_back(seg);
  }

  // Velocities by finite differencing the (noisy) positions and angles.
  const double rate = p.sample_rate_hz;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const std::size_t prev = i == 0 ? 0 : i - 1;
    const std::size_t curr = i == 0 ? 1 : i;
    for (int a = 0; a < 3; ++a) {
      traj.samples[i].right.linear_velocity[a] =
          (traj.samples[curr].right.position[a] -
           traj.samples[prev].right.position[a]) *
          rate;
      traj.samples[i].left.linear_velocity[a] =
          (traj.samples[curr].left.position[a] -
           traj.samples[prev].left.position[a]) *
          rate;
      traj.samples[i].right.angular_velocity[a] =
          (right_angles[curr][a] - right_angles[prev][a]) * rate;
      traj.samples[i].left.angular_velocity[a] = 0.0;
    }
  }

  traj.validate();
  return traj;
}

Trajectory add_noise(const Trajectory& traj, const NoiseSigma& sigma,
                     std::uint64_t seed) {
  if (sigma.position < 0 || sigma.rotation < 0 || sigma.grasper < 0 ||
      sigma.velocity < 0)
    throw ConfigError("noise sigma must be >= 0");
  Trajectory out = traj;
  if (sigma.position == 0 && sigma.rotation == 0 && sigma.grasper == 0 &&
      sigma.velocity == 0)
    return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& s : out.samples) {
    for (ArmState* arm : {&s.left, &s.right}) {
      for (int a = 0; a < 3; ++a) {
        if (sigma.position > 0) arm->position[a] += sigma.position * gauss(rng);
        if (sigma.velocity > 0) {
          arm->linear_velocity[a] += sigma.velocity * gauss(rng);
          arm->angular_velocity[a] += sigma.velocity * gauss(rng);
        }
      }
      if (sigma.grasper > 0) arm->grasper_angle += sigma.grasper * gauss(rng);
      if (sigma.rotation > 0) {
        // compose a small random rotation so columns stay orthonormal
        auto d = small_angle_rotation(sigma.rotation * gauss(rng),
                                      sigma.rotation * gauss(rng),
                                      sigma.rotation * gauss(rng));
        arm->rotation = matmul3(arm->rotation, d);
      }
    }
  }
  return out;
}

void save_sim_metadata(const SimParams& p, const std::string& path) {
  nlohmann::json j;
  j["sample_rate_hz"] = p.sample_rate_hz;
  j["home"] = p.home;
  j["pickup"] = p.pickup;
  j["receptacle"] = p.receptacle;
  j["approach_height"] = p.approach_height;
  j["carry_height"] = p.carry_height;
  j["grasper_open"] = p.grasper_open;
  j["grasper_closed"] = p.grasper_closed;
  j["gesture_durations_ms"] = p.gesture_durations_ms;
  j["duration_jitter_fraction"] = p.duration_jitter_fraction;
  j["style_duration_scale"] = p.style_duration_scale;
  j["style_noise_scale"] = p.style_noise_scale;
  j["noise_position"] = p.noise_position;
  j["noise_rotation_rad"] = p.noise_rotation_rad;
  j["noise_grasper"] = p.noise_grasper;
  j["seed"] = p.seed;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StructuralError("cannot open for write: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace ctxmon
