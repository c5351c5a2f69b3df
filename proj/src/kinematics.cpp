#include "ctxmon/kinematics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ctxmon {

double ArmState::feature(int i) const {
  if (i < 3) return position[i];
  if (i < 12) return rotation[i - 3];
  if (i == 12) return grasper_angle;
  if (i < 16) return linear_velocity[i - 13];
  if (i < 19) return angular_velocity[i - 16];
  throw ShapeError("arm feature index out of range: " + std::to_string(i));
}

void ArmState::set_feature(int i, double v) {
  if (i < 3)
    position[i] = v;
  else if (i < 12)
    rotation[i - 3] = v;
  else if (i == 12)
    grasper_angle = v;
  else if (i < 16)
    linear_velocity[i - 13] = v;
  else if (i < 19)
    angular_velocity[i - 16] = v;
  else
    throw ShapeError("arm feature index out of range: " + std::to_string(i));
}

double KinematicsSample::feature(int i) const {
  return i < kFeaturesPerArm ? left.feature(i)
                             : right.feature(i - kFeaturesPerArm);
}

void KinematicsSample::set_feature(int i, double v) {
  if (i < kFeaturesPerArm)
    left.set_feature(i, v);
  else
    right.set_feature(i - kFeaturesPerArm, v);
}

const GestureSegment* Trajectory::segment_at(std::size_t sample_index) const {
  for (const auto& s : segments)
    if (sample_index >= s.start_index && sample_index <= s.end_index) return &s;
  return nullptr;
}

std::vector<int> Trajectory::gesture_labels() const {
  std::vector<int> out(samples.size(), -1);
  for (const auto& s : segments)
    for (std::size_t i = s.start_index; i <= s.end_index && i < out.size(); ++i)
      out[i] = s.gesture_id;
  return out;
}

void Trajectory::validate() const {
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (samples[i].timestamp_ms <= samples[i - 1].timestamp_ms)
      throw StructuralError("timestamps not strictly increasing at sample " +
                            std::to_string(i));
  std::size_t prev_end = 0;
  bool first = true;
  for (const auto& s : segments) {
    if (s.start_index > s.end_index)
      throw StructuralError("segment start > end");
    if (s.end_index >= samples.size())
      throw StructuralError("segment exceeds sample range");
    if (!first && s.start_index <= prev_end)
      throw StructuralError("segments overlap or are unordered");
    prev_end = s.end_index;
    first = false;
  }
}

FeatureSubset::FeatureSubset(std::string name, std::vector<int> indices)
    : name_(std::move(name)), indices_(std::move(indices)) {
  std::vector<int> sorted = indices_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("feature subset has duplicate indices");
  for (int i : indices_)
    if (i < 0 || i >= kTotalFeatures)
      throw ConfigError("feature index out of range: " + std::to_string(i));
}

FeatureSubset FeatureSubset::all() {
  std::vector<int> idx(kTotalFeatures);
  for (int i = 0; i < kTotalFeatures; ++i) idx[i] = i;
  return FeatureSubset("all", std::move(idx));
}

FeatureSubset FeatureSubset::crg() {
  std::vector<int> idx;
  for (int arm = 0; arm < 2; ++arm)
    for (int i = 0; i < 13; ++i)  // position + rotation + grasper
      idx.push_back(arm * kFeaturesPerArm + i);
  return FeatureSubset("crg", std::move(idx));
}

FeatureSubset FeatureSubset::cg() {
  std::vector<int> idx;
  for (int arm = 0; arm < 2; ++arm) {
    for (int i = 0; i < 3; ++i) idx.push_back(arm * kFeaturesPerArm + i);
    idx.push_back(arm * kFeaturesPerArm + 12);
  }
  return FeatureSubset("cg", std::move(idx));
}

FeatureSubset FeatureSubset::grasper() {
  std::vector<int> idx;
  for (int arm = 0; arm < 2; ++arm) idx.push_back(arm * kFeaturesPerArm + 12);
  return FeatureSubset("grasper", std::move(idx));
}

FeatureSubset FeatureSubset::custom(std::vector<int> indices) {
  return FeatureSubset("custom", std::move(indices));
}

FeatureSubset FeatureSubset::from_name(const std::string& name) {
  if (name == "all") return all();
  if (name == "crg") return crg();
  if (name == "cg") return cg();
  if (name == "grasper") return grasper();
  throw ConfigError("unknown feature subset: " + name);
}

std::vector<double> select_features(const KinematicsSample& sample,
                                    const FeatureSubset& subset) {
  std::vector<double> out;
  out.reserve(subset.dim());
  for (int i : subset.indices()) out.push_back(sample.feature(i));
  return out;
}

std::vector<Window> windows(const Trajectory& traj,
                            const SlidingWindowSpec& spec,
                            const FeatureSubset& subset) {
  if (spec.window < 1 || spec.stride < 1)
    throw ConfigError("window and stride must be >= 1");
  std::vector<Window> out;
  const std::size_t t = traj.size();
  if (t < spec.window) return out;
  const std::size_t count = (t - spec.window) / spec.stride + 1;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Window w;
    w.start_index = n * spec.stride;
    w.features.reserve(spec.window * subset.dim());
    for (std::size_t k = 0; k < spec.window; ++k) {
      const auto& s = traj.samples[w.start_index + k];
      for (int i : subset.indices()) w.features.push_back(s.feature(i));
    }
    out.push_back(std::move(w));
  }
  return out;
}

FeatureStats compute_feature_stats(const std::vector<Trajectory>& corpus) {
  if (corpus.empty()) throw StructuralError("empty corpus");
  FeatureStats st;
  st.mean.assign(kTotalFeatures, 0.0);
  st.stddev.assign(kTotalFeatures, 0.0);
  std::size_t n = 0;
  for (const auto& t : corpus) n += t.size();
  if (n == 0) throw StructuralError("corpus has no samples");
  for (const auto& t : corpus)
    for (const auto& s : t.samples)
      for (int i = 0; i < kTotalFeatures; ++i) st.mean[i] += s.feature(i);
  for (int i = 0; i < kTotalFeatures; ++i) st.mean[i] /= double(n);
  for (const auto& t : corpus)
    for (const auto& s : t.samples)
      for (int i = 0; i < kTotalFeatures; ++i) {
        const double d = s.feature(i) - st.mean[i];
        st.stddev[i] += d * d;
      }
  for (int i = 0; i < kTotalFeatures; ++i)
    st.stddev[i] = std::sqrt(st.stddev[i] / double(n));
  return st;
}

void zscore_normalize(Trajectory& traj, const FeatureStats& stats) {
  constexpr double eps = 1e-8;
  for (auto& s : traj.samples)
    for (int i = 0; i < kTotalFeatures; ++i)
      s.set_feature(i, (s.feature(i) - stats.mean[i]) /
                           std::max(stats.stddev[i], eps));
}

void zscore_normalize(std::vector<Trajectory>& corpus,
                      const FeatureStats& stats) {
  for (auto& t : corpus) zscore_normalize(t, stats);
}

std::vector<GestureSegment> segments_from_labels(
    const std::vector<int>& gesture, const std::vector<int>& unsafe) {
  std::vector<GestureSegment> out;
  for (std::size_t i = 0; i < gesture.size(); ++i) {
    if (gesture[i] < 0) continue;
    if (!out.empty() && out.back().gesture_id == gesture[i] &&
        out.back().unsafe == (unsafe[i] != 0) &&
        out.back().end_index == i - 1) {
      out.back().end_index = i;
    } else {
      GestureSegment s;
      s.gesture_id = gesture[i];
      s.start_index = s.end_index = i;
      s.unsafe = unsafe[i] != 0;
      out.push_back(s);
    }
  }
  return out;
}

namespace {

const char* kCsvHeaderPrefix = "t_ms";

std::string csv_header() {
  std::string h = "t_ms";
  const char* arms[2] = {"L", "R"};
  for (const char* a : arms) {
    for (const char* f : {"px", "py", "pz"}) h += std::string(",") + a + "_" + f;
    for (int r = 1; r <= 3; ++r)
      for (int c = 1; c <= 3; ++c)
        h += std::string(",") + a + "_r" + std::to_string(r) + std::to_string(c);
    h += std::string(",") + a + "_ga";
    for (const char* f : {"vx", "vy", "vz", "wx", "wy", "wz"})
      h += std::string(",") + a + "_" + f;
  }
  h += ",gesture,unsafe";
  return h;
}

double parse_double(const std::string& tok, std::size_t row) {
  try {
    std::size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("non-numeric value '" + tok + "' at row " +
                     std::to_string(row));
  }
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, delim)) out.push_back(cur);
  return out;
}

const char* source_name(TrajectorySource s) {
  return s == TrajectorySource::jigsaws ? "jigsaws" : "synthetic";
}

}  // namespace

void save_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StructuralError("cannot open for write: " + path);
  f << csv_header() << "\n";
  const auto gest = traj.gesture_labels();
  std::vector<int> unsafe(traj.size(), 0);
  for (const auto& s : traj.segments)
    if (s.unsafe)
      for (std::size_t i = s.start_index; i <= s.end_index; ++i) unsafe[i] = 1;
  char buf[64];
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.samples[i];
    std::snprintf(buf, sizeof buf, "%.17g", s.timestamp_ms);
    f << buf;
    for (int k = 0; k < kTotalFeatures; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", s.feature(k));
      f << ',' << buf;
    }
    f << ',' << gest[i] << ',' << unsafe[i] << "\n";
  }

  nlohmann::json meta;
  meta["sample_rate_hz"] = traj.sample_rate_hz;
  meta["source"] = source_name(traj.source);
  meta["length_unit"] = traj.length_unit;
  meta["group"] = traj.group;
  if (traj.fault_onset_ms) meta["fault_onset_ms"] = *traj.fault_onset_ms;
  if (traj.fault_end_ms) meta["fault_end_ms"] = *traj.fault_end_ms;
  std::ofstream mf(path + ".meta.json", std::ios::binary);
  mf << meta.dump(2) << "\n";
}

std::vector<GestureSegment> parse_transcription(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw StructuralError("cannot open transcription: " + path);
  std::vector<GestureSegment> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(f, line)) {
    ++row;
    std::istringstream ss(line);
    long start = 0, end = 0;
    std::string g;
    if (!(ss >> start >> end >> g)) {
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      throw ParseError("malformed transcription line " + std::to_string(row));
    }
    if (g.empty() || g[0] != 'G')
      throw ParseError("bad gesture token '" + g + "' at line " +
                       std::to_string(row));
    GestureSegment seg;
    seg.gesture_id = std::stoi(g.substr(1));
    seg.start_index = static_cast<std::size_t>(start);
    seg.end_index = static_cast<std::size_t>(end);
    out.push_back(seg);
  }
  return out;
}

Trajectory load_trajectory(const std::string& path, TrajectoryFormat format,
                           const LoadOptions& opts) {
  std::ifstream f(path);
  if (!f) throw StructuralError("cannot open: " + path);
  Trajectory traj;
  traj.sample_rate_hz = opts.sample_rate_hz;
  std::string line;
  std::size_t row = 0;
  std::vector<int> gest_col, unsafe_col;
  bool csv = format == TrajectoryFormat::csv;
  bool header_seen = false;
  bool has_timestamp_col = false;
  while (std::getline(f, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (csv && !header_seen) {
      header_seen = true;
      if (line.rfind(kCsvHeaderPrefix, 0) == 0) {
        has_timestamp_col = true;
        continue;  // canonical header
      }
      // headerless CSV: fall through and parse as data
    }
    std::vector<std::string> toks;
    if (csv) {
      toks = split(line, ',');
    } else {
      std::istringstream ss(line);
      std::string t;
      while (ss >> t) toks.push_back(t);
    }
    KinematicsSample s;
    if (csv) {
      const std::size_t expect_full = 1 + kTotalFeatures + 2;
      std::size_t base = 0;
      if (toks.size() == expect_full && has_timestamp_col) {
        s.timestamp_ms = parse_double(toks[0], row);
        base = 1;
      } else if (toks.size() == std::size_t(kTotalFeatures)) {
        s.timestamp_ms =
            double(traj.samples.size()) * 1000.0 / traj.sample_rate_hz;
      } else if (toks.size() == expect_full) {
        s.timestamp_ms = parse_double(toks[0], row);
        base = 1;
      } else {
        throw ParseError("row " + std::to_string(row) + " has " +
                         std::to_string(toks.size()) + " fields");
      }
      for (int i = 0; i < kTotalFeatures; ++i)
        s.set_feature(i, parse_double(toks[base + i], row));
      if (toks.size() == expect_full) {
        gest_col.push_back(int(parse_double(toks[base + kTotalFeatures], row)));
        unsafe_col.push_back(
            int(parse_double(toks[base + kTotalFeatures + 1], row)));
      }
    } else {
      const std::size_t off = static_cast<std::size_t>(opts.jigsaws_column_offset);
      if (toks.size() < off + kTotalFeatures)
        throw ParseError("row " + std::to_string(row) + " has " +
                         std::to_string(toks.size()) + " fields, need >= " +
                         std::to_string(off + kTotalFeatures));
      s.timestamp_ms =
          double(traj.samples.size()) * 1000.0 / traj.sample_rate_hz;
      for (int i = 0; i < kTotalFeatures; ++i)
        s.set_feature(i, parse_double(toks[off + i], row));
    }
    traj.samples.push_back(s);
  }
  if (traj.samples.empty()) throw StructuralError("empty trajectory: " + path);

  if (!gest_col.empty()) {
    traj.segments = segments_from_labels(gest_col, unsafe_col);
  }
  if (opts.transcription_path) {
    traj.segments = parse_transcription(*opts.transcription_path);
    // clip segments to the sample range
    for (auto& seg : traj.segments)
      seg.end_index = std::min(seg.end_index, traj.size() - 1);
    traj.source = TrajectorySource::jigsaws;
  }

  // sidecar metadata, when present
  std::ifstream mf(path + ".meta.json");
  if (mf) {
    nlohmann::json meta = nlohmann::json::parse(mf, nullptr, true, true);
    if (meta.contains("sample_rate_hz"))
      traj.sample_rate_hz = meta["sample_rate_hz"].get<double>();
    if (meta.contains("length_unit"))
      traj.length_unit = meta["length_unit"].get<std::string>();
    if (meta.contains("group")) traj.group = meta["group"].get<std::string>();
    if (meta.contains("source"))
      traj.source = meta["source"] == "jigsaws" ? TrajectorySource::jigsaws
                                                : TrajectorySource::synthetic;
    if (meta.contains("fault_onset_ms"))
      traj.fault_onset_ms = meta["fault_onset_ms"].get<double>();
    if (meta.contains("fault_end_ms"))
      traj.fault_end_ms = meta["fault_end_ms"].get<double>();
  }

  traj.validate();
  return traj;
}

}  // namespace ctxmon
