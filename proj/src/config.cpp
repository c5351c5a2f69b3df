#include "ctxmon/config.hpp"

#include <filesystem>
#include <fstream>

using nlohmann::json;

namespace ctxmon {

namespace {

json subset_to_json(const FeatureSubset& s) {
  return {{"name", s.name()}, {"indices", s.indices()}};
}

FeatureSubset subset_from_json(const json& j) {
  const std::string name = j.at("name").get<std::string>();
  if (name == "all" || name == "crg" || name == "cg")
    return FeatureSubset::from_name(name);
  return FeatureSubset::custom(j.at("indices").get<std::vector<int>>());
}

json sim_to_json(const SimParams& p) {
  return {{"sample_rate_hz", p.sample_rate_hz},
          {"home", p.home},
          {"pickup", p.pickup},
          {"receptacle", p.receptacle},
          {"approach_height", p.approach_height},
          {"carry_height", p.carry_height},
          {"left_rest", p.left_rest},
          {"grasper_open", p.grasper_open},
          {"grasper_closed", p.grasper_closed},
          {"gesture_durations_ms", p.gesture_durations_ms},
          {"duration_jitter_fraction", p.duration_jitter_fraction},
          {"style_duration_scale", p.style_duration_scale},
          {"style_noise_scale", p.style_noise_scale},
          {"noise_position", p.noise_position},
          {"noise_rotation_rad", p.noise_rotation_rad},
          {"noise_grasper", p.noise_grasper}};
}

SimParams sim_from_json(const json& j, SimParams p) {
  p.sample_rate_hz = j.value("sample_rate_hz", p.sample_rate_hz);
  p.home = j.value("home", p.home);
  p.pickup = j.value("pickup", p.pickup);
  p.receptacle = j.value("receptacle", p.receptacle);
  p.approach_height = j.value("approach_height", p.approach_height);
  p.carry_height = j.value("carry_height", p.carry_height);
  p.left_rest = j.value("left_rest", p.left_rest);
  p.grasper_open = j.value("grasper_open", p.grasper_open);
  p.grasper_closed = j.value("grasper_closed", p.grasper_closed);
  p.gesture_durations_ms =
      j.value("gesture_durations_ms", p.gesture_durations_ms);
  p.duration_jitter_fraction =
      j.value("duration_jitter_fraction", p.duration_jitter_fraction);
  p.style_duration_scale =
      j.value("style_duration_scale", p.style_duration_scale);
  p.style_noise_scale = j.value("style_noise_scale", p.style_noise_scale);
  p.noise_position = j.value("noise_position", p.noise_position);
  p.noise_rotation_rad = j.value("noise_rotation_rad", p.noise_rotation_rad);
  p.noise_grasper = j.value("noise_grasper", p.noise_grasper);
  return p;
}

json range_to_json(const FaultRange& r) {
  return {{"target_lo", r.target_lo},     {"target_hi", r.target_hi},
          {"duration_lo", r.duration_lo}, {"duration_hi", r.duration_hi},
          {"start_lo", r.start_lo},       {"start_hi", r.start_hi},
          {"align_end", r.align_end}};
}

FaultRange range_from_json(const json& j, FaultRange r = {}) {
  r.target_lo = j.value("target_lo", r.target_lo);
  r.target_hi = j.value("target_hi", r.target_hi);
  r.duration_lo = j.value("duration_lo", r.duration_lo);
  r.duration_hi = j.value("duration_hi", r.duration_hi);
  r.start_lo = j.value("start_lo", r.start_lo);
  r.start_hi = j.value("start_hi", r.start_hi);
  r.align_end = j.value("align_end", r.align_end);
  return r;
}

json cell_to_json(const CampaignCell& c) {
  json j{{"n_runs", c.n_runs}, {"theta", c.theta}};
  if (c.grasper) j["grasper"] = range_to_json(*c.grasper);
  if (c.cartesian) j["cartesian"] = range_to_json(*c.cartesian);
  return j;
}

CampaignCell cell_from_json(const json& j) {
  CampaignCell c;
  c.n_runs = j.value("n_runs", std::size_t{0});
  c.theta = j.value("theta", c.theta);
  if (j.contains("grasper")) c.grasper = range_from_json(j["grasper"]);
  if (j.contains("cartesian")) c.cartesian = range_from_json(j["cartesian"]);
  return c;
}

json train_to_json(const nn::TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"adam_eps", t.adam_eps},
          {"decay_factor", t.decay_factor},
          {"decay_period_epochs", t.decay_period_epochs},
          {"patience", t.patience},
          {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs}};
}

nn::TrainConfig train_from_json(const json& j, nn::TrainConfig t) {
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.beta1 = j.value("beta1", t.beta1);
  t.beta2 = j.value("beta2", t.beta2);
  t.adam_eps = j.value("adam_eps", t.adam_eps);
  t.decay_factor = j.value("decay_factor", t.decay_factor);
  t.decay_period_epochs = j.value("decay_period_epochs", t.decay_period_epochs);
  t.patience = j.value("patience", t.patience);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.max_epochs = j.value("max_epochs", t.max_epochs);
  return t;
}

json corpus_to_json(const CorpusParams& c) {
  return {{"n_demos", c.n_demos},
          {"fault_fraction", c.fault_fraction},
          {"n_groups", c.n_groups},
          {"theta", c.theta},
          {"blockdrop", range_to_json(c.blockdrop)},
          {"dropoff", range_to_json(c.dropoff)}};
}

CorpusParams corpus_from_json(const json& j, CorpusParams c) {
  c.n_demos = j.value("n_demos", c.n_demos);
  c.fault_fraction = j.value("fault_fraction", c.fault_fraction);
  c.n_groups = j.value("n_groups", c.n_groups);
  c.theta = j.value("theta", c.theta);
  if (j.contains("blockdrop")) c.blockdrop = range_from_json(j["blockdrop"], c.blockdrop);
  if (j.contains("dropoff")) c.dropoff = range_from_json(j["dropoff"], c.dropoff);
  return c;
}

json gesture_to_json(const GestureTrainOptions& g) {
  return {{"lstm_units", g.model.lstm_units},
          {"fc_units", g.model.fc_units},
          {"n_classes", g.model.n_classes},
          {"dropout", g.model.dropout},
          {"subset", subset_to_json(g.subset)},
          {"chunk_len", g.chunk_len},
          {"val_fraction", g.val_fraction},
          {"train", train_to_json(g.train)}};
}

GestureTrainOptions gesture_from_json(const json& j, GestureTrainOptions g) {
  g.model.lstm_units = j.value("lstm_units", g.model.lstm_units);
  g.model.fc_units = j.value("fc_units", g.model.fc_units);
  g.model.n_classes = j.value("n_classes", g.model.n_classes);
  g.model.dropout = j.value("dropout", g.model.dropout);
  if (j.contains("subset")) g.subset = subset_from_json(j["subset"]);
  g.chunk_len = j.value("chunk_len", g.chunk_len);
  g.val_fraction = j.value("val_fraction", g.val_fraction);
  if (j.contains("train")) g.train = train_from_json(j["train"], g.train);
  return g;
}

json detector_to_json(const DetectorTrainOptions& d) {
  json conv = json::array();
  for (const auto& c : d.model.conv)
    conv.push_back({{"channels", c.channels}, {"kernel", c.kernel}});
  return {{"conv", conv},
          {"batch_norm", d.model.batch_norm},
          {"fc_units", d.model.fc_units},
          {"dropout", d.model.dropout},
          {"subset", subset_to_json(d.subset)},
          {"window", d.window.window},
          {"stride", d.window.stride},
          {"min_samples", d.min_samples},
          {"val_fraction", d.val_fraction},
          {"train", train_to_json(d.train)}};
}

DetectorTrainOptions detector_from_json(const json& j, DetectorTrainOptions d) {
  if (j.contains("conv")) {
    d.model.conv.clear();
    for (const auto& c : j["conv"])
      d.model.conv.push_back({c.at("channels").get<std::size_t>(),
                              c.at("kernel").get<std::size_t>()});
  }
  d.model.batch_norm = j.value("batch_norm", d.model.batch_norm);
  d.model.fc_units = j.value("fc_units", d.model.fc_units);
  d.model.dropout = j.value("dropout", d.model.dropout);
  if (j.contains("subset")) d.subset = subset_from_json(j["subset"]);
  d.window.window = j.value("window", d.window.window);
  d.window.stride = j.value("stride", d.window.stride);
  d.min_samples = j.value("min_samples", d.min_samples);
  d.val_fraction = j.value("val_fraction", d.val_fraction);
  if (j.contains("train")) d.train = train_from_json(j["train"], d.train);
  return d;
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.campaign = {
      {40, FaultRange{1.5, 1.6, 0.55, 0.70, 0.0, 0.05, false}, {}, 0.005},
      {40, FaultRange{0.3, 0.4, 0.55, 0.70, 0.0, 0.05, false}, {}, 0.005},
      {40, FaultRange{0.3, 0.4, 0.65, 0.90, 0.0, 0.0, true}, {}, 0.005},
      {40, FaultRange{1.5, 1.6, 0.30, 0.45, 0.0, 0.05, false}, {}, 0.005},
  };
  c.gesture.train.learning_rate = 1e-3;
  c.gesture.train.max_epochs = 60;
  c.gesture.train.decay_period_epochs = 30;
  c.gesture.train.patience = 15;
  // Stage 2 watches the instrument channel the faults act on; the Cartesian
  // path is left to stage 1, where it drives the gesture context instead.
  c.detector.subset = FeatureSubset::grasper();
  c.detector.train.learning_rate = 1e-3;
  c.detector.train.max_epochs = 60;
  c.detector.train.patience = 15;
  return c;
}

void ExperimentConfig::validate() const {
  if (task != "block_transfer" && task != "suturing")
    throw ConfigError("task must be block_transfer or suturing, got " + task);
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  corpus.validate();
  sim.validate();
  for (std::size_t i = 0; i < campaign.size(); ++i) {
    const auto& cell = campaign[i];
    const std::string where = "campaign.cells[" + std::to_string(i) + "]";
    if (cell.n_runs == 0) throw ConfigError(where + ".n_runs must be > 0");
    if (!cell.grasper && !cell.cartesian)
      throw ConfigError(where + " needs a grasper or cartesian range");
    if (cell.theta <= 0.0) throw ConfigError(where + ".theta must be > 0");
  }
  if (gesture.chunk_len == 0)
    throw ConfigError("gesture.chunk_len must be > 0");
  if (gesture.model.n_classes == 0)
    throw ConfigError("gesture.n_classes must be > 0");
  if (gesture.train.learning_rate <= 0.0)
    throw ConfigError("gesture.train.learning_rate must be > 0");
  if (detector.window.window == 0 || detector.window.stride == 0)
    throw ConfigError("detector.window and stride must be > 0");
  if (detector.train.learning_rate <= 0.0)
    throw ConfigError("detector.train.learning_rate must be > 0");
  if (threshold < 0.0 || threshold > 1.0)
    throw ConfigError("monitor.threshold must lie in [0, 1]");
  if (markov_alpha < 0.0) throw ConfigError("markov.alpha must be >= 0");
  if (diverge_min_samples < 2)
    throw ConfigError("diverge.min_samples must be >= 2");
  if (diverge_grid_points < 10)
    throw ConfigError("diverge.grid_points must be >= 10");
}

json config_to_json(const ExperimentConfig& c) {
  json cells = json::array();
  for (const auto& cell : c.campaign) cells.push_back(cell_to_json(cell));
  return {{"task", c.task},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"corpus", corpus_to_json(c.corpus)},
          {"sim", sim_to_json(c.sim)},
          {"campaign", {{"cells", cells}}},
          {"gesture", gesture_to_json(c.gesture)},
          {"detector", detector_to_json(c.detector)},
          {"monitor",
           {{"mode", to_string(c.monitor_mode)}, {"threshold", c.threshold}}},
          {"markov", {{"alpha", c.markov_alpha}}},
          {"diverge",
           {{"min_samples", c.diverge_min_samples},
            {"grid_points", c.diverge_grid_points}}}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c = default_config();
  c.task = j.value("task", c.task);
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  if (j.contains("corpus")) c.corpus = corpus_from_json(j["corpus"], c.corpus);
  if (j.contains("sim")) c.sim = sim_from_json(j["sim"], c.sim);
  if (j.contains("campaign") && j["campaign"].contains("cells")) {
    c.campaign.clear();
    for (const auto& cell : j["campaign"]["cells"])
      c.campaign.push_back(cell_from_json(cell));
  }
  if (j.contains("gesture"))
    c.gesture = gesture_from_json(j["gesture"], c.gesture);
  if (j.contains("detector"))
    c.detector = detector_from_json(j["detector"], c.detector);
  if (j.contains("monitor")) {
    const json& m = j["monitor"];
    if (m.contains("mode"))
      c.monitor_mode = monitor_mode_from_string(m["mode"].get<std::string>());
    c.threshold = m.value("threshold", c.threshold);
  }
  if (j.contains("markov")) c.markov_alpha = j["markov"].value("alpha", 0.0);
  if (j.contains("diverge")) {
    c.diverge_min_samples =
        j["diverge"].value("min_samples", c.diverge_min_samples);
    c.diverge_grid_points =
        j["diverge"].value("grid_points", c.diverge_grid_points);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw StructuralError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(f, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  if (j.contains("subcommand") && j.contains("config"))
    return config_from_json(j["config"]);  // run manifest
  return config_from_json(j);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  return fnv1a(config_to_json(config).dump());
}

void write_run_manifest(const std::string& dir, const std::string& subcommand,
                        const ExperimentConfig& config,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs) {
  std::filesystem::create_directories(dir);
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  json j{{"tool", "ctxmon"},
         {"version", "0.1.0"},
         {"subcommand", subcommand},
         {"seed", config.seed},
         {"config_hash", hash},
         {"inputs", inputs},
         {"outputs", outputs},
         {"config", config_to_json(config)}};
  std::ofstream f(std::filesystem::path(dir) / "manifest.json",
                  std::ios::binary);
  if (!f) throw StructuralError("cannot write manifest in: " + dir);
  f << j.dump(2) << "\n";
}

}  // namespace ctxmon
