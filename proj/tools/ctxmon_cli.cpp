#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"

#include "ctxmon/config.hpp"
#include "ctxmon/gradcheck.hpp"
#include "ctxmon/metrics.hpp"
#include "ctxmon/monitor.hpp"

namespace fs = std::filesystem;
using namespace ctxmon;

namespace {

// Relative output paths land under CTXMON_OUTPUT_ROOT when it is set; all
// other configuration is file-based.
std::string resolve_out(const std::string& dir) {
  const char* root = std::getenv("CTXMON_OUTPUT_ROOT");
  if (root && *root && fs::path(dir).is_relative())
    return (fs::path(root) / dir).string();
  return dir;
}

ExperimentConfig resolve_config(const std::string& path) {
  ExperimentConfig cfg = path.empty() ? default_config() : load_config(path);
  cfg.validate();
  return cfg;
}

GestureVocabulary task_vocab(const ExperimentConfig& cfg) {
  return cfg.task == "suturing" ? GestureVocabulary::suturing()
                                : GestureVocabulary::block_transfer();
}

std::vector<Trajectory> corpus_or_generate(const ExperimentConfig& cfg,
                                           const std::string& data_dir) {
  if (!data_dir.empty()) return load_corpus(data_dir);
  return generate_demo_corpus(cfg.corpus, cfg.sim, cfg.seed);
}

void save_scores_csv(const MonitorResult& result, const Trajectory& traj,
                     const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StructuralError("cannot open for write: " + path);
  f << "t_ms,gesture,score\n";
  char buf[96];
  for (std::size_t i = 0; i < result.scores.size(); ++i) {
    if (std::isnan(result.scores[i])) {
      std::snprintf(buf, sizeof buf, "%.17g,%d,\n",
                    traj.samples[i].timestamp_ms, result.gesture_ids[i]);
    } else {
      std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g\n",
                    traj.samples[i].timestamp_ms, result.gesture_ids[i],
                    result.scores[i]);
    }
    f << buf;
  }
}

int cmd_simulate(const ExperimentConfig& cfg, const std::string& out,
                 std::size_t n_override) {
  ExperimentConfig c = cfg;
  if (n_override) c.corpus.n_demos = n_override;
  std::vector<Trajectory> corpus =
      generate_demo_corpus(c.corpus, c.sim, c.seed);
  save_corpus(corpus, out);
  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "demo_%03zu.csv", i);
    outputs.push_back(name);
  }
  write_run_manifest(out, "simulate", c, {}, outputs);
  std::cout << "wrote " << corpus.size() << " demos to " << out << "\n";
  return 0;
}

int cmd_inject(const ExperimentConfig& cfg, const std::string& out,
               const std::string& input, const std::string& variable,
               double target, double start, double duration, double theta) {
  Trajectory ref = load_trajectory(input, TrajectoryFormat::csv);
  FaultSpec spec;
  spec.variable = variable == "cartesian" ? FaultVariable::CartesianPosition
                                          : FaultVariable::GrasperAngle;
  spec.target = target;
  spec.start_fraction = start;
  spec.duration_fraction = duration;
  spec.theta = theta;
  Trajectory faulted = spec.variable == FaultVariable::GrasperAngle
                           ? inject_grasper_fault(ref, spec)
                           : inject_cartesian_fault(ref, spec);
  std::vector<FailureEvent> events = failure_oracle(faulted, ref);
  Trajectory labeled = label_erroneous_gestures(faulted, spec, events);

  fs::create_directories(out);
  save_trajectory_csv(labeled, (fs::path(out) / "faulted.csv").string());
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& e : events)
    ev.push_back({{"kind", e.kind == FailureKind::BlockDrop ? "block_drop"
                                                            : "dropoff_failure"},
                  {"t_ms", e.timestamp_ms},
                  {"gesture", e.gesture_id}});
  std::ofstream ef((fs::path(out) / "events.json").string(), std::ios::binary);
  ef << ev.dump(2) << "\n";
  write_run_manifest(out, "inject", cfg, {input},
                     {"faulted.csv", "events.json"});
  std::cout << events.size() << " failure event(s)\n";
  return 0;
}

int cmd_campaign(const ExperimentConfig& cfg, const std::string& out,
                 bool save_runs) {
  // The campaign injects into fault-free references.
  CorpusParams cp = cfg.corpus;
  cp.fault_fraction = 0.0;
  cp.n_demos = std::min<std::size_t>(cp.n_demos, 10);
  std::vector<Trajectory> corpus = generate_demo_corpus(cp, cfg.sim, cfg.seed);
  CampaignResult result =
      run_campaign(cfg.campaign, corpus, derive_seed(cfg.seed, "campaign"));

  fs::create_directories(out);
  save_campaign_report(result, (fs::path(out) / "report.csv").string());
  std::vector<std::string> outputs{"report.csv"};
  if (save_runs) {
    fs::create_directories(fs::path(out) / "runs");
    for (const auto& run : result.runs) {
      char name[64];
      std::snprintf(name, sizeof name, "runs/cell%zu_run%03zu.csv",
                    run.cell_index, run.run_index);
      save_trajectory_csv(run.labeled, (fs::path(out) / name).string());
      outputs.emplace_back(name);
    }
  }
  write_run_manifest(out, "campaign", cfg, {}, outputs);
  for (std::size_t c = 0; c < result.counts.size(); ++c) {
    const auto& cc = result.counts[c];
    std::printf("cell %zu: %zu injections, %zu block drops, %zu dropoffs\n", c,
                cc.injections, cc.block_drops, cc.dropoff_failures);
  }
  return 0;
}

int cmd_train_gestures(const ExperimentConfig& cfg, const std::string& out,
                       const std::string& data_dir) {
  std::vector<Trajectory> corpus = corpus_or_generate(cfg, data_dir);
  GestureTrainOptions opts = cfg.gesture;
  opts.train.seed = derive_seed(cfg.seed, "gesture-train");
  GestureLosoResult result =
      train_gesture_classifier(corpus, opts, task_vocab(cfg));

  fs::create_directories(out);
  save_gesture_model(result.final_model, (fs::path(out) / "model").string());
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : result.folds)
    folds.push_back({{"group", f.group}, {"accuracy", f.accuracy}});
  nlohmann::json rep{{"folds", folds},
                     {"mean_accuracy", result.mean_accuracy}};
  std::ofstream rf((fs::path(out) / "folds.json").string(), std::ios::binary);
  rf << rep.dump(2) << "\n";
  write_run_manifest(out, "train-gestures", cfg, {data_dir},
                     {"model", "folds.json"});
  std::printf("LOSO mean gesture accuracy: %.4f\n", result.mean_accuracy);
  return 0;
}

int cmd_train_detectors(const ExperimentConfig& cfg, const std::string& out,
                        const std::string& data_dir,
                        const std::string& gesture_dir) {
  std::vector<Trajectory> corpus = corpus_or_generate(cfg, data_dir);
  DetectorTrainOptions opts = cfg.detector;
  opts.train.seed = derive_seed(cfg.seed, "detector-train");
  DetectorLibrary lib = train_error_detectors(corpus, opts, task_vocab(cfg));
  lib.threshold = cfg.threshold;
  if (!gesture_dir.empty()) lib.gesture = load_gesture_model(gesture_dir);

  fs::create_directories(out);
  save_detector_library(lib, (fs::path(out) / "library").string());
  write_run_manifest(out, "train-detectors", cfg, {data_dir, gesture_dir},
                     {"library"});
  std::cout << "trained " << lib.detectors.size()
            << " gesture detector(s) + baseline\n";
  return 0;
}

int cmd_monitor(const ExperimentConfig& cfg, const std::string& out,
                const std::string& model_dir, const std::string& input) {
  DetectorLibrary lib =
      load_detector_library((fs::path(model_dir) / "library").string());
  Trajectory traj = load_trajectory(input, TrajectoryFormat::csv);
  MonitorResult result = run_monitor(lib, traj, cfg.monitor_mode);

  fs::create_directories(out);
  save_alert_csv(result.alerts, (fs::path(out) / "alerts.csv").string());
  save_scores_csv(result, traj, (fs::path(out) / "scores.csv").string());
  write_run_manifest(out, "monitor", cfg, {model_dir, input},
                     {"alerts.csv", "scores.csv"});
  std::cout << result.alerts.size() << " alert(s)\n";
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& out,
                 const std::string& model_dir, const std::string& data_dir) {
  DetectorLibrary lib =
      load_detector_library((fs::path(model_dir) / "library").string());
  std::vector<Trajectory> corpus = corpus_or_generate(cfg, data_dir);
  MonitorReport report = evaluate_pipeline(lib, corpus, cfg.monitor_mode);

  fs::create_directories(out);
  save_monitor_report(report, (fs::path(out) / "report.json").string());
  save_latency_sidecar(report, (fs::path(out) / "latency.json").string());
  save_alert_csv(report.alerts, (fs::path(out) / "alerts.csv").string());
  write_run_manifest(out, "evaluate", cfg, {model_dir, data_dir},
                     {"report.json", "latency.json", "alerts.csv"});
  std::cout << format_report_table(report);
  return 0;
}

int cmd_diverge(const ExperimentConfig& cfg, const std::string& out,
                const std::string& data_dir) {
  std::vector<Trajectory> corpus = corpus_or_generate(cfg, data_dir);
  const FeatureSubset& subset = cfg.detector.subset;
  GestureVocabulary vocab = task_vocab(cfg);

  std::vector<std::vector<std::vector<double>>> samples(vocab.ids.size());
  for (const auto& traj : corpus) {
    std::vector<int> labels = traj.gesture_labels();
    for (std::size_t i = 0; i < traj.size(); ++i) {
      if (labels[i] < 0 || !vocab.contains(labels[i])) continue;
      samples[vocab.index_of(labels[i])].push_back(
          select_features(traj.samples[i], subset));
    }
  }
  // KDE cost grows with the sample count; a seeded subsample keeps the
  // matrix tractable without biasing any one class.
  const std::size_t cap = 300;
  std::mt19937_64 rng(derive_seed(cfg.seed, "diverge"));
  for (auto& s : samples) {
    if (s.size() <= cap) continue;
    std::shuffle(s.begin(), s.end(), rng);
    s.resize(cap);
  }
  DivergenceMatrix m =
      divergence_matrix(vocab.ids, samples, cfg.diverge_min_samples,
                        cfg.diverge_grid_points);
  fs::create_directories(out);
  save_divergence_csv(m, (fs::path(out) / "divergence.csv").string());
  write_run_manifest(out, "diverge", cfg, {data_dir}, {"divergence.csv"});
  std::cout << "divergence matrix over " << m.class_ids.size()
            << " classes written\n";
  return 0;
}

int cmd_markov(const ExperimentConfig& cfg, const std::string& out,
               const std::string& data_dir) {
  std::vector<Trajectory> corpus = corpus_or_generate(cfg, data_dir);
  std::vector<std::vector<int>> sequences;
  for (const auto& traj : corpus) {
    std::vector<int> seq;
    for (const auto& s : traj.segments) seq.push_back(s.gesture_id);
    sequences.push_back(std::move(seq));
  }
  MarkovChain chain =
      estimate_markov(task_vocab(cfg), sequences, cfg.markov_alpha);
  fs::create_directories(out);
  save_markov(chain, (fs::path(out) / "markov.txt").string());
  write_run_manifest(out, "markov", cfg, {data_dir}, {"markov.txt"});
  std::cout << "chain over " << chain.states.ids.size() << " states written\n";
  return 0;
}

int cmd_gradcheck(const ExperimentConfig& cfg) {
  bool ok = true;
  for (const auto& r : gradcheck_architectures(cfg)) {
    std::printf("%-16s max relative error %.3e\n", r.name.c_str(),
                r.max_rel_error);
    ok = ok && r.max_rel_error <= 1e-4;
  }
  if (!ok) {
    std::cerr << "gradient check failed (tolerance 1e-4)\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware safety monitor for tele-operated block transfer"};
  app.require_subcommand(0, 1);

  std::string config_path, out_dir, data_dir, model_dir, gesture_dir, input;
  std::string variable = "grasper";
  double target = 1.55, start = 0.4, duration = 0.45, theta = 0.005;
  std::size_t n_override = 0;
  bool print_defaults = false, save_runs = false;
  std::string mode_override;

  app.add_flag("--print-defaults", print_defaults,
               "Print the default config as JSON and exit");

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", config_path, "Experiment config (JSON)");
    if (needs_out) sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--mode", mode_override,
                    "Monitor mode override (predicted_gestures, "
                    "ground_truth_gestures, baseline)");
  };

  CLI::App* sim = app.add_subcommand("simulate", "Generate a demo corpus");
  add_common(sim, true);
  sim->add_option("--n", n_override, "Number of demos (overrides config)");

  CLI::App* inj = app.add_subcommand("inject", "Inject a fault into one demo");
  add_common(inj, true);
  inj->add_option("--in", input, "Fault-free trajectory CSV")->required();
  inj->add_option("--variable", variable, "grasper or cartesian");
  inj->add_option("--target", target, "Fault target value S'");
  inj->add_option("--start", start, "Start fraction");
  inj->add_option("--duration", duration, "Duration fraction");
  inj->add_option("--theta", theta, "Ramp rate per sample");

  CLI::App* camp = app.add_subcommand("campaign", "Run the fault campaign");
  add_common(camp, true);
  camp->add_flag("--save-runs", save_runs, "Write labeled run trajectories");

  CLI::App* tg = app.add_subcommand("train-gestures",
                                    "LOSO-train the gesture classifier");
  add_common(tg, true);
  tg->add_option("--data", data_dir, "Corpus directory (default: synthesize)");

  CLI::App* td = app.add_subcommand("train-detectors",
                                    "Train per-gesture error detectors");
  add_common(td, true);
  td->add_option("--data", data_dir, "Corpus directory (default: synthesize)");
  td->add_option("--gesture-model", gesture_dir,
                 "Gesture model directory to bundle for predicted mode");

  CLI::App* mon = app.add_subcommand("monitor", "Stream one demo through the monitor");
  add_common(mon, true);
  mon->add_option("--model", model_dir, "train-detectors output directory")
      ->required();
  mon->add_option("--in", input, "Trajectory CSV")->required();

  CLI::App* ev = app.add_subcommand("evaluate", "Evaluate the pipeline on a corpus");
  add_common(ev, true);
  ev->add_option("--model", model_dir, "train-detectors output directory")
      ->required();
  ev->add_option("--data", data_dir, "Corpus directory (default: synthesize)");

  CLI::App* dv = app.add_subcommand("diverge", "Inter-gesture divergence matrix");
  add_common(dv, true);
  dv->add_option("--data", data_dir, "Corpus directory (default: synthesize)");

  CLI::App* mk = app.add_subcommand("markov", "Estimate the gesture transition chain");
  add_common(mk, true);
  mk->add_option("--data", data_dir, "Corpus directory (default: synthesize)");

  CLI::App* gc = app.add_subcommand("gradcheck", "Gradient-check every architecture");
  add_common(gc, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (print_defaults) {
      std::cout << config_to_json(default_config()).dump(2) << "\n";
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help() << "\n";
      return 2;
    }
    ExperimentConfig cfg = resolve_config(config_path);
    if (!mode_override.empty())
      cfg.monitor_mode = monitor_mode_from_string(mode_override);
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (out_dir.empty()) out_dir = (fs::path(cfg.output_dir) / name).string();
    out_dir = resolve_out(out_dir);

    if (name == "simulate") return cmd_simulate(cfg, out_dir, n_override);
    if (name == "inject")
      return cmd_inject(cfg, out_dir, input, variable, target, start,
                        duration, theta);
    if (name == "campaign") return cmd_campaign(cfg, out_dir, save_runs);
    if (name == "train-gestures") return cmd_train_gestures(cfg, out_dir, data_dir);
    if (name == "train-detectors")
      return cmd_train_detectors(cfg, out_dir, data_dir, gesture_dir);
    if (name == "monitor") return cmd_monitor(cfg, out_dir, model_dir, input);
    if (name == "evaluate") return cmd_evaluate(cfg, out_dir, model_dir, data_dir);
    if (name == "diverge") return cmd_diverge(cfg, out_dir, data_dir);
    if (name == "markov") return cmd_markov(cfg, out_dir, data_dir);
    if (name == "gradcheck") return cmd_gradcheck(cfg);
    std::cerr << "unknown subcommand: " << name << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const MonitorError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
