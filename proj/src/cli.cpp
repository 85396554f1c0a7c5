#include "mdssl/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "mdssl/benchmark.hpp"
#include "mdssl/config_io.hpp"
#include "mdssl/errors.hpp"
#include "mdssl/eval.hpp"
#include "mdssl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mdssl {

namespace {

std::string default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env && *env ? env : ".";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::string corpus_header_hash(const CorpusSpec& spec) { return fnv1a_hex(to_json(spec).dump()); }

void write_manifest(const fs::path& path, const std::string& command, const json& config, std::uint64_t seed,
                    const CorpusSpec& spec, const json& files, const std::string& started) {
  for (const auto& [key, value] : files.items()) {
    const auto check = [&](const json& v) {
      if (v.is_string() && !fs::exists(v.get<std::string>())) {
        throw Error("manifest references missing file " + v.get<std::string>());
      }
    };
    if (value.is_array()) {
      for (const auto& v : value) check(v);
    } else {
      check(value);
    }
  }
  json m{{"command", command},
         {"config", config},
         {"seed", seed},
         {"corpus_spec", to_json(spec)},
         {"corpus_header_hash", corpus_header_hash(spec)},
         {"files", files},
         {"started_at", started},
         {"finished_at", timestamp_utc()}};
  auto out = open_out(path);
  out << m.dump(2) << '\n';
}

struct TrainOverrides {
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::optional<double> learning_rate;
  std::optional<double> momentum;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> bank_capacity;
  std::optional<double> tau;
  std::optional<double> lambda;
};

void add_override_flags(CLI::App* cmd, TrainOverrides& o) {
  cmd->add_option("--steps", o.steps, "Override steps");
  cmd->add_option("--seed", o.seed, "Override training seed");
  cmd->add_option("--lr", o.learning_rate, "Override learning rate");
  cmd->add_option("--momentum", o.momentum, "Override momentum coefficient");
  cmd->add_option("--batch-size", o.batch_size, "Override batch size");
  cmd->add_option("--bank-capacity", o.bank_capacity, "Override memory bank capacity");
  cmd->add_option("--tau", o.tau, "Override temperature");
  cmd->add_option("--lambda", o.lambda, "Override CORAL weight");
}

ExperimentConfig load_experiment(const std::string& config_path, const TrainOverrides& o) {
  ExperimentConfig cfg;
  if (!config_path.empty()) cfg = experiment_config_from_json(read_json_file(config_path));
  auto& t = cfg.train;
  if (o.steps) t.steps = *o.steps;
  if (o.seed) t.seed = *o.seed;
  if (o.learning_rate) t.learning_rate = *o.learning_rate;
  if (o.momentum) t.momentum = *o.momentum;
  if (o.batch_size) t.batch.batch_size = *o.batch_size;
  if (o.bank_capacity) t.bank_capacity = *o.bank_capacity;
  if (o.tau) t.loss.tau = *o.tau;
  if (o.lambda) t.loss.lambda = *o.lambda;
  return cfg;
}

// Rejects batch settings the dev split cannot satisfy before any compute.
void preflight(const TrainConfig& cfg, const Corpus& corpus) {
  validate(cfg);
  if (cfg.dims.input != static_cast<std::size_t>(corpus.spec.feature_dim)) {
    throw ConfigError("encoder.input (" + std::to_string(cfg.dims.input) + ") != corpus feature_dim (" +
                      std::to_string(corpus.spec.feature_dim) + ")");
  }
  const auto pool = combine_short(corpus.select(Split::dev), cfg.combine_min_frames);
  Rng rng = make_rng(cfg.seed, kBatchStream, 0);
  try {
    (void)build_batch(pool, cfg.batch, rng);
  } catch (const InfeasibleBatchError& e) {
    throw ConfigError(std::string("infeasible batch configuration: ") + e.what());
  } catch (const TooShortError& e) {
    throw ConfigError(std::string("infeasible batch configuration: ") + e.what());
  }
}

int cmd_generate(const std::string& spec_path, const std::string& out_path, std::ostream& out) {
  CorpusSpec spec;
  if (!spec_path.empty()) spec = corpus_spec_from_json(read_json_file(spec_path));
  validate(spec);
  const fs::path path = out_path.empty() ? fs::path(default_out_dir()) / "corpus.txt" : fs::path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const Corpus corpus = generate(spec);
  save_corpus(path.string(), corpus);
  out << "wrote " << path.string() << " (" << corpus.utterances.size() << " utterances, hash "
      << fnv1a_hex(slurp(path.string())) << ")\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& corpus_path, const std::string& preset,
              const std::string& out_dir_arg, const std::string& init_path, const TrainOverrides& o,
              std::ostream& out) {
  const std::string started = timestamp_utc();
  ExperimentConfig cfg = load_experiment(config_path, o);
  std::string preset_label = "custom";
  if (!preset.empty()) {
    cfg.train.loss = preset_loss(parse_preset(preset), cfg.train.loss);
    preset_label = preset;
  }
  const Corpus corpus = load_corpus(corpus_path);
  preflight(cfg.train, corpus);
  std::optional<EncoderParams> init;
  if (!init_path.empty()) init = load_checkpoint(init_path);

  const fs::path dir = out_dir_arg.empty() ? fs::path(default_out_dir()) : fs::path(out_dir_arg);
  fs::create_directories(dir);
  json checkpoints = json::array();
  json interim = json::array();

  std::optional<TrialList> trials;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](const TrainState& st) {
    const fs::path p = dir / ("encoder_step" + std::to_string(st.step) + ".ckpt");
    save_checkpoint(p.string(), st.theta);
    checkpoints.push_back(p.string());
  };
  hooks.on_eval = [&](const TrainState& st) {
    if (!trials) trials = build_trials(corpus.select(Split::eval), cfg.trials, TrialMode::pooled);
    const auto scored = score_trials(st.theta, *trials);
    const fs::path p = dir / ("metrics_step" + std::to_string(st.step) + ".csv");
    auto f = open_out(p);
    write_metrics_csv(f, pooled_metrics(scored.scores));
    f.close();
    interim.push_back(p.string());
  };

  const TrainResult result = run(cfg.train, corpus, hooks, init ? &*init : nullptr);

  const fs::path ckpt = dir / "encoder.ckpt";
  const fs::path log = dir / "train_log.csv";
  save_checkpoint(ckpt.string(), result.params);
  {
    auto f = open_out(log);
    write_log_csv(f, result.log);
  }
  json config = to_json(cfg);
  config["preset"] = preset_label;
  json files{{"checkpoint", ckpt.string()}, {"train_log", log.string()}, {"corpus", corpus_path},
             {"interim_checkpoints", checkpoints}, {"interim_metrics", interim}};
  write_manifest(dir / "manifest.json", "train", config, cfg.train.seed, corpus.spec, files, started);
  if (!result.log.empty()) {
    out << "preset " << preset_label << ": " << result.log.size() << " steps, loss " << result.log.front().total
        << " -> " << result.log.back().total << '\n';
  }
  out << "wrote " << ckpt.string() << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus_path, const std::string& mode_str,
             const std::string& config_path, const std::string& out_dir_arg, bool projection, std::ostream& out) {
  const std::string started = timestamp_utc();
  TrialMode mode;
  if (mode_str == "pooled") {
    mode = TrialMode::pooled;
  } else if (mode_str == "matrix") {
    mode = TrialMode::matrix;
  } else {
    throw ConfigError("--mode must be pooled or matrix");
  }
  ExperimentConfig cfg;
  if (!config_path.empty()) cfg = experiment_config_from_json(read_json_file(config_path));
  const EncoderParams params = load_checkpoint(checkpoint);
  const Corpus corpus = load_corpus(corpus_path);
  if (params.dims.input != static_cast<std::size_t>(corpus.spec.feature_dim)) {
    throw ConfigError("checkpoint input dim does not match corpus feature_dim");
  }

  const TrialList trials = build_trials(corpus.select(Split::eval), cfg.trials, mode);
  const ScoredTrials scored = score_trials(params, trials);
  const PooledMetrics metrics = pooled_metrics(scored.scores);

  const fs::path dir = out_dir_arg.empty() ? fs::path(default_out_dir()) : fs::path(out_dir_arg);
  fs::create_directories(dir);
  const std::string tag = mode == TrialMode::pooled ? "pooled" : "matrix";
  json files;
  const fs::path metrics_path = dir / ("metrics_" + tag + ".csv");
  {
    auto f = open_out(metrics_path);
    write_metrics_csv(f, metrics);
  }
  files["metrics"] = metrics_path.string();
  const fs::path trials_path = dir / ("trials_" + tag + ".txt");
  {
    auto f = open_out(trials_path);
    write_trials(f, trials);
  }
  files["trials"] = trials_path.string();
  const fs::path scores_path = dir / ("scores_" + tag + ".txt");
  {
    auto f = open_out(scores_path);
    write_scores(f, trials, scored.scores);
  }
  files["scores"] = scores_path.string();

  json summary{{"mode", tag},
               {"eer_percent", metrics.eer_percent},
               {"min_dcf", metrics.min_dcf},
               {"targets", metrics.targets},
               {"nontargets", metrics.nontargets},
               {"skipped_cells", trials.skipped_cells}};
  if (mode == TrialMode::matrix) {
    const DomainMatrix dm = domain_matrix(trials, scored.scores);
    const fs::path matrix_path = dir / "matrix.csv";
    auto f = open_out(matrix_path);
    write_matrix_csv(f, dm, corpus.domain_names);
    f.close();
    files["matrix"] = matrix_path.string();
    json grid = json::array();
    for (const auto& row : dm.eer) {
      json r = json::array();
      for (const auto& cell : row) r.push_back(cell ? json(*cell) : json(nullptr));
      grid.push_back(r);
    }
    summary["matrix_domains"] = dm.domains;
    summary["matrix_eer_percent"] = grid;
  }
  if (projection) {
    std::vector<int> speakers, domains;
    for (const auto& t : trials.tests) {
      speakers.push_back(t.speaker_id);
      domains.push_back(t.domain_id);
    }
    const auto points = project_2d(scored.test_embeddings, speakers, domains);
    const fs::path proj_path = dir / "projection.csv";
    auto f = open_out(proj_path);
    write_projection_csv(f, points);
    f.close();
    files["projection"] = proj_path.string();
  }
  const fs::path summary_path = dir / ("summary_" + tag + ".json");
  {
    auto f = open_out(summary_path);
    f << summary.dump(2) << '\n';
  }
  files["summary"] = summary_path.string();
  files["checkpoint"] = checkpoint;
  files["corpus"] = corpus_path;
  write_manifest(dir / ("manifest_eval_" + tag + ".json"), "eval", to_json(cfg), cfg.train.seed, corpus.spec, files,
                 started);

  char buf[128];
  std::snprintf(buf, sizeof buf, "EER %.4f%%  minDCF %.4f  (%zu target / %zu nontarget trials)\n",
                metrics.eer_percent, metrics.min_dcf, metrics.targets, metrics.nontargets);
  out << buf;
  return kExitOk;
}

int cmd_benchmark(const std::string& config_path, const std::string& corpus_path, std::size_t num_seeds,
                  std::size_t threads, const std::vector<std::string>& preset_names, const std::string& out_dir_arg,
                  const TrainOverrides& o, std::ostream& out) {
  const std::string started = timestamp_utc();
  BenchmarkOptions opts;
  opts.config = load_experiment(config_path, o);
  opts.threads = threads;
  for (const auto& name : preset_names) opts.presets.push_back(parse_preset(name));
  if (num_seeds < 1) throw ConfigError("--seeds must be >= 1");
  for (std::size_t k = 0; k < num_seeds; ++k) opts.seeds.push_back(opts.config.train.seed + k);

  const Corpus corpus = load_corpus(corpus_path);
  if (corpus.spec.num_domains < 2) throw ConfigError("benchmark needs a corpus with at least 2 domains");
  for (Preset p : opts.presets.empty() ? ladder_presets() : opts.presets) {
    TrainConfig cfg = opts.config.train;
    cfg.loss = preset_loss(p, cfg.loss);
    preflight(cfg, corpus);
  }

  const BenchmarkReport report = run_benchmark(opts, corpus);

  const fs::path dir = out_dir_arg.empty() ? fs::path(default_out_dir()) : fs::path(out_dir_arg);
  fs::create_directories(dir);
  const fs::path runs_path = dir / "benchmark_runs.csv";
  const fs::path summary_path = dir / "benchmark_summary.csv";
  {
    auto f = open_out(runs_path);
    write_benchmark_runs_csv(f, report);
  }
  {
    auto f = open_out(summary_path);
    write_benchmark_summary_csv(f, report);
  }
  json files{{"runs", runs_path.string()}, {"summary", summary_path.string()}, {"corpus", corpus_path}};
  write_manifest(dir / "manifest_benchmark.json", "benchmark", to_json(opts.config), opts.config.train.seed,
                 corpus.spec, files, started);

  write_benchmark_summary_csv(out, report);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-domain self-supervised adaptation of speaker embeddings"};
  app.require_subcommand(1);

  std::string spec_path, out_path;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic multi-domain corpus");
  gen->add_option("--spec", spec_path, "Corpus spec JSON (all fields required); built-in default if omitted");
  gen->add_option("--out", out_path, "Output corpus file");

  std::string config_path, corpus_path, preset, out_dir, init_path;
  TrainOverrides overrides;
  auto* train = app.add_subcommand("train", "Adapt an encoder on the dev split");
  train->add_option("--config", config_path, "Experiment config JSON");
  train->add_option("--corpus", corpus_path, "Corpus file")->required();
  train->add_option("--preset", preset, "ssl_sd | ssl_sd_moco | idns | idns_moco | full_md | full_md_bank_all");
  train->add_option("--out-dir", out_dir, "Output directory");
  train->add_option("--init", init_path, "Initial checkpoint");
  add_override_flags(train, overrides);

  std::string checkpoint, mode = "pooled";
  bool projection = false;
  auto* ev = app.add_subcommand("eval", "Score the eval split with a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "Encoder checkpoint")->required();
  ev->add_option("--corpus", corpus_path, "Corpus file")->required();
  ev->add_option("--mode", mode, "pooled | matrix");
  ev->add_option("--config", config_path, "Experiment config JSON (eval section)");
  ev->add_option("--out-dir", out_dir, "Output directory");
  ev->add_flag("--projection", projection, "Also export a 2-D PCA projection of test embeddings");

  std::size_t seeds = 5;
  std::size_t threads = 0;
  std::vector<std::string> presets;
  auto* bench = app.add_subcommand("benchmark", "Run the ablation ladder over several seeds");
  bench->add_option("--config", config_path, "Experiment config JSON");
  bench->add_option("--corpus", corpus_path, "Corpus file")->required();
  bench->add_option("--seeds", seeds, "Number of seeds");
  bench->add_option("--threads", threads, "Worker threads (0 = all cores)");
  bench->add_option("--presets", presets, "Subset of presets");
  bench->add_option("--out-dir", out_dir, "Output directory");
  add_override_flags(bench, overrides);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(spec_path, out_path, out);
    if (*train) return cmd_train(config_path, corpus_path, preset, out_dir, init_path, overrides, out);
    if (*ev) return cmd_eval(checkpoint, corpus_path, mode, config_path, out_dir, projection, out);
    if (*bench) return cmd_benchmark(config_path, corpus_path, seeds, threads, presets, out_dir, overrides, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace mdssl
