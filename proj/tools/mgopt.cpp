// Command-line front end for the multiplex-graph classifier: train on CSV
// views, generate synthetic datasets, run the optimizer verification suites,
// and export fused embeddings for external plotting.
//
// Exit codes: 0 success, 2 usage or input-format error, 3 numeric failure
// (diverged training, projection that ran out of iterations), 4 verification
// property failure. MGOPT_LOG=quiet|info|debug controls stderr verbosity and
// is the only environment variable consulted.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mgopt/attention.hpp"
#include "mgopt/dataio.hpp"
#include "mgopt/errors.hpp"
#include "mgopt/fsio.hpp"
#include "mgopt/model.hpp"
#include "mgopt/verify.hpp"

namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "1.0.0";

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("MGOPT_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    const std::string value(env);
    if (value == "quiet") return LogLevel::kQuiet;
    if (value == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

void note(const std::string& msg) {
  if (log_level() >= LogLevel::kInfo)
    std::fprintf(stderr, "mgopt: %s\n", msg.c_str());
}

// Warnings and errors bypass the verbosity gate.
void warn(const std::string& msg) {
  std::fprintf(stderr, "mgopt: warning: %s\n", msg.c_str());
}

void fail(const std::string& msg) {
  std::fprintf(stderr, "mgopt: error: %s\n", msg.c_str());
}

// ---------------------------------------------------------------------------
// Flat key=value config file. '#' starts a comment, blank lines are skipped,
// keys mirror the TrainConfig fields. Flags given on the command line win
// over the file, the file wins over built-in defaults.

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw mgopt::ContractError("config file: bad numeric value for '" + key +
                               "': " + value);
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(value, &used);
    if (used != value.size() || value.front() == '-')
      throw std::invalid_argument(value);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw mgopt::ContractError("config file: bad integer value for '" + key +
                               "': " + value);
  }
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void apply_config_file(const std::string& path, mgopt::TrainConfig& config) {
  std::istringstream lines(mgopt::read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw mgopt::ContractError("config file: line " + std::to_string(lineno) +
                                 " is not key=value: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "layers")
      config.layers = static_cast<std::size_t>(parse_uint(key, value));
    else if (key == "temperature")
      config.temperature = parse_double(key, value);
    else if (key == "learning_rate")
      config.learning_rate = parse_double(key, value);
    else if (key == "weight_decay")
      config.weight_decay = parse_double(key, value);
    else if (key == "dropout_rate")
      config.dropout_rate = parse_double(key, value);
    else if (key == "epochs")
      config.epochs = static_cast<std::size_t>(parse_uint(key, value));
    else if (key == "fusion")
      config.fusion = mgopt::fusion_from_string(value);
    else if (key == "latent_dim")
      config.latent_dim = static_cast<std::size_t>(parse_uint(key, value));
    else if (key == "seed")
      config.seed = parse_uint(key, value);
    else if (key == "label_ratio")
      config.label_ratio = parse_double(key, value);
    else if (key == "projection_tol")
      config.projection_tol = parse_double(key, value);
    else if (key == "projection_max_iter")
      config.projection_max_iter =
          static_cast<std::size_t>(parse_uint(key, value));
    else if (key == "spectral_cap")
      config.spectral_cap = parse_double(key, value);
    else
      throw mgopt::ContractError("config file: unknown key '" + key + "'");
  }
}

json config_json(const mgopt::TrainConfig& c) {
  return json{{"layers", c.layers},
              {"temperature", c.temperature},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"dropout_rate", c.dropout_rate},
              {"epochs", c.epochs},
              {"fusion", mgopt::fusion_name(c.fusion)},
              {"latent_dim", c.latent_dim},
              {"seed", c.seed},
              {"label_ratio", c.label_ratio},
              {"projection_tol", c.projection_tol},
              {"projection_max_iter", c.projection_max_iter},
              {"spectral_cap", c.spectral_cap}};
}

// ---------------------------------------------------------------------------
// train

struct RunManifest {
  std::string command;
  mgopt::TrainConfig config;
  std::vector<std::string> view_paths;
  std::string label_path;
  std::string dataset_digest;
  std::vector<std::string> artifacts;  // paths relative to the output dir
};

json manifest_json(const RunManifest& m) {
  json views = json::array();
  for (const auto& p : m.view_paths)
    views.push_back({{"path", p}, {"digest", mgopt::file_digest(p)}});
  return json{{"schema", "mgopt.manifest/1"},
              {"tool_version", kToolVersion},
              {"command", m.command},
              {"seed", m.config.seed},
              {"config", config_json(m.config)},
              {"inputs",
               {{"views", views},
                {"labels",
                 {{"path", m.label_path},
                  {"digest", mgopt::file_digest(m.label_path)}}}}},
              {"dataset_digest", m.dataset_digest},
              {"artifacts", m.artifacts}};
}

std::string dataset_digest(const std::vector<std::string>& views,
                           const std::string& labels) {
  std::vector<std::string> parts;
  for (const auto& v : views) parts.push_back(mgopt::file_digest(v));
  parts.push_back(mgopt::file_digest(labels));
  return mgopt::combine_digests(parts);
}

json metrics_json(const mgopt::EvalReport& r) {
  return json{{"schema", "mgopt.metrics/1"},
              {"accuracy", r.accuracy},
              {"macro_f1", r.macro_f1},
              {"per_class_f1", r.per_class_f1},
              {"confusion", r.confusion},
              {"per_layer_objective", r.per_layer_objective}};
}

std::string train_log_jsonl(const std::vector<mgopt::EpochRecord>& log) {
  std::string text = json{{"schema", "mgopt.trainlog/1"}}.dump() + "\n";
  for (const auto& rec : log) {
    text += json{{"epoch", rec.epoch},
                 {"contrastive", rec.contrastive_loss},
                 {"cross_entropy", rec.cross_entropy},
                 {"total", rec.total},
                 {"train_accuracy", rec.train_accuracy}}
                .dump() +
            "\n";
  }
  return text;
}

struct TrainArgs {
  std::vector<std::string> views;
  std::string labels;
  std::string out;
  std::string config_path;
  std::size_t k = 0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  double label_ratio = 0.0;
};

int run_train(const TrainArgs& args, const CLI::App* cmd) {
  mgopt::TrainConfig config;
  if (!args.config_path.empty()) apply_config_file(args.config_path, config);
  if (cmd->count("--k") > 0) config.layers = args.k;
  if (cmd->count("--tau") > 0) config.temperature = args.tau;
  if (cmd->count("--seed") > 0) config.seed = args.seed;
  if (cmd->count("--label-ratio") > 0) config.label_ratio = args.label_ratio;
  mgopt::validate_config(config);

  // Feature columns are standardized at load time; the attention kernels
  // exponentiate latent inner products, so raw-scale features can overflow
  // them within a layer or two.
  mgopt::MultiOmicsDataset dataset =
      mgopt::load_dataset(args.views, args.labels, /*zscore=*/true);
  note("loaded " + std::to_string(dataset.sample_count()) + " samples, " +
       std::to_string(dataset.view_count()) + " views, " +
       std::to_string(dataset.class_count()) + " classes");

  note("training for " + std::to_string(config.epochs) + " epochs");
  mgopt::FitResult fitted = mgopt::fit(dataset, config);

  mgopt::LabelMask mask = mgopt::split_semi_supervised(
      dataset, config.label_ratio, config.seed);
  mgopt::EvalReport report =
      mgopt::evaluate(dataset, fitted.params, config, mask);

  std::vector<std::size_t> dims;
  for (const auto& v : dataset.views) dims.push_back(v.features.cols());
  std::string digest =
      mgopt::config_digest(config, dims, dataset.class_count());

  namespace fs = std::filesystem;
  fs::create_directories(args.out);
  const fs::path out(args.out);
  mgopt::save_model((out / "model.bin").string(), fitted.params, config,
                    digest);
  mgopt::write_file_atomic((out / "metrics.json").string(),
                           metrics_json(report).dump(2) + "\n");
  mgopt::write_file_atomic((out / "train.log.jsonl").string(),
                           train_log_jsonl(fitted.log));

  RunManifest manifest;
  manifest.command = "train";
  manifest.config = config;
  manifest.view_paths = args.views;
  manifest.label_path = args.labels;
  manifest.dataset_digest = dataset_digest(args.views, args.labels);
  manifest.artifacts = {"model.bin", "metrics.json", "train.log.jsonl"};
  mgopt::write_file_atomic((out / "manifest.json").string(),
                           manifest_json(manifest).dump(2) + "\n");

  note("artifacts written to " + args.out);
  std::printf("ACC %.4f macro-F1 %.4f\n", report.accuracy, report.macro_f1);
  return 0;
}

// ---------------------------------------------------------------------------
// verify

json verify_json(const mgopt::VerifyOptions& options,
                 const mgopt::VerifyReport& report) {
  json properties = json::array();
  for (const auto& p : report.properties) {
    json trajectory = json::array();
    for (const auto& step : p.sample_trajectory) {
      trajectory.push_back({{"objective_before", step.objective_before},
                            {"objective_after", step.objective_after},
                            {"step_size", step.step_size_used},
                            {"stability_bound", step.bound},
                            {"spectral_radius", step.spectral_radius_S_over_3}});
    }
    properties.push_back({{"name", p.name},
                          {"passed", p.passed},
                          {"guaranteed", p.guaranteed},
                          {"worst_slack", p.worst_slack},
                          {"failing_seed", p.failing_seed},
                          {"detail", p.detail},
                          {"sample_trajectory", trajectory}});
  }
  return json{{"schema", "mgopt.verify/1"},
              {"options",
               {{"seeds", options.seeds},
                {"samples", options.samples},
                {"dim", options.dim},
                {"modalities", options.modalities},
                {"alpha_scale", options.alpha_scale},
                {"base_seed", options.base_seed}}},
              {"all_passed", report.all_passed()},
              {"properties", properties}};
}

int run_verify(const mgopt::VerifyOptions& options, const std::string& out) {
  mgopt::VerifyReport report = mgopt::run_verification(options);
  std::string doc = verify_json(options, report).dump(2) + "\n";
  if (out.empty()) {
    std::fputs(doc.c_str(), stdout);
  } else {
    mgopt::write_file_atomic(out, doc);
    note("report written to " + out);
  }
  int code = 0;
  for (const auto& p : report.properties) {
    if (!p.guaranteed)
      warn("property '" + p.name +
           "' was exercised outside its sufficient condition; descent is "
           "not guaranteed there and was not judged");
    if (!p.passed) {
      fail("property '" + p.name + "' failed at seed " +
           std::to_string(p.failing_seed) + ": " + p.detail);
      code = 4;
    }
  }
  return code;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::size_t n = 400;
  std::size_t m = 3;
  std::size_t classes = 4;
  std::size_t dim = 64;
  double separation = 5.0;
  double sigma = 1.0;
  std::uint64_t seed = 7;
  std::string out;
};

int run_synth(const SynthArgs& args) {
  mgopt::SynthSpec spec;
  spec.samples = args.n;
  spec.dims.assign(args.m, args.dim);
  spec.classes = args.classes;
  spec.separation = args.separation;
  spec.noise_sigma = args.sigma;
  spec.seed = args.seed;
  mgopt::MultiOmicsDataset dataset = mgopt::synth_generate(spec);
  std::filesystem::create_directories(args.out);
  std::vector<std::string> paths = mgopt::save_dataset_csv(dataset, args.out);
  for (const auto& p : paths) std::printf("%s\n", p.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// export-embeddings

struct ExportArgs {
  std::string model;
  std::vector<std::string> views;
  std::string labels;
  std::string out;
};

int run_export(const ExportArgs& args) {
  mgopt::LoadedModel loaded = mgopt::load_model(args.model);
  mgopt::MultiOmicsDataset dataset =
      mgopt::load_dataset(args.views, args.labels, /*zscore=*/true);
  std::vector<std::size_t> dims;
  for (const auto& v : dataset.views) dims.push_back(v.features.cols());
  std::string expected =
      mgopt::config_digest(loaded.config, dims, dataset.class_count());
  if (expected != loaded.digest)
    throw mgopt::DataError(
        "model/dataset digest mismatch: the container was trained with a "
        "different configuration or feature layout (model " + loaded.digest +
        ", dataset " + expected + ")");

  mgopt::LabelMask mask;  // forward only range-checks the mask
  mgopt::ForwardResult result = mgopt::forward(
      dataset, loaded.params, loaded.config, mask, mgopt::ForwardMode::kEval);

  std::string text = "sample_id\tlabel";
  for (std::size_t j = 0; j < result.fused.cols(); ++j)
    text += "\tz_" + std::to_string(j);
  text += "\n";
  char cell[40];
  for (std::size_t i = 0; i < result.fused.rows(); ++i) {
    text += dataset.sample_ids[i] + "\t" +
            dataset.label_names[static_cast<std::size_t>(dataset.labels[i])];
    for (std::size_t j = 0; j < result.fused.cols(); ++j) {
      std::snprintf(cell, sizeof cell, "\t%.17g", result.fused(i, j));
      text += cell;
    }
    text += "\n";
  }
  mgopt::write_file_atomic(args.out, text);
  note("wrote " + std::to_string(result.fused.rows()) + " embeddings (dim " +
       std::to_string(result.fused.cols()) + ") to " + args.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiplex-graph classifier: training, verification, and data tooling"};
  app.set_version_flag("--version", std::string("mgopt ") + kToolVersion);
  app.require_subcommand(1);
  app.footer("Environment: MGOPT_LOG=quiet|info|debug sets stderr verbosity.");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand(
      "train", "fit the classifier on CSV views and write artifacts");
  train->add_option("--views", train_args.views, "view CSV path (repeatable)")
      ->required();
  train->add_option("--labels", train_args.labels, "label CSV path")
      ->required();
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_option("--config", train_args.config_path,
                    "key=value config file");
  train->add_option("--k", train_args.k, "propagation layers (default 3)");
  train->add_option("--tau", train_args.tau,
                    "contrastive temperature (default 10)");
  train->add_option("--seed", train_args.seed, "run seed (default 0)");
  train->add_option("--label-ratio", train_args.label_ratio,
                    "labeled fraction (default 0.1)");

  mgopt::VerifyOptions verify_options;
  std::string verify_out;
  CLI::App* verify = app.add_subcommand(
      "verify", "run the optimizer property suites and emit a JSON report");
  verify->add_option("--seeds", verify_options.seeds,
                     "instances per property (default 100)");
  verify->add_option("--samples", verify_options.samples,
                     "samples per instance (default 16)");
  verify->add_option("--dim", verify_options.dim,
                     "embedding width (default 4)");
  verify->add_option("--modalities", verify_options.modalities,
                     "modalities per instance (default 3)");
  verify->add_option("--alpha-scale", verify_options.alpha_scale,
                     "multiplier on the first-order step grid (default 1.0)");
  verify->add_option("--base-seed", verify_options.base_seed,
                     "offset for the instance seeds (default 0)");
  verify->add_option("--out", verify_out,
                     "report path (default: print to stdout)");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand(
      "synth", "generate a synthetic multi-view dataset as CSV");
  synth->add_option("--n", synth_args.n, "sample count (default 400)");
  synth->add_option("--m", synth_args.m, "view count (default 3)");
  synth->add_option("--classes", synth_args.classes, "class count (default 4)");
  synth->add_option("--dim", synth_args.dim,
                    "features per view (default 64)");
  synth->add_option("--separation", synth_args.separation,
                    "centroid scale (default 5)");
  synth->add_option("--sigma", synth_args.sigma,
                    "noise level (default 1)");
  synth->add_option("--seed", synth_args.seed, "generator seed (default 7)");
  synth->add_option("--out", synth_args.out, "output directory")->required();

  ExportArgs export_args;
  CLI::App* exportc = app.add_subcommand(
      "export-embeddings", "write fused eval-mode embeddings as TSV");
  exportc->add_option("--model", export_args.model, "model container path")
      ->required();
  exportc
      ->add_option("--views", export_args.views, "view CSV path (repeatable)")
      ->required();
  exportc->add_option("--labels", export_args.labels, "label CSV path")
      ->required();
  exportc->add_option("--out", export_args.out, "TSV output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed()) return run_train(train_args, train);
    if (verify->parsed()) return run_verify(verify_options, verify_out);
    if (synth->parsed()) return run_synth(synth_args);
    if (exportc->parsed()) return run_export(export_args);
    fail("no command given");
    return 2;
  } catch (const mgopt::DivergenceError& e) {
    fail(e.what());
    return 3;
  } catch (const mgopt::ConvergenceError& e) {
    fail(e.what());
    return 3;
  } catch (const mgopt::NumericError& e) {
    fail(e.what());
    return 3;
  } catch (const mgopt::Error& e) {
    fail(e.what());
    return 2;
  } catch (const std::exception& e) {
    fail(std::string("internal error: ") + e.what());
    return 1;
  }
}
