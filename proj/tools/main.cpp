// Command-line front door: synth -> train -> calibrate -> eval pipelines
// over CMF1 feature bundles, plus parameter sweeps and a gradient checker.
// Exit codes: 0 ok, 1 IO, 2 validation, 3 numerics, 4 check failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmzsl/errors.hpp"
#include "cmzsl/evaluation.hpp"
#include "cmzsl/feature_store.hpp"
#include "cmzsl/gzsl.hpp"
#include "cmzsl/losses.hpp"
#include "cmzsl/rng.hpp"
#include "cmzsl/trainer.hpp"
#include "cmzsl/version.hpp"

namespace {

using nlohmann::json;

/// "start:stop:step" inclusive of both endpoints within half a step;
/// a bare number is a one-point grid.
std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> parts;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    const std::size_t colon = text.find(':', begin);
    const std::string tok = text.substr(
        begin, colon == std::string::npos ? std::string::npos : colon - begin);
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw cmzsl::ArgumentError("bad grid token '" + tok + "' in '" + text + "'");
    }
    if (colon == std::string::npos) break;
    begin = colon + 1;
  }
  if (parts.size() == 1) return parts;
  if (parts.size() != 3)
    throw cmzsl::ArgumentError("grid must be 'start:stop:step' or a single value");
  const double start = parts[0], stop = parts[1], step = parts[2];
  if (step <= 0.0) throw cmzsl::ArgumentError("grid step must be positive");
  if (stop < start) throw cmzsl::ArgumentError("grid stop must be >= start");
  std::vector<double> grid;
  for (int k = 0;; ++k) {
    const double v = start + k * step;
    if (v > stop + 0.5 * step) break;
    grid.push_back(std::min(v, stop));
  }
  return grid;
}

struct Stopwatch {
  std::chrono::steady_clock::time_point begin = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - begin)
        .count();
  }
};

void write_manifest(const std::filesystem::path& path, const std::string& command,
                    const json& config, const json& inputs, const json& outputs,
                    double seconds) {
  json j;
  j["command"] = command;
  j["version"] = cmzsl::kVersion;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["duration_seconds"] = seconds;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw cmzsl::IoError("cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw cmzsl::IoError("write failed: " + path.string());
}

std::string default_manifest(const std::string& primary_output) {
  return primary_output + ".manifest.json";
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  cmzsl::SynthConfig config;
  std::string bundle_path;
  std::string split_path;
  std::string format = "binary";
  std::string manifest_path;
};

int run_synth(const SynthArgs& args) {
  Stopwatch watch;
  auto [bundle, split] = cmzsl::synth_generate(args.config);
  const auto format =
      args.format == "csv" ? cmzsl::BundleFormat::csv : cmzsl::BundleFormat::binary;
  cmzsl::save_bundle(bundle, args.bundle_path, format);
  cmzsl::save_split(split, args.split_path);

  json config{{"seen", args.config.num_seen},
              {"unseen", args.config.num_unseen},
              {"per_class", args.config.instances_per_class},
              {"dv", args.config.dv},
              {"dt", args.config.dt},
              {"t", args.config.t},
              {"latent", args.config.latent_dim},
              {"sigma", args.config.noise_sigma},
              {"seed", args.config.seed},
              {"format", args.format}};
  const std::string manifest = args.manifest_path.empty()
                                   ? default_manifest(args.bundle_path)
                                   : args.manifest_path;
  write_manifest(manifest, "synth", config, json::object(),
                 json{{"bundle", args.bundle_path}, {"split", args.split_path}},
                 watch.seconds());
  std::printf("synth: %zu instances, %u classes -> %s\n", bundle.size(),
              bundle.num_classes, args.bundle_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string bundle_path;
  std::string split_path;
  std::string checkpoint_path;
  std::string log_path;
  std::string metric = "sqeuclid";
  std::string manifest_path;
  cmzsl::TrainConfig config;
};

json train_config_json(const TrainArgs& args) {
  return json{{"lambda", args.config.lambda},
              {"kappa", args.config.kappa},
              {"metric", args.metric},
              {"embed_dim", args.config.embed_dim},
              {"batch_size", args.config.batch_size},
              {"steps", args.config.steps},
              {"lr", args.config.lr},
              {"lr_decay_every", args.config.lr_decay_every},
              {"lr_decay_factor", args.config.lr_decay_factor},
              {"seed", args.config.seed}};
}

int run_train(const TrainArgs& args_in) {
  Stopwatch watch;
  TrainArgs args = args_in;
  args.config.metric = cmzsl::metric_from_string(args.metric);
  const auto bundle = cmzsl::load_bundle(args.bundle_path, cmzsl::BundleFormat::binary);
  const auto split = cmzsl::load_split(args.split_path);

  const cmzsl::TrainResult result = cmzsl::train(bundle, split, args.config);
  cmzsl::save_params(result.params, args.checkpoint_path);
  const std::string log_path =
      args.log_path.empty() ? args.checkpoint_path + ".log.csv" : args.log_path;
  cmzsl::write_training_log_csv(result.log, log_path);

  const std::string manifest = args.manifest_path.empty()
                                   ? default_manifest(args.checkpoint_path)
                                   : args.manifest_path;
  write_manifest(manifest, "train", train_config_json(args),
                 json{{"bundle", args.bundle_path}, {"split", args.split_path}},
                 json{{"checkpoint", args.checkpoint_path}, {"log", log_path}},
                 watch.seconds());
  if (!result.log.empty())
    std::printf("train: %u steps, final total loss %.6f -> %s\n", args.config.steps,
                result.log.back().report.total, args.checkpoint_path.c_str());
  else
    std::printf("train: 0 steps, checkpoint equals initialization -> %s\n",
                args.checkpoint_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// calibrate / eval / sweep

struct CalibrateArgs {
  std::string bundle_path;
  std::string split_path;
  std::string checkpoint_path;
  std::string grid = "0:4:0.05";
  std::string metric = "sqeuclid";
  std::string averaging = "per_class";
  std::string out_csv = "calibration.csv";
  std::string out_json = "calibration.json";
  std::string manifest_path;
};

cmzsl::Averaging averaging_from_string(const std::string& name) {
  if (name == "per_class") return cmzsl::Averaging::per_class;
  if (name == "per_sample") return cmzsl::Averaging::per_sample;
  throw cmzsl::ArgumentError("unknown averaging: " + name);
}

int run_calibrate(const CalibrateArgs& args) {
  Stopwatch watch;
  const auto bundle = cmzsl::load_bundle(args.bundle_path, cmzsl::BundleFormat::binary);
  const auto split = cmzsl::load_split(args.split_path);
  const auto params = cmzsl::load_params(args.checkpoint_path);
  const auto grid = parse_grid(args.grid);
  const auto metric = cmzsl::metric_from_string(args.metric);

  const cmzsl::SweepResult sweep = cmzsl::alpha_sweep(
      params, bundle, split, grid, metric, averaging_from_string(args.averaging));
  cmzsl::write_sweep_csv(sweep, args.out_csv);

  const auto& best = sweep.points[sweep.best_index];
  json out{{"alpha", sweep.best_value},
           {"h", best.report.h ? json(*best.report.h) : json(nullptr)},
           {"grid_points", sweep.points.size()}};
  std::ofstream os(args.out_json, std::ios::trunc);
  if (!os) throw cmzsl::IoError("cannot open for writing: " + args.out_json);
  os << out.dump(2) << '\n';

  const std::string manifest = args.manifest_path.empty()
                                   ? default_manifest(args.out_json)
                                   : args.manifest_path;
  write_manifest(manifest, "calibrate",
                 json{{"grid", args.grid},
                      {"metric", args.metric},
                      {"averaging", args.averaging}},
                 json{{"bundle", args.bundle_path},
                      {"split", args.split_path},
                      {"checkpoint", args.checkpoint_path}},
                 json{{"csv", args.out_csv}, {"json", args.out_json}}, watch.seconds());
  std::printf("calibrate: best alpha %.4f (H=%.4f) over %zu grid points\n",
              sweep.best_value, best.report.h.value_or(0.0), sweep.points.size());
  return 0;
}

struct EvalArgs {
  std::string bundle_path;
  std::string split_path;
  std::string checkpoint_path;
  double alpha = 0.0;
  bool zsl = false;
  std::string metric = "sqeuclid";
  std::string averaging = "per_class";
  std::string out_json = "report.json";
  std::string out_csv = "report.csv";
  std::string out_prototypes;  // optional CSV dump of the prototype table
  std::string manifest_path;
};

int run_eval(const EvalArgs& args) {
  Stopwatch watch;
  const auto bundle = cmzsl::load_bundle(args.bundle_path, cmzsl::BundleFormat::binary);
  const auto split = cmzsl::load_split(args.split_path);
  const auto params = cmzsl::load_params(args.checkpoint_path);
  const auto metric = cmzsl::metric_from_string(args.metric);
  const auto averaging = averaging_from_string(args.averaging);
  if (args.alpha < 0.0) throw cmzsl::ArgumentError("alpha must be >= 0");

  const cmzsl::PrototypeTable table =
      cmzsl::build_split_table(params, bundle, split, args.zsl, metric);
  if (!args.out_prototypes.empty())
    cmzsl::save_prototypes_csv(table, args.out_prototypes);
  const std::vector<std::uint32_t> no_ids;
  const cmzsl::GzslReport report =
      args.zsl ? cmzsl::evaluate(params, bundle, no_ids, split.test_unseen_ids, table,
                                 args.alpha, averaging)
               : cmzsl::evaluate(params, bundle, split.test_seen_ids,
                                 split.test_unseen_ids, table, args.alpha, averaging);
  cmzsl::write_report_json(report, args.alpha, args.out_json);
  cmzsl::write_report_csv(report, args.alpha, args.out_csv);

  const std::string manifest = args.manifest_path.empty()
                                   ? default_manifest(args.out_json)
                                   : args.manifest_path;
  write_manifest(manifest, "eval",
                 json{{"alpha", args.alpha},
                      {"zsl", args.zsl},
                      {"metric", args.metric},
                      {"averaging", args.averaging}},
                 json{{"bundle", args.bundle_path},
                      {"split", args.split_path},
                      {"checkpoint", args.checkpoint_path}},
                 json{{"json", args.out_json}, {"csv", args.out_csv}}, watch.seconds());
  if (args.zsl)
    std::printf("eval (zsl): u=%.4f\n", report.u.value_or(0.0));
  else
    std::printf("eval: u=%.4f s=%.4f H=%.4f\n", report.u.value_or(0.0),
                report.s.value_or(0.0), report.h.value_or(0.0));
  return 0;
}

struct SweepArgs {
  std::string param;
  std::string grid;
  std::uint32_t repeats = 10;
  std::string bundle_path;
  std::string split_path;
  std::string checkpoint_path;  // only for --param alpha
  std::string alpha_grid = "0:4:0.05";
  std::string metric = "sqeuclid";
  std::string averaging = "per_class";
  std::string out_csv = "sweep.csv";
  std::string manifest_path;
  cmzsl::TrainConfig base;
};

int run_sweep(const SweepArgs& args) {
  Stopwatch watch;
  const auto bundle = cmzsl::load_bundle(args.bundle_path, cmzsl::BundleFormat::binary);
  const auto split = cmzsl::load_split(args.split_path);
  const auto metric = cmzsl::metric_from_string(args.metric);
  const auto averaging = averaging_from_string(args.averaging);
  const auto grid = parse_grid(args.grid);

  cmzsl::SweepResult result;
  if (args.param == "alpha") {
    if (args.checkpoint_path.empty())
      throw cmzsl::ArgumentError("--param alpha requires --checkpoint");
    const auto params = cmzsl::load_params(args.checkpoint_path);
    result = cmzsl::alpha_sweep(params, bundle, split, grid, metric, averaging);
  } else if (args.param == "lambda" || args.param == "kappa") {
    cmzsl::MixingSweepConfig config;
    config.base = args.base;
    config.base.metric = metric;
    config.alpha_grid = parse_grid(args.alpha_grid);
    config.repeats = args.repeats;
    config.averaging = averaging;
    const auto param =
        args.param == "lambda" ? cmzsl::MixParam::lambda : cmzsl::MixParam::kappa;
    result = cmzsl::mixing_sweep(bundle, split, param, grid, config);
  } else {
    throw cmzsl::ArgumentError("unknown sweep parameter: " + args.param);
  }
  cmzsl::write_sweep_csv(result, args.out_csv);

  const std::string manifest = args.manifest_path.empty()
                                   ? default_manifest(args.out_csv)
                                   : args.manifest_path;
  write_manifest(manifest, "sweep",
                 json{{"param", args.param},
                      {"grid", args.grid},
                      {"repeats", args.repeats},
                      {"alpha_grid", args.alpha_grid},
                      {"metric", args.metric},
                      {"averaging", args.averaging}},
                 json{{"bundle", args.bundle_path},
                      {"split", args.split_path},
                      {"checkpoint", args.checkpoint_path}},
                 json{{"csv", args.out_csv}}, watch.seconds());
  std::printf("sweep %s: best %s=%.4f (H=%.4f)\n", args.param.c_str(),
              args.param.c_str(), result.best_value,
              result.points[result.best_index].report.h.value_or(0.0));
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::uint32_t b = 4;
  std::uint32_t dv = 10;
  std::uint32_t dt = 7;
  std::uint32_t dz = 8;
  std::uint32_t c = 5;
  double lambda = 0.5;
  double kappa = 0.5;
  std::string metric = "sqeuclid";
  std::uint64_t seed = 0;
  double h = 1e-4;
  double tolerance = 1e-4;
  bool perturb = false;
};

int run_gradcheck(const GradcheckArgs& args) {
  const auto metric = cmzsl::metric_from_string(args.metric);
  cmzsl::RawBatch raw;
  raw.x = cmzsl::Matrix(args.b, args.dv);
  raw.s = cmzsl::Matrix(args.b, args.dt);
  raw.labels.resize(args.b);
  raw.indices.resize(args.b);
  cmzsl::SplitMix64 rng = cmzsl::substream(args.seed, 17);
  for (auto& v : raw.x.data) v = rng.normal();
  for (auto& v : raw.s.data) v = rng.normal();
  for (std::size_t i = 0; i < args.b; ++i) {
    raw.labels[i] = static_cast<std::uint32_t>(rng.next_below(args.c));
    raw.indices[i] = static_cast<std::uint32_t>(i);
  }
  const cmzsl::ModelParams params =
      cmzsl::init_params(args.dv, args.dt, args.dz, args.c, args.seed);

  const cmzsl::GradCheckResult result =
      cmzsl::gradient_check(raw, params, args.lambda, args.kappa, metric, args.h,
                            args.perturb ? 1e-2 : 0.0);
  for (const auto& block : result.blocks)
    std::printf("  %-3s max relative error %.3e\n", block.name.c_str(),
                block.max_rel_err);
  const bool pass = result.worst < args.tolerance;
  std::printf("gradcheck %s: worst %.3e (tolerance %.1e)\n", pass ? "PASS" : "FAIL",
              result.worst, args.tolerance);
  return pass ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-modal embedding and generalized zero-shot toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic feature bundle");
  synth_cmd->add_option("--seen", synth.config.num_seen, "seen classes")
      ->check(CLI::Range(1u, 1000000u));
  synth_cmd->add_option("--unseen", synth.config.num_unseen, "unseen classes")
      ->check(CLI::Range(1u, 1000000u));
  synth_cmd->add_option("--per-class", synth.config.instances_per_class,
                        "instances per class")
      ->check(CLI::Range(1u, 1000000u));
  synth_cmd->add_option("--dv", synth.config.dv, "image feature dim")
      ->check(CLI::Range(1u, 1000000u));
  synth_cmd->add_option("--dt", synth.config.dt, "text feature dim")
      ->check(CLI::Range(1u, 1000000u));
  synth_cmd->add_option("--t", synth.config.t, "descriptions per instance")
      ->check(CLI::Range(1u, 1000000u));
  synth_cmd->add_option("--latent", synth.config.latent_dim, "latent dim")
      ->check(CLI::Range(1u, 1000000u));
  synth_cmd->add_option("--sigma", synth.config.noise_sigma, "noise sigma")
      ->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth.config.seed, "rng seed");
  synth_cmd->add_option("--bundle", synth.bundle_path, "output bundle path")
      ->required();
  synth_cmd->add_option("--split", synth.split_path, "output split path")->required();
  synth_cmd->add_option("--format", synth.format, "bundle format")
      ->check(CLI::IsMember({"binary", "csv"}));
  synth_cmd->add_option("--manifest", synth.manifest_path, "manifest path");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train projection heads with SGD");
  train_cmd->add_option("--bundle", train.bundle_path, "input bundle")->required();
  train_cmd->add_option("--split", train.split_path, "input split")->required();
  train_cmd->add_option("--checkpoint", train.checkpoint_path, "output checkpoint")
      ->required();
  train_cmd->add_option("--log", train.log_path, "output loss log CSV");
  train_cmd->add_option("--lambda", train.config.lambda, "text retrieval weight")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--kappa", train.config.kappa, "classification weight")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--metric", train.metric, "distance metric")
      ->check(CLI::IsMember({"sqeuclid", "cosine"}));
  train_cmd->add_option("--embed-dim", train.config.embed_dim, "embedding dim")
      ->check(CLI::Range(1u, 1000000u));
  train_cmd->add_option("--batch-size", train.config.batch_size, "batch size")
      ->check(CLI::Range(1u, 1000000u));
  train_cmd->add_option("--steps", train.config.steps, "SGD steps");
  train_cmd->add_option("--lr", train.config.lr, "learning rate")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr-decay-every", train.config.lr_decay_every,
                        "decay interval in steps (0 = never)");
  train_cmd->add_option("--lr-decay-factor", train.config.lr_decay_factor,
                        "decay factor")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train.config.seed, "rng seed");
  train_cmd->add_option("--manifest", train.manifest_path, "manifest path");

  CalibrateArgs calibrate;
  auto* calibrate_cmd =
      app.add_subcommand("calibrate", "pick alpha by maximizing H on validation");
  calibrate_cmd->add_option("--bundle", calibrate.bundle_path, "input bundle")
      ->required();
  calibrate_cmd->add_option("--split", calibrate.split_path, "input split")->required();
  calibrate_cmd->add_option("--checkpoint", calibrate.checkpoint_path, "checkpoint")
      ->required();
  calibrate_cmd->add_option("--grid", calibrate.grid, "alpha grid start:stop:step");
  calibrate_cmd->add_option("--metric", calibrate.metric, "distance metric")
      ->check(CLI::IsMember({"sqeuclid", "cosine"}));
  calibrate_cmd->add_option("--averaging", calibrate.averaging, "accuracy averaging")
      ->check(CLI::IsMember({"per_class", "per_sample"}));
  calibrate_cmd->add_option("--out-csv", calibrate.out_csv, "sweep CSV path");
  calibrate_cmd->add_option("--out-json", calibrate.out_json, "chosen alpha JSON path");
  calibrate_cmd->add_option("--manifest", calibrate.manifest_path, "manifest path");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate the test split");
  eval_cmd->add_option("--bundle", eval.bundle_path, "input bundle")->required();
  eval_cmd->add_option("--split", eval.split_path, "input split")->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint_path, "checkpoint")->required();
  eval_cmd->add_option("--alpha", eval.alpha, "seen-distance rescaling alpha")
      ->required()
      ->check(CLI::NonNegativeNumber);
  eval_cmd->add_flag("--zsl", eval.zsl, "restrict prototypes to unseen classes");
  eval_cmd->add_option("--metric", eval.metric, "distance metric")
      ->check(CLI::IsMember({"sqeuclid", "cosine"}));
  eval_cmd->add_option("--averaging", eval.averaging, "accuracy averaging")
      ->check(CLI::IsMember({"per_class", "per_sample"}));
  eval_cmd->add_option("--out-json", eval.out_json, "report JSON path");
  eval_cmd->add_option("--out-csv", eval.out_csv, "report CSV path");
  eval_cmd->add_option("--out-prototypes", eval.out_prototypes,
                       "optional prototype table CSV");
  eval_cmd->add_option("--manifest", eval.manifest_path, "manifest path");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep lambda, kappa or alpha");
  sweep_cmd->add_option("--param", sweep.param, "lambda|kappa|alpha")->required();
  sweep_cmd->add_option("--grid", sweep.grid, "grid start:stop:step")->required();
  sweep_cmd->add_option("--repeats", sweep.repeats, "training repeats per point")
      ->check(CLI::Range(1u, 1000u));
  sweep_cmd->add_option("--bundle", sweep.bundle_path, "input bundle")->required();
  sweep_cmd->add_option("--split", sweep.split_path, "input split")->required();
  sweep_cmd->add_option("--checkpoint", sweep.checkpoint_path,
                        "checkpoint (alpha sweep only)");
  sweep_cmd->add_option("--alpha-grid", sweep.alpha_grid, "calibration grid");
  sweep_cmd->add_option("--metric", sweep.metric, "distance metric")
      ->check(CLI::IsMember({"sqeuclid", "cosine"}));
  sweep_cmd->add_option("--averaging", sweep.averaging, "accuracy averaging")
      ->check(CLI::IsMember({"per_class", "per_sample"}));
  sweep_cmd->add_option("--out-csv", sweep.out_csv, "sweep CSV path");
  sweep_cmd->add_option("--manifest", sweep.manifest_path, "manifest path");
  sweep_cmd->add_option("--lambda", sweep.base.lambda, "base lambda")
      ->check(CLI::Range(0.0, 1.0));
  sweep_cmd->add_option("--kappa", sweep.base.kappa, "base kappa")
      ->check(CLI::Range(0.0, 1.0));
  sweep_cmd->add_option("--embed-dim", sweep.base.embed_dim, "embedding dim")
      ->check(CLI::Range(1u, 1000000u));
  sweep_cmd->add_option("--batch-size", sweep.base.batch_size, "batch size")
      ->check(CLI::Range(1u, 1000000u));
  sweep_cmd->add_option("--steps", sweep.base.steps, "SGD steps");
  sweep_cmd->add_option("--lr", sweep.base.lr, "learning rate")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--lr-decay-every", sweep.base.lr_decay_every,
                        "decay interval");
  sweep_cmd->add_option("--lr-decay-factor", sweep.base.lr_decay_factor,
                        "decay factor")
      ->check(CLI::PositiveNumber);

  GradcheckArgs gradcheck;
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "verify gradients against finite differences");
  gradcheck_cmd->add_option("--batch", gradcheck.b, "batch size")
      ->check(CLI::Range(1u, 1024u));
  gradcheck_cmd->add_option("--dv", gradcheck.dv, "image dim")
      ->check(CLI::Range(1u, 4096u));
  gradcheck_cmd->add_option("--dt", gradcheck.dt, "text dim")
      ->check(CLI::Range(1u, 4096u));
  gradcheck_cmd->add_option("--dz", gradcheck.dz, "embedding dim")
      ->check(CLI::Range(1u, 4096u));
  gradcheck_cmd->add_option("--classes", gradcheck.c, "train classes")
      ->check(CLI::Range(1u, 4096u));
  gradcheck_cmd->add_option("--lambda", gradcheck.lambda, "lambda")
      ->check(CLI::Range(0.0, 1.0));
  gradcheck_cmd->add_option("--kappa", gradcheck.kappa, "kappa")
      ->check(CLI::Range(0.0, 1.0));
  gradcheck_cmd->add_option("--metric", gradcheck.metric, "distance metric")
      ->check(CLI::IsMember({"sqeuclid", "cosine"}));
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "rng seed");
  gradcheck_cmd->add_option("--fd-step", gradcheck.h, "finite difference step")
      ->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--tolerance", gradcheck.tolerance, "pass threshold")
      ->check(CLI::PositiveNumber);
  gradcheck_cmd->add_flag("--perturb", gradcheck.perturb,
                          "inject a gradient bug (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*train_cmd) return run_train(train);
    if (*calibrate_cmd) return run_calibrate(calibrate);
    if (*eval_cmd) return run_eval(eval);
    if (*sweep_cmd) return run_sweep(sweep);
    if (*gradcheck_cmd) return run_gradcheck(gradcheck);
  } catch (const cmzsl::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 1;
  } catch (const cmzsl::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 1;
  } catch (const cmzsl::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 1;
  } catch (const cmzsl::NumericsError& e) {
    std::cerr << "numerics error: " << e.what() << '\n';
    return 3;
  } catch (const cmzsl::DegenerateInputError& e) {
    std::cerr << "numerics error: " << e.what() << '\n';
    return 3;
  } catch (const cmzsl::Error& e) {
    // ArgumentError, SplitError, ShapeError, EmptyClassError: validation.
    std::cerr << "invalid arguments: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
