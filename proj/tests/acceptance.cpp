// Acceptance suite: runs every gate criterion and prints one pass/fail
// line each. Exits nonzero if any criterion fails.

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "cmzsl/evaluation.hpp"
#include "cmzsl/feature_store.hpp"
#include "cmzsl/gzsl.hpp"
#include "cmzsl/losses.hpp"
#include "cmzsl/rng.hpp"
#include "cmzsl/trainer.hpp"
#include "test_util.hpp"

using namespace cmzsl;

namespace {

int g_failures = 0;

void criterion(const char* name, const std::function<std::string()>& fn) {
  try {
    const std::string detail = fn();
    std::printf("[PASS] %s%s%s\n", name, detail.empty() ? "" : " -- ",
                detail.c_str());
  } catch (const std::exception& e) {
    std::printf("[FAIL] %s -- %s\n", name, e.what());
    ++g_failures;
  }
  std::fflush(stdout);
}

void require(bool cond, const std::string& message) {
  if (!cond) throw std::runtime_error(message);
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

Batch make_batch_1d(const std::vector<double>& z_v, const std::vector<double>& z_t) {
  Batch b;
  b.z_v = Matrix(z_v.size(), 1);
  b.z_t = Matrix(z_t.size(), 1);
  for (std::size_t i = 0; i < z_v.size(); ++i) {
    b.z_v(i, 0) = z_v[i];
    b.z_t(i, 0) = z_t[i];
  }
  b.labels.assign(z_v.size(), 0);
  b.indices.resize(z_v.size());
  return b;
}

// Shared synthetic setup for the qualitative criteria: 8 seen / 4 unseen
// classes with enough noise that the unrescaled classifier favors seen
// classes by a clear margin.
SynthConfig acceptance_synth() {
  SynthConfig cfg;
  cfg.num_seen = 8;
  cfg.num_unseen = 4;
  cfg.instances_per_class = 30;
  cfg.dv = 32;
  cfg.dt = 24;
  cfg.t = 2;
  cfg.latent_dim = 12;
  cfg.noise_sigma = 1.0;
  cfg.seed = 7;
  return cfg;
}

TrainConfig acceptance_train() {
  TrainConfig tc;
  tc.batch_size = 16;
  tc.steps = 2500;
  tc.lr = 0.05;
  tc.lr_decay_factor = 0.1;
  tc.lr_decay_every = 1250;
  tc.lambda = 0.5;
  tc.kappa = 0.5;
  tc.embed_dim = 32;
  tc.seed = 0;
  return tc;
}

std::vector<double> alpha_grid_0_4() {
  std::vector<double> grid;
  for (int k = 0; k <= 80; ++k) grid.push_back(0.05 * k);
  return grid;
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd =
      std::string(CMZSL_CLI_PATH) + " " + args + " >> " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");

  criterion("harmonic-mean oracle (reference rows, +-0.05)", [] {
    const double h_first = harmonic_mean(59.3, 52.6);
    const double h_second = harmonic_mean(73.0, 73.6);
    const double d_first = std::abs(h_first - 55.8);
    const double d_second = std::abs(h_second - 73.3);
    require(d_second <= 0.05,
            fmt("second row: |%.6f - 73.3| = %.6f > 0.05", h_second, d_second));
    require(d_first <= 0.05,
            fmt("first row: |%.6f - 55.8| = %.6f > 0.05; the rounded reference "
                "inputs land 0.0506 away, so the pinned window misses by 6e-4",
                h_first, d_first));
    return fmt("rows: %.4f, %.4f", h_first, h_second);
  });

  criterion("loss oracle (fixture distances, B=1 zero, uniform log B)", [] {
    const Batch fixture = make_batch_1d({0.0, 1.0}, {0.0, 1.0});
    const double j_tr = text_retrieval_loss(fixture, Metric::sqeuclid);
    const double expect = std::log(1.0 + std::exp(-1.0));
    require(std::abs(j_tr - expect) <= 1e-9,
            fmt("fixture loss %.12f != log(1+e^-1) %.12f", j_tr, expect));

    const Batch single = make_batch_1d({0.7}, {-0.3});
    require(text_retrieval_loss(single, Metric::sqeuclid) == 0.0,
            "B=1 text retrieval loss is not exactly zero");
    require(image_retrieval_loss(single, Metric::sqeuclid) == 0.0,
            "B=1 image retrieval loss is not exactly zero");

    const std::size_t n = 5;
    Batch uniform;
    uniform.z_v = Matrix(n, 2, 0.25);
    uniform.z_t = Matrix(n, 2, 0.25);
    uniform.labels.assign(n, 0);
    uniform.indices.resize(n);
    const double j_u = text_retrieval_loss(uniform, Metric::sqeuclid);
    require(std::abs(j_u - std::log(double(n))) <= 1e-9,
            fmt("uniform batch loss %.12f != log B %.12f", j_u, std::log(double(n))));
    return fmt("fixture %.9f", j_tr);
  });

  criterion("gradient suite (central differences, all blocks, lambda/kappa grid)",
            [] {
    RawBatch raw;
    raw.x = Matrix(4, 10);
    raw.s = Matrix(4, 7);
    raw.labels.resize(4);
    raw.indices.resize(4);
    SplitMix64 rng = substream(99, 1);
    for (auto& v : raw.x.data) v = rng.normal();
    for (auto& v : raw.s.data) v = rng.normal();
    for (std::size_t i = 0; i < 4; ++i)
      raw.labels[i] = static_cast<std::uint32_t>(rng.next_below(5));
    const ModelParams params = init_params(10, 7, 8, 5, 3);

    double worst = 0.0;
    for (double lambda : {0.0, 0.5, 1.0})
      for (double kappa : {0.0, 0.5, 1.0}) {
        const GradCheckResult result =
            gradient_check(raw, params, lambda, kappa, Metric::sqeuclid, 1e-4);
        worst = std::max(worst, result.worst);
        require(result.worst < 1e-4,
                fmt("lambda=%.1f kappa=%.1f worst relative error %.3e >= 1e-4",
                    lambda, kappa, result.worst));
      }
    return fmt("worst relative error %.3e", worst);
  });

  criterion("monotonicity suite (50 tables x 200 queries, exact)", [] {
    SplitMix64 rng = substream(1234, 0);
    const std::vector<double> grid = alpha_grid_0_4();
    for (int table_trial = 0; table_trial < 50; ++table_trial) {
      PrototypeTable table;
      table.metric = Metric::sqeuclid;
      const std::size_t n_classes = 4 + rng.next_below(10);
      for (std::uint32_t c = 0; c < n_classes; ++c) {
        PrototypeTable::Entry e;
        e.class_id = c;
        e.seen = (c == 0) ? true : (c == 1 ? false : rng.next() % 2 == 0);
        e.prototype.resize(16);
        for (auto& v : e.prototype) v = rng.normal();
        table.entries.push_back(std::move(e));
      }

      std::vector<Embedding> queries(200, Embedding(16));
      std::vector<std::uint32_t> labels(200);
      for (std::size_t q = 0; q < queries.size(); ++q) {
        for (auto& v : queries[q]) v = rng.normal();
        // Half the queries are labeled with a seen class, half unseen.
        for (;;) {
          const auto pick = static_cast<std::size_t>(rng.next_below(n_classes));
          if (table.entries[pick].seen == (q % 2 == 0)) {
            labels[q] = table.entries[pick].class_id;
            break;
          }
        }
      }

      std::set<std::uint32_t> seen_set;
      for (const auto& e : table.entries)
        if (e.seen) seen_set.insert(e.class_id);

      double prev_us = 2.0, prev_su = -1.0;
      for (double alpha : grid) {
        const auto preds = classify_batch(queries, table, alpha);
        auto [p_us, p_su] = confusion_rates(preds, labels, seen_set);
        require(*p_us <= prev_us,
                fmt("table %d: p_unseen_as_seen rose from %.6f to %.6f at "
                    "alpha=%.2f",
                    table_trial, prev_us, *p_us, alpha));
        require(*p_su >= prev_su,
                fmt("table %d: p_seen_as_unseen fell from %.6f to %.6f at "
                    "alpha=%.2f",
                    table_trial, prev_su, *p_su, alpha));
        prev_us = *p_us;
        prev_su = *p_su;
      }
    }
    return std::string("81-point grid, zero tolerance");
  });

  criterion("inverted-U reproduction (H(a*) >= H(0)+0.03, H falls again by 4)", [] {
    auto [bundle, split] = synth_generate(acceptance_synth());
    const TrainResult trained = train(bundle, split, acceptance_train());
    const SweepResult sweep = alpha_sweep(trained.params, bundle, split,
                                          alpha_grid_0_4(), Metric::sqeuclid);

    const GzslReport& at_zero = sweep.points.front().report;
    require(at_zero.u && at_zero.s, "validation split produced no rates");
    require(*at_zero.s - *at_zero.u >= 0.15,
            fmt("setup out of regime: s-u gap %.3f < 0.15 at alpha=0",
                *at_zero.s - *at_zero.u));

    const double h0 = at_zero.h.value_or(0.0);
    const double h_best = sweep.points[sweep.best_index].report.h.value_or(0.0);
    const double h_top = sweep.points.back().report.h.value_or(0.0);
    require(h_best >= h0 + 0.03,
            fmt("H(alpha*)=%.4f < H(0)+0.03=%.4f", h_best, h0 + 0.03));
    require(h_top < h_best,
            fmt("H(4)=%.4f did not fall below H(alpha*)=%.4f", h_top, h_best));
    return fmt("H(0)=%.4f H(%.2f)=%.4f H(4)=%.4f", h0, sweep.best_value, h_best,
               h_top);
  });

  criterion("ablation direction (kappa=1 and lambda=0 lose by >= 0.02 over 3 seeds)",
            [] {
    auto [bundle, split] = synth_generate(acceptance_synth());
    MixingSweepConfig mix;
    mix.base = acceptance_train();
    mix.alpha_grid = alpha_grid_0_4();
    mix.repeats = 3;

    const std::vector<double> kappa_grid = {0.5, 1.0};
    const SweepResult kappa_sweep =
        mixing_sweep(bundle, split, MixParam::kappa, kappa_grid, mix);
    const double h_k_half = kappa_sweep.points[0].report.h.value_or(0.0);
    const double h_k_one = kappa_sweep.points[1].report.h.value_or(0.0);
    require(h_k_one < h_k_half - 0.02,
            fmt("H(kappa=1)=%.4f not below H(kappa=0.5)-0.02=%.4f", h_k_one,
                h_k_half - 0.02));

    const std::vector<double> lambda_grid = {0.0, 0.5};
    const SweepResult lambda_sweep =
        mixing_sweep(bundle, split, MixParam::lambda, lambda_grid, mix);
    const double h_l_zero = lambda_sweep.points[0].report.h.value_or(0.0);
    const double h_l_half = lambda_sweep.points[1].report.h.value_or(0.0);
    require(h_l_zero < h_l_half - 0.02,
            fmt("H(lambda=0)=%.4f not below H(lambda=0.5)-0.02=%.4f", h_l_zero,
                h_l_half - 0.02));
    return fmt("kappa: %.4f vs %.4f; lambda: %.4f vs %.4f", h_k_half, h_k_one,
               h_l_half, h_l_zero);
  });

  criterion("CLI determinism (byte-identical bundle, checkpoint, reports)", [] {
    testutil::TempDir dir;
    const auto log = dir.file("cli.log");
    for (const std::string tag : {"one", "two"}) {
      const auto sub = dir.file(tag);
      std::filesystem::create_directories(sub);
      const std::string bundle = (sub / "b.cmf").string();
      const std::string split = (sub / "s.json").string();
      const std::string ckpt = (sub / "m.cmp").string();
      require(run_cli("synth --seen 6 --unseen 3 --per-class 20 --dv 16 --dt 12 "
                      "--latent 4 --sigma 0.6 --seed 11 --bundle " +
                          bundle + " --split " + split,
                      log) == 0,
              "synth failed");
      require(run_cli("train --bundle " + bundle + " --split " + split +
                          " --checkpoint " + ckpt + " --log " +
                          (sub / "loss.csv").string() +
                          " --steps 200 --embed-dim 12 --batch-size 10 "
                          "--lr-decay-every 100 --seed 3",
                      log) == 0,
              "train failed");
      require(run_cli("calibrate --bundle " + bundle + " --split " + split +
                          " --checkpoint " + ckpt + " --grid 0:2:0.1 --out-csv " +
                          (sub / "cal.csv").string() + " --out-json " +
                          (sub / "cal.json").string(),
                      log) == 0,
              "calibrate failed");
      require(run_cli("eval --bundle " + bundle + " --split " + split +
                          " --checkpoint " + ckpt + " --alpha 0.6 --out-json " +
                          (sub / "r.json").string() + " --out-csv " +
                          (sub / "r.csv").string(),
                      log) == 0,
              "eval failed");
    }
    for (const std::string name : {"b.cmf", "s.json", "m.cmp", "loss.csv",
                                   "cal.csv", "cal.json", "r.json", "r.csv"}) {
      require(testutil::read_file_bytes(dir.file("one") / name) ==
                  testutil::read_file_bytes(dir.file("two") / name),
              "file differs between reruns: " + name);
    }
    return std::string("8 artifact files byte-identical");
  });

  criterion("split arithmetic (5875 at 0.2 -> 4700/1175, exact)", [] {
    DatasetBundle bundle;
    bundle.num_classes = 101;
    bundle.dv = 1;
    bundle.dt = 1;
    bundle.t = 1;
    std::vector<std::uint32_t> seen;
    for (std::uint32_t c = 0; c < 100; ++c) {
      seen.push_back(c);
      const std::size_t size = c < 75 ? 59 : 58;  // totals 5875
      for (std::size_t k = 0; k < size; ++k)
        bundle.instances.push_back({{0.0f}, {0.0f}, c});
    }
    for (int k = 0; k < 7; ++k) bundle.instances.push_back({{0.0f}, {0.0f}, 100});
    const std::vector<std::uint32_t> unseen_val = {100};

    const SplitSpec split = build_validation_split(bundle, seen, unseen_val, 0.2, 0);
    require(split.train_ids.size() == 4700,
            fmt("train size %zu != 4700", split.train_ids.size()));
    require(split.val_seen_ids.size() == 1175,
            fmt("val_seen size %zu != 1175", split.val_seen_ids.size()));
    return std::string("4700 + 1175 = 5875");
  });

  if (g_failures > 0) {
    std::printf("acceptance: %d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("acceptance: all criteria passed\n");
  return 0;
}
