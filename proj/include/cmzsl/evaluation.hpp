#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmzsl/feature_store.hpp"
#include "cmzsl/gzsl.hpp"
#include "cmzsl/trainer.hpp"

namespace cmzsl {

enum class Averaging { per_class, per_sample };

struct GzslReport {
  std::optional<double> u;  // unseen top-1 accuracy
  std::optional<double> s;  // seen top-1 accuracy
  std::optional<double> h;  // harmonic mean, present when u and s are
  std::optional<double> p_unseen_as_seen;
  std::optional<double> p_seen_as_unseen;
  std::map<std::uint32_t, double> per_class;
};

/// 2us/(u+s); 0 when u+s == 0.
double harmonic_mean(double u, double s);

/// Conditional block-confusion rates; a rate is absent when its
/// subpopulation is empty rather than reported as 0.
std::pair<std::optional<double>, std::optional<double>> confusion_rates(
    std::span<const std::uint32_t> predictions,
    std::span<const std::uint32_t> true_labels,
    const std::set<std::uint32_t>& seen_classes);

/// Embeds the evaluation images once, then reports at any alpha. Used by
/// evaluate() and the sweeps.
class SplitEvaluator {
 public:
  SplitEvaluator(const ModelParams& params, const DatasetBundle& bundle,
                 std::span<const std::uint32_t> seen_ids,
                 std::span<const std::uint32_t> unseen_ids,
                 const PrototypeTable& table, Averaging averaging);

  GzslReport at(double alpha) const;

 private:
  const PrototypeTable& table_;
  Averaging averaging_;
  std::vector<Embedding> embeddings_;
  std::vector<std::uint32_t> labels_;
  std::size_t num_seen_samples_ = 0;  // first block of embeddings_
  std::set<std::uint32_t> seen_class_set_;
};

GzslReport evaluate(const ModelParams& params, const DatasetBundle& bundle,
                    std::span<const std::uint32_t> seen_ids,
                    std::span<const std::uint32_t> unseen_ids,
                    const PrototypeTable& table, double alpha,
                    Averaging averaging = Averaging::per_class);

/// Prototype table for all classes of the split (or just the unseen ones),
/// built from every instance in the bundle.
PrototypeTable build_split_table(const ModelParams& params, const DatasetBundle& bundle,
                                 const SplitSpec& split, bool unseen_only,
                                 Metric metric);

struct SweepPoint {
  double value = 0.0;
  GzslReport report;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::size_t best_index = 0;
  double best_value = 0.0;
};

/// Evaluates val_seen + val_unseen at every alpha in the (ascending) grid.
/// Ties on H go to the smallest alpha. The per-point p_unseen_as_seen is
/// checked to be non-increasing, which the rescaling guarantees per sample.
SweepResult alpha_sweep(const ModelParams& params, const DatasetBundle& bundle,
                        const SplitSpec& split, std::span<const double> grid,
                        Metric metric, Averaging averaging = Averaging::per_class);

enum class MixParam { lambda, kappa };

struct MixingSweepConfig {
  TrainConfig base;
  std::vector<double> alpha_grid;  // calibration grid, per repeat
  std::uint32_t repeats = 10;      // seeds 0..repeats-1
  Averaging averaging = Averaging::per_class;
};

/// Trains one model per grid point and repeat seed, calibrates alpha on
/// the validation lists, evaluates the test lists, and aggregates the mean
/// and a normal-approximation 95% interval of H over repeats.
SweepResult mixing_sweep(const DatasetBundle& bundle, const SplitSpec& split,
                         MixParam param, std::span<const double> grid,
                         const MixingSweepConfig& config);

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path);
void write_report_csv(const GzslReport& report, double alpha,
                      const std::filesystem::path& path);
void write_report_json(const GzslReport& report, double alpha,
                       const std::filesystem::path& path);

}  // namespace cmzsl
