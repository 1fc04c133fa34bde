#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmzsl/embedding_model.hpp"
#include "cmzsl/feature_store.hpp"
#include "cmzsl/losses.hpp"

namespace cmzsl {

struct TrainConfig {
  std::uint32_t batch_size = 16;
  std::uint32_t steps = 3000;
  double lr = 0.05;
  double lr_decay_factor = 0.1;
  std::uint32_t lr_decay_every = 1500;
  double lambda = 0.5;
  double kappa = 0.5;
  Metric metric = Metric::sqeuclid;
  std::uint32_t embed_dim = 64;
  std::uint64_t seed = 0;

  void validate() const;  // ArgumentError
};

/// A batch before embedding: image features and mean-pooled text features
/// in double, labels already remapped to train-head indices [0, C).
struct RawBatch {
  Matrix x;                           // B x Dv
  Matrix s;                           // B x Dt (pooled over the T descriptions)
  std::vector<std::uint32_t> labels;  // B
  std::vector<std::uint32_t> indices; // bundle instance ids

  std::size_t size() const { return x.rows; }
};

/// Gradient of the composite loss, one array per parameter block.
struct GradientSet {
  Matrix wv;
  Vector bv;
  Matrix wt;
  Vector bt;
  Matrix wi;
  Vector bi;
  Matrix wc;
  Vector bc;

  static GradientSet zeros_like(const ModelParams& params);
};

/// Builds a RawBatch for the given instance ids; head_of_label maps a
/// bundle class id to its train-head index (negative = not a train class).
RawBatch make_raw_batch(const DatasetBundle& bundle,
                        std::span<const std::uint32_t> ids,
                        std::span<const std::int32_t> head_of_label);

/// Embeds a RawBatch so the losses module can be driven independently of
/// the gradient path.
Batch embed_batch(const RawBatch& raw, const ModelParams& params);

/// Analytic gradients of the composite loss with respect to every
/// parameter block, derived by hand through the distance softmaxes, the
/// classifier softmaxes and the linear heads.
std::pair<BatchLossReport, GradientSet> backward(const RawBatch& raw,
                                                 const ModelParams& params,
                                                 double lambda, double kappa,
                                                 Metric metric);

/// p <- p - lr * g, elementwise.
void sgd_step(ModelParams& params, const GradientSet& grads, double lr);

struct StepLog {
  std::uint32_t step = 0;
  double lr = 0.0;
  BatchLossReport report;
};

struct TrainResult {
  ModelParams params;
  std::vector<StepLog> log;
  std::vector<std::uint32_t> head_classes;  // sorted seen classes; position = head index
};

/// Mini-batch SGD over the train split. Deterministic given config.seed:
/// each step draws its batch uniformly without replacement from a
/// step-indexed substream.
TrainResult train(const DatasetBundle& bundle, const SplitSpec& split,
                  const TrainConfig& config);

void write_training_log_csv(const std::vector<StepLog>& log,
                            const std::filesystem::path& path);

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckResult {
  std::vector<GradCheckBlock> blocks;
  double worst = 0.0;
};

/// Central-difference verification of backward(). `perturb` is a test
/// hook that offsets every analytic gradient entry so the check must fail.
GradCheckResult gradient_check(const RawBatch& raw, const ModelParams& params,
                               double lambda, double kappa, Metric metric,
                               double h = 1e-4, double perturb = 0.0);

}  // namespace cmzsl
