#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cmzsl/embedding_model.hpp"
#include "cmzsl/linalg.hpp"

namespace cmzsl {

/// One mini-batch after embedding: matched image/text pairs plus labels
/// already remapped into [0, C) of the train-class head.
struct Batch {
  std::vector<std::uint32_t> indices;  // bundle instance ids (informational)
  Matrix z_v;                          // B x Dz image embeddings
  Matrix z_t;                          // B x Dz text embeddings
  std::vector<std::uint32_t> labels;   // B, head indices

  std::size_t size() const { return z_v.rows; }
};

struct BatchLossReport {
  double j_tr = 0.0;
  double j_ir = 0.0;
  double j_tc = 0.0;
  double j_ic = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  double kappa = 0.0;
};

/// Softmax-over-negative-distances probability that z_t is the text of
/// z_v among the candidates. The true match must be in the candidate set.
double retrieval_probability(std::span<const double> z_v, std::span<const double> z_t,
                             const std::vector<Vector>& candidates, Metric metric);

/// (1/B) sum_i [ d(z_v_i, z_t_i) + log sum_j exp(-d(z_v_i, z_t_j)) ]
double text_retrieval_loss(const Batch& batch, Metric metric);

/// Same with the normalizing sum running over images for each text.
double image_retrieval_loss(const Batch& batch, Metric metric);

/// Mean cross-entropy of softmax(W z + b) against the labels.
double classification_loss(const Matrix& embeddings,
                           std::span<const std::uint32_t> labels, const Matrix& w,
                           const Vector& b);

/// total = (1-kappa) * (lambda*j_tr + (1-lambda)*j_ir) + (kappa/2) * (j_tc + j_ic)
BatchLossReport composite_loss(const Batch& batch, const ModelParams& params,
                               double lambda, double kappa, Metric metric);

/// Numerically guarded log sum_i exp(x_i) with running-max subtraction.
double log_sum_exp(std::span<const double> x);

}  // namespace cmzsl
