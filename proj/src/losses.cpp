#include "cmzsl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cmzsl/errors.hpp"

namespace cmzsl {

namespace {

void check_batch(const Batch& batch) {
  if (batch.size() == 0) throw ArgumentError("empty batch");
  if (batch.z_t.rows != batch.z_v.rows || batch.z_t.cols != batch.z_v.cols)
    throw ShapeError("batch embedding shapes disagree");
  if (!all_finite(batch.z_v.data) || !all_finite(batch.z_t.data))
    throw NumericsError("non-finite embedding in batch");
}

/// Full B x B cross-modal distance matrix, d(i,j) = d(z_v_i, z_t_j).
Matrix cross_distances(const Batch& batch, Metric metric) {
  const std::size_t b = batch.size();
  Matrix d(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      d(i, j) = distance(batch.z_v.row(i), batch.z_t.row(j), metric);
  return d;
}

}  // namespace

double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - m);
  return m + std::log(acc);
}

double retrieval_probability(std::span<const double> z_v, std::span<const double> z_t,
                             const std::vector<Vector>& candidates, Metric metric) {
  if (candidates.empty()) throw ArgumentError("retrieval_probability: no candidates");
  Vector neg(candidates.size());
  for (std::size_t j = 0; j < candidates.size(); ++j)
    neg[j] = -distance(z_v, candidates[j], metric);
  const double target = -distance(z_v, z_t, metric);
  return std::exp(target - log_sum_exp(neg));
}

double text_retrieval_loss(const Batch& batch, Metric metric) {
  check_batch(batch);
  const std::size_t b = batch.size();
  const Matrix d = cross_distances(batch, metric);
  Vector neg(b);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) neg[j] = -d(i, j);
    loss += d(i, i) + log_sum_exp(neg);
  }
  loss /= static_cast<double>(b);
  if (!std::isfinite(loss)) throw NumericsError("text retrieval loss is non-finite");
  return loss;
}

double image_retrieval_loss(const Batch& batch, Metric metric) {
  check_batch(batch);
  const std::size_t b = batch.size();
  const Matrix d = cross_distances(batch, metric);
  Vector neg(b);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    // Normalizer runs over images for text i: d(z_t_i, z_v_j) = d(j, i).
    for (std::size_t j = 0; j < b; ++j) neg[j] = -d(j, i);
    loss += d(i, i) + log_sum_exp(neg);
  }
  loss /= static_cast<double>(b);
  if (!std::isfinite(loss)) throw NumericsError("image retrieval loss is non-finite");
  return loss;
}

double classification_loss(const Matrix& embeddings,
                           std::span<const std::uint32_t> labels, const Matrix& w,
                           const Vector& b) {
  if (embeddings.rows != labels.size())
    throw ShapeError("classification_loss: labels/embeddings size mismatch");
  if (embeddings.rows == 0) throw ArgumentError("classification_loss: empty batch");
  const std::size_t c = w.rows;
  double loss = 0.0;
  for (std::size_t i = 0; i < embeddings.rows; ++i) {
    if (labels[i] >= c)
      throw ArgumentError("classification_loss: label " + std::to_string(labels[i]) +
                          " >= C");
    const Vector logits = affine(w, embeddings.row(i), b);
    loss += log_sum_exp(logits) - logits[labels[i]];
  }
  loss /= static_cast<double>(embeddings.rows);
  if (!std::isfinite(loss)) throw NumericsError("classification loss is non-finite");
  return loss;
}

BatchLossReport composite_loss(const Batch& batch, const ModelParams& params,
                               double lambda, double kappa, Metric metric) {
  if (lambda < 0.0 || lambda > 1.0 || kappa < 0.0 || kappa > 1.0)
    throw ArgumentError("lambda and kappa must lie in [0,1]");
  BatchLossReport report;
  report.lambda = lambda;
  report.kappa = kappa;
  report.j_tr = text_retrieval_loss(batch, metric);
  report.j_ir = image_retrieval_loss(batch, metric);
  report.j_tc = classification_loss(batch.z_t, batch.labels, params.wc, params.bc);
  report.j_ic = classification_loss(batch.z_v, batch.labels, params.wi, params.bi);
  report.total = (1.0 - kappa) * (lambda * report.j_tr + (1.0 - lambda) * report.j_ir) +
                 0.5 * kappa * (report.j_tc + report.j_ic);
  return report;
}

}  // namespace cmzsl
