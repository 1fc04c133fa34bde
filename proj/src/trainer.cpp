#include "cmzsl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "cmzsl/errors.hpp"
#include "cmzsl/rng.hpp"

namespace cmzsl {

namespace {

/// Row softmax probabilities of logits, max-subtracted.
Vector softmax(const Vector& logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  Vector p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

struct ParamView {
  const char* name;
  std::span<double> value;
  std::span<double> grad;
};

std::vector<ParamView> views(ModelParams& p, GradientSet& g) {
  return {
      {"Wv", p.wv.data, g.wv.data}, {"bv", p.bv, g.bv},
      {"Wt", p.wt.data, g.wt.data}, {"bt", p.bt, g.bt},
      {"Wi", p.wi.data, g.wi.data}, {"bi", p.bi, g.bi},
      {"Wc", p.wc.data, g.wc.data}, {"bc", p.bc, g.bc},
  };
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (lr <= 0.0) throw ArgumentError("lr must be positive");
  if (lr_decay_factor <= 0.0) throw ArgumentError("lr_decay_factor must be positive");
  if (lambda < 0.0 || lambda > 1.0 || kappa < 0.0 || kappa > 1.0)
    throw ArgumentError("lambda and kappa must lie in [0,1]");
  if (embed_dim < 1) throw ArgumentError("embed_dim must be >= 1");
}

GradientSet GradientSet::zeros_like(const ModelParams& p) {
  GradientSet g;
  g.wv = Matrix(p.wv.rows, p.wv.cols);
  g.wt = Matrix(p.wt.rows, p.wt.cols);
  g.wi = Matrix(p.wi.rows, p.wi.cols);
  g.wc = Matrix(p.wc.rows, p.wc.cols);
  g.bv.assign(p.bv.size(), 0.0);
  g.bt.assign(p.bt.size(), 0.0);
  g.bi.assign(p.bi.size(), 0.0);
  g.bc.assign(p.bc.size(), 0.0);
  return g;
}

RawBatch make_raw_batch(const DatasetBundle& bundle,
                        std::span<const std::uint32_t> ids,
                        std::span<const std::int32_t> head_of_label) {
  RawBatch raw;
  raw.x = Matrix(ids.size(), bundle.dv);
  raw.s = Matrix(ids.size(), bundle.dt);
  raw.labels.resize(ids.size());
  raw.indices.assign(ids.begin(), ids.end());
  const double inv_t = 1.0 / static_cast<double>(bundle.t);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::uint32_t id = ids[r];
    if (id >= bundle.size()) throw ArgumentError("batch index out of range");
    const auto& inst = bundle.instances[id];
    for (std::uint32_t d = 0; d < bundle.dv; ++d)
      raw.x(r, d) = static_cast<double>(inst.image_features[d]);
    for (std::uint32_t k = 0; k < bundle.t; ++k)
      for (std::uint32_t d = 0; d < bundle.dt; ++d)
        raw.s(r, d) += inv_t * static_cast<double>(
                                   inst.text_features[static_cast<std::size_t>(k) *
                                                          bundle.dt +
                                                      d]);
    const std::uint32_t label = inst.label;
    if (label >= head_of_label.size() || head_of_label[label] < 0)
      throw ArgumentError("instance " + std::to_string(id) +
                          " has a label outside the train classes");
    raw.labels[r] = static_cast<std::uint32_t>(head_of_label[label]);
  }
  return raw;
}

Batch embed_batch(const RawBatch& raw, const ModelParams& params) {
  Batch batch;
  batch.indices = raw.indices;
  batch.labels = raw.labels;
  const std::size_t b = raw.size();
  batch.z_v = Matrix(b, params.dz());
  batch.z_t = Matrix(b, params.dz());
  for (std::size_t i = 0; i < b; ++i) {
    const Vector zv = affine(params.wv, raw.x.row(i), params.bv);
    const Vector zt = affine(params.wt, raw.s.row(i), params.bt);
    std::copy(zv.begin(), zv.end(), batch.z_v.row(i).begin());
    std::copy(zt.begin(), zt.end(), batch.z_t.row(i).begin());
  }
  return batch;
}

std::pair<BatchLossReport, GradientSet> backward(const RawBatch& raw,
                                                 const ModelParams& params,
                                                 double lambda, double kappa,
                                                 Metric metric) {
  if (lambda < 0.0 || lambda > 1.0 || kappa < 0.0 || kappa > 1.0)
    throw ArgumentError("lambda and kappa must lie in [0,1]");
  const std::size_t b = raw.size();
  if (b == 0) throw ArgumentError("empty batch");
  const std::size_t dz = params.dz();
  const std::size_t c = params.num_train_classes();
  const double inv_b = 1.0 / static_cast<double>(b);
  const double w_tr = (1.0 - kappa) * lambda;
  const double w_ir = (1.0 - kappa) * (1.0 - lambda);
  const double w_cl = 0.5 * kappa;

  // Forward: embeddings and the B x B cross-modal distance matrix.
  Matrix a(b, dz), t(b, dz);
  for (std::size_t i = 0; i < b; ++i) {
    const Vector zv = affine(params.wv, raw.x.row(i), params.bv);
    const Vector zt = affine(params.wt, raw.s.row(i), params.bt);
    std::copy(zv.begin(), zv.end(), a.row(i).begin());
    std::copy(zt.begin(), zt.end(), t.row(i).begin());
  }
  if (!all_finite(a.data) || !all_finite(t.data))
    throw NumericsError("non-finite embedding in backward");

  Matrix d(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      d(i, j) = distance(a.row(i), t.row(j), metric);
  if (!all_finite(d.data)) throw NumericsError("non-finite distance in backward");

  Vector row_lse(b), col_lse(b), tmp(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) tmp[j] = -d(i, j);
    row_lse[i] = log_sum_exp(tmp);
  }
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t i = 0; i < b; ++i) tmp[i] = -d(i, j);
    col_lse[j] = log_sum_exp(tmp);
  }

  BatchLossReport report;
  report.lambda = lambda;
  report.kappa = kappa;
  for (std::size_t i = 0; i < b; ++i) {
    report.j_tr += inv_b * (d(i, i) + row_lse[i]);
    report.j_ir += inv_b * (d(i, i) + col_lse[i]);
  }

  // dJ/dD. P is the row softmax of -D (text retrieval), R the column
  // softmax (image retrieval); the diagonal carries the matched-pair term.
  Matrix g_d(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double p_ij = std::exp(-d(i, j) - row_lse[i]);
      const double r_ij = std::exp(-d(i, j) - col_lse[j]);
      const double diag = (i == j) ? 1.0 : 0.0;
      g_d(i, j) = inv_b * (w_tr * (diag - p_ij) + w_ir * (diag - r_ij));
    }
  }

  // dJ/dD through the metric into embedding gradients.
  Matrix g_a(b, dz), g_t(b, dz);
  if (metric == Metric::sqeuclid) {
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        const double g = g_d(i, j);
        if (g == 0.0) continue;
        auto ai = a.row(i);
        auto tj = t.row(j);
        auto gai = g_a.row(i);
        auto gtj = g_t.row(j);
        for (std::size_t k = 0; k < dz; ++k) {
          const double diff2 = 2.0 * (ai[k] - tj[k]);
          gai[k] += g * diff2;
          gtj[k] -= g * diff2;
        }
      }
    }
  } else {
    Vector norm_a(b), norm_t(b);
    for (std::size_t i = 0; i < b; ++i) norm_a[i] = std::sqrt(sqnorm(a.row(i)));
    for (std::size_t j = 0; j < b; ++j) norm_t[j] = std::sqrt(sqnorm(t.row(j)));
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        const double g = g_d(i, j);
        if (g == 0.0) continue;
        const double cos_ij = 1.0 - d(i, j);
        const double inv_cross = 1.0 / (norm_a[i] * norm_t[j]);
        auto ai = a.row(i);
        auto tj = t.row(j);
        auto gai = g_a.row(i);
        auto gtj = g_t.row(j);
        for (std::size_t k = 0; k < dz; ++k) {
          gai[k] += g * (cos_ij * ai[k] / (norm_a[i] * norm_a[i]) - tj[k] * inv_cross);
          gtj[k] += g * (cos_ij * tj[k] / (norm_t[j] * norm_t[j]) - ai[k] * inv_cross);
        }
      }
    }
  }

  GradientSet grads = GradientSet::zeros_like(params);

  // Classifier heads: softmax cross-entropy on each modality.
  for (std::size_t i = 0; i < b; ++i) {
    const std::uint32_t y = raw.labels[i];
    if (y >= c) throw ArgumentError("label >= C in backward");

    const Vector logits_i = affine(params.wi, a.row(i), params.bi);
    report.j_ic += inv_b * (log_sum_exp(logits_i) - logits_i[y]);
    const Vector logits_t = affine(params.wc, t.row(i), params.bc);
    report.j_tc += inv_b * (log_sum_exp(logits_t) - logits_t[y]);

    if (w_cl > 0.0) {
      Vector gl_i = softmax(logits_i);
      gl_i[y] -= 1.0;
      for (double& v : gl_i) v *= w_cl * inv_b;
      add_outer(grads.wi, gl_i, a.row(i));
      axpy(1.0, gl_i, grads.bi);
      axpy(1.0, matvec_t(params.wi, gl_i), g_a.row(i));

      Vector gl_t = softmax(logits_t);
      gl_t[y] -= 1.0;
      for (double& v : gl_t) v *= w_cl * inv_b;
      add_outer(grads.wc, gl_t, t.row(i));
      axpy(1.0, gl_t, grads.bc);
      axpy(1.0, matvec_t(params.wc, gl_t), g_t.row(i));
    }
  }

  report.total = w_tr * report.j_tr + w_ir * report.j_ir +
                 w_cl * (report.j_tc + report.j_ic);

  // Projection heads.
  for (std::size_t i = 0; i < b; ++i) {
    add_outer(grads.wv, g_a.row(i), raw.x.row(i));
    axpy(1.0, g_a.row(i), grads.bv);
    add_outer(grads.wt, g_t.row(i), raw.s.row(i));
    axpy(1.0, g_t.row(i), grads.bt);
  }

  for (const auto* block :
       {&grads.wv.data, &grads.wt.data, &grads.wi.data, &grads.wc.data, &grads.bv,
        &grads.bt, &grads.bi, &grads.bc})
    if (!all_finite(*block)) throw NumericsError("non-finite gradient");

  return {report, std::move(grads)};
}

void sgd_step(ModelParams& params, const GradientSet& grads, double lr) {
  auto apply = [lr](std::span<double> p, std::span<const double> g) {
    if (p.size() != g.size()) throw ShapeError("sgd_step: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  };
  apply(params.wv.data, grads.wv.data);
  apply(params.bv, grads.bv);
  apply(params.wt.data, grads.wt.data);
  apply(params.bt, grads.bt);
  apply(params.wi.data, grads.wi.data);
  apply(params.bi, grads.bi);
  apply(params.wc.data, grads.wc.data);
  apply(params.bc, grads.bc);
}

TrainResult train(const DatasetBundle& bundle, const SplitSpec& split,
                  const TrainConfig& config) {
  config.validate();
  split.validate(bundle);
  if (split.train_ids.empty()) throw ArgumentError("train split is empty");
  if (config.batch_size > split.train_ids.size())
    throw ArgumentError("batch_size exceeds train split size");

  TrainResult result;
  result.head_classes = split.seen_classes;
  std::sort(result.head_classes.begin(), result.head_classes.end());
  std::vector<std::int32_t> head_of_label(bundle.num_classes, -1);
  for (std::size_t h = 0; h < result.head_classes.size(); ++h)
    head_of_label[result.head_classes[h]] = static_cast<std::int32_t>(h);

  result.params = init_params(bundle.dv, bundle.dt, config.embed_dim,
                              result.head_classes.size(), config.seed);
  result.log.reserve(config.steps);

  double lr = config.lr;
  std::vector<std::uint32_t> pool(split.train_ids);
  for (std::uint32_t step = 0; step < config.steps; ++step) {
    if (step > 0 && config.lr_decay_every > 0 && step % config.lr_decay_every == 0)
      lr *= config.lr_decay_factor;

    // Uniform without replacement, reshuffled fresh each step.
    SplitMix64 rng = substream(config.seed, step);
    for (std::size_t i = 0; i < config.batch_size; ++i) {
      const std::size_t j = i + rng.next_below(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    const RawBatch raw = make_raw_batch(
        bundle, std::span(pool.data(), config.batch_size), head_of_label);

    auto [report, grads] =
        backward(raw, result.params, config.lambda, config.kappa, config.metric);
    sgd_step(result.params, grads, lr);
    result.log.push_back({step, lr, report});
  }
  return result;
}

void write_training_log_csv(const std::vector<StepLog>& log,
                            const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "step,lr,j_tr,j_ir,j_tc,j_ic,total\n";
  char buf[160];
  for (const auto& entry : log) {
    std::snprintf(buf, sizeof(buf), "%u,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", entry.step,
                  entry.lr, entry.report.j_tr, entry.report.j_ir, entry.report.j_tc,
                  entry.report.j_ic, entry.report.total);
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path.string());
}

GradCheckResult gradient_check(const RawBatch& raw, const ModelParams& params,
                               double lambda, double kappa, Metric metric, double h,
                               double perturb) {
  ModelParams work = params;
  auto [report, grads] = backward(raw, work, lambda, kappa, metric);
  (void)report;

  auto loss_at = [&](ModelParams& p) {
    return backward(raw, p, lambda, kappa, metric).first.total;
  };

  GradCheckResult result;
  auto vs = views(work, grads);
  for (auto& v : vs) {
    GradCheckBlock block{v.name, 0.0};
    for (std::size_t i = 0; i < v.value.size(); ++i) {
      const double saved = v.value[i];
      v.value[i] = saved + h;
      const double up = loss_at(work);
      v.value[i] = saved - h;
      const double down = loss_at(work);
      v.value[i] = saved;

      const double fd = (up - down) / (2.0 * h);
      const double analytic = v.grad[i] + perturb;
      const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
      block.max_rel_err = std::max(block.max_rel_err, std::abs(fd - analytic) / denom);
    }
    result.worst = std::max(result.worst, block.max_rel_err);
    result.blocks.push_back(std::move(block));
  }
  return result;
}

}  // namespace cmzsl
