#include "cmzsl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "cmzsl/errors.hpp"
#include "cmzsl/parallel.hpp"

namespace cmzsl {

namespace {

std::string fmt9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt9(*v) : std::string("na");
}

}  // namespace

double harmonic_mean(double u, double s) {
  const double sum = u + s;
  if (sum == 0.0) return 0.0;
  return 2.0 * u * s / sum;
}

std::pair<std::optional<double>, std::optional<double>> confusion_rates(
    std::span<const std::uint32_t> predictions,
    std::span<const std::uint32_t> true_labels,
    const std::set<std::uint32_t>& seen_classes) {
  if (predictions.size() != true_labels.size())
    throw ArgumentError("confusion_rates: prediction/label size mismatch");
  std::size_t n_unseen = 0, unseen_as_seen = 0;
  std::size_t n_seen = 0, seen_as_unseen = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool true_seen = seen_classes.count(true_labels[i]) > 0;
    const bool pred_seen = seen_classes.count(predictions[i]) > 0;
    if (true_seen) {
      ++n_seen;
      if (!pred_seen) ++seen_as_unseen;
    } else {
      ++n_unseen;
      if (pred_seen) ++unseen_as_seen;
    }
  }
  std::optional<double> p_unseen_as_seen, p_seen_as_unseen;
  if (n_unseen > 0)
    p_unseen_as_seen = static_cast<double>(unseen_as_seen) / static_cast<double>(n_unseen);
  if (n_seen > 0)
    p_seen_as_unseen = static_cast<double>(seen_as_unseen) / static_cast<double>(n_seen);
  return {p_unseen_as_seen, p_seen_as_unseen};
}

SplitEvaluator::SplitEvaluator(const ModelParams& params, const DatasetBundle& bundle,
                               std::span<const std::uint32_t> seen_ids,
                               std::span<const std::uint32_t> unseen_ids,
                               const PrototypeTable& table, Averaging averaging)
    : table_(table), averaging_(averaging), num_seen_samples_(seen_ids.size()) {
  for (const auto& e : table.entries)
    if (e.seen) seen_class_set_.insert(e.class_id);

  auto add = [&](std::span<const std::uint32_t> ids) {
    for (std::uint32_t id : ids) {
      if (id >= bundle.size()) throw ArgumentError("evaluate: instance id out of range");
      const auto& inst = bundle.instances[id];
      if (table.find(inst.label) == nullptr)
        throw ArgumentError("evaluate: no prototype for class " +
                            std::to_string(inst.label));
      embeddings_.push_back(
          embed_image(params, std::span<const float>(inst.image_features)));
      labels_.push_back(inst.label);
    }
  };
  add(seen_ids);
  add(unseen_ids);
}

GzslReport SplitEvaluator::at(double alpha) const {
  GzslReport report;
  std::vector<std::uint32_t> predictions(embeddings_.size());
  for (std::size_t i = 0; i < embeddings_.size(); ++i)
    predictions[i] = classify(embeddings_[i], table_, alpha);

  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& [correct, total] = tally[labels_[i]];
    ++total;
    if (predictions[i] == labels_[i]) ++correct;
  }
  for (const auto& [class_id, counts] : tally)
    report.per_class[class_id] =
        static_cast<double>(counts.first) / static_cast<double>(counts.second);

  auto block_accuracy = [&](std::size_t begin,
                            std::size_t end) -> std::optional<double> {
    if (begin == end) return std::nullopt;
    if (averaging_ == Averaging::per_sample) {
      std::size_t correct = 0;
      for (std::size_t i = begin; i < end; ++i)
        if (predictions[i] == labels_[i]) ++correct;
      return static_cast<double>(correct) / static_cast<double>(end - begin);
    }
    std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> block;
    for (std::size_t i = begin; i < end; ++i) {
      auto& [correct, total] = block[labels_[i]];
      ++total;
      if (predictions[i] == labels_[i]) ++correct;
    }
    double acc = 0.0;
    for (const auto& [class_id, counts] : block)
      acc += static_cast<double>(counts.first) / static_cast<double>(counts.second);
    return acc / static_cast<double>(block.size());
  };

  report.s = block_accuracy(0, num_seen_samples_);
  report.u = block_accuracy(num_seen_samples_, embeddings_.size());
  if (report.u && report.s) report.h = harmonic_mean(*report.u, *report.s);
  auto [p_us, p_su] = confusion_rates(predictions, labels_, seen_class_set_);
  report.p_unseen_as_seen = p_us;
  report.p_seen_as_unseen = p_su;
  return report;
}

GzslReport evaluate(const ModelParams& params, const DatasetBundle& bundle,
                    std::span<const std::uint32_t> seen_ids,
                    std::span<const std::uint32_t> unseen_ids,
                    const PrototypeTable& table, double alpha, Averaging averaging) {
  return SplitEvaluator(params, bundle, seen_ids, unseen_ids, table, averaging)
      .at(alpha);
}

PrototypeTable build_split_table(const ModelParams& params, const DatasetBundle& bundle,
                                 const SplitSpec& split, bool unseen_only,
                                 Metric metric) {
  std::vector<std::uint32_t> class_ids;
  std::vector<bool> flags;
  if (!unseen_only) {
    for (std::uint32_t c : split.seen_classes) {
      class_ids.push_back(c);
      flags.push_back(true);
    }
  }
  for (std::uint32_t c : split.unseen_classes) {
    class_ids.push_back(c);
    flags.push_back(false);
  }
  std::vector<std::uint32_t> all_ids(bundle.size());
  for (std::uint32_t i = 0; i < bundle.size(); ++i) all_ids[i] = i;
  return compute_prototypes(params, bundle, all_ids, class_ids, flags, metric);
}

SweepResult alpha_sweep(const ModelParams& params, const DatasetBundle& bundle,
                        const SplitSpec& split, std::span<const double> grid,
                        Metric metric, Averaging averaging) {
  if (grid.empty()) throw ArgumentError("alpha_sweep: empty grid");
  for (double alpha : grid)
    if (alpha < 0.0) throw ArgumentError("alpha_sweep: alpha must be >= 0");
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());

  const PrototypeTable table = build_split_table(params, bundle, split, false, metric);
  SplitEvaluator evaluator(params, bundle, split.val_seen_ids, split.val_unseen_ids,
                           table, averaging);

  SweepResult result;
  result.points.resize(sorted.size());
  parallel_for(sorted.size(), [&](std::size_t i) {
    SweepPoint point;
    point.value = sorted[i];
    point.report = evaluator.at(sorted[i]);
    const double h = point.report.h.value_or(0.0);
    point.ci_low = h;
    point.ci_high = h;
    result.points[i] = std::move(point);
  });

  for (std::size_t i = 0; i + 1 < result.points.size(); ++i) {
    const auto& lo = result.points[i].report.p_unseen_as_seen;
    const auto& hi = result.points[i + 1].report.p_unseen_as_seen;
    if (lo && hi && *hi > *lo)
      throw NumericsError("alpha_sweep: p_unseen_as_seen increased along the grid");
  }

  result.best_index = 0;
  for (std::size_t i = 1; i < result.points.size(); ++i) {
    // Strict > keeps the smallest alpha on ties (grid is ascending).
    if (result.points[i].report.h.value_or(0.0) >
        result.points[result.best_index].report.h.value_or(0.0))
      result.best_index = i;
  }
  result.best_value = result.points[result.best_index].value;
  return result;
}

SweepResult mixing_sweep(const DatasetBundle& bundle, const SplitSpec& split,
                         MixParam param, std::span<const double> grid,
                         const MixingSweepConfig& config) {
  if (grid.empty()) throw ArgumentError("mixing_sweep: empty grid");
  if (config.repeats < 1) throw ArgumentError("mixing_sweep: repeats must be >= 1");
  if (config.alpha_grid.empty())
    throw ArgumentError("mixing_sweep: empty calibration grid");
  for (double v : grid)
    if (v < 0.0 || v > 1.0)
      throw ArgumentError("mixing_sweep: grid values must lie in [0,1]");

  SweepResult result;
  result.points.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    std::vector<GzslReport> reports;
    reports.reserve(config.repeats);
    for (std::uint32_t r = 0; r < config.repeats; ++r) {
      TrainConfig cfg = config.base;
      if (param == MixParam::lambda)
        cfg.lambda = grid[i];
      else
        cfg.kappa = grid[i];
      cfg.seed = r;
      const TrainResult trained = train(bundle, split, cfg);

      const SweepResult calib = alpha_sweep(trained.params, bundle, split,
                                            config.alpha_grid, cfg.metric,
                                            config.averaging);
      const PrototypeTable table =
          build_split_table(trained.params, bundle, split, false, cfg.metric);
      reports.push_back(evaluate(trained.params, bundle, split.test_seen_ids,
                                 split.test_unseen_ids, table, calib.best_value,
                                 config.averaging));
    }

    SweepPoint point;
    point.value = grid[i];
    auto mean_of = [&](auto getter) -> std::optional<double> {
      double acc = 0.0;
      std::size_t n = 0;
      for (const auto& rep : reports) {
        const auto v = getter(rep);
        if (v) {
          acc += *v;
          ++n;
        }
      }
      if (n == 0) return std::nullopt;
      return acc / static_cast<double>(n);
    };
    point.report.u = mean_of([](const GzslReport& r) { return r.u; });
    point.report.s = mean_of([](const GzslReport& r) { return r.s; });
    point.report.h = mean_of([](const GzslReport& r) { return r.h; });
    point.report.p_unseen_as_seen =
        mean_of([](const GzslReport& r) { return r.p_unseen_as_seen; });
    point.report.p_seen_as_unseen =
        mean_of([](const GzslReport& r) { return r.p_seen_as_unseen; });

    const double mean_h = point.report.h.value_or(0.0);
    double ci_half = 0.0;
    if (reports.size() >= 2) {
      double ss = 0.0;
      for (const auto& rep : reports) {
        const double dev = rep.h.value_or(0.0) - mean_h;
        ss += dev * dev;
      }
      const double sd = std::sqrt(ss / static_cast<double>(reports.size() - 1));
      ci_half = 1.96 * sd / std::sqrt(static_cast<double>(reports.size()));
    }
    point.ci_low = mean_h - ci_half;
    point.ci_high = mean_h + ci_half;
    result.points[i] = std::move(point);
  });

  result.best_index = 0;
  for (std::size_t i = 1; i < result.points.size(); ++i)
    if (result.points[i].report.h.value_or(0.0) >
        result.points[result.best_index].report.h.value_or(0.0))
      result.best_index = i;
  result.best_value = result.points[result.best_index].value;
  return result;
}

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "value,u,s,h,p_unseen_as_seen,p_seen_as_unseen,ci_low,ci_high\n";
  for (const auto& p : result.points) {
    os << fmt9(p.value) << ',' << fmt_opt(p.report.u) << ',' << fmt_opt(p.report.s)
       << ',' << fmt_opt(p.report.h) << ',' << fmt_opt(p.report.p_unseen_as_seen)
       << ',' << fmt_opt(p.report.p_seen_as_unseen) << ',' << fmt9(p.ci_low) << ','
       << fmt9(p.ci_high) << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

void write_report_csv(const GzslReport& report, double alpha,
                      const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "alpha,u,s,h,p_unseen_as_seen,p_seen_as_unseen\n";
  os << fmt9(alpha) << ',' << fmt_opt(report.u) << ',' << fmt_opt(report.s) << ','
     << fmt_opt(report.h) << ',' << fmt_opt(report.p_unseen_as_seen) << ','
     << fmt_opt(report.p_seen_as_unseen) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

void write_report_json(const GzslReport& report, double alpha,
                       const std::filesystem::path& path) {
  nlohmann::json j;
  j["alpha"] = alpha;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v)
      j[key] = *v;
    else
      j[key] = nullptr;
  };
  put("u", report.u);
  put("s", report.s);
  put("h", report.h);
  put("p_unseen_as_seen", report.p_unseen_as_seen);
  put("p_seen_as_unseen", report.p_seen_as_unseen);
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [class_id, acc] : report.per_class)
    per_class[std::to_string(class_id)] = acc;
  j["per_class"] = per_class;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace cmzsl
