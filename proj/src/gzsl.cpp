#include "cmzsl/gzsl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "cmzsl/errors.hpp"

namespace cmzsl {

const PrototypeTable::Entry* PrototypeTable::find(std::uint32_t class_id) const {
  for (const auto& e : entries)
    if (e.class_id == class_id) return &e;
  return nullptr;
}

PrototypeTable compute_prototypes(const ModelParams& params,
                                  const DatasetBundle& bundle,
                                  std::span<const std::uint32_t> instance_ids,
                                  std::span<const std::uint32_t> class_ids,
                                  const std::vector<bool>& seen_flags, Metric metric) {
  if (class_ids.size() != seen_flags.size())
    throw ArgumentError("compute_prototypes: class_ids/seen_flags size mismatch");

  std::map<std::uint32_t, bool> wanted;
  for (std::size_t i = 0; i < class_ids.size(); ++i)
    wanted[class_ids[i]] = seen_flags[i];

  std::map<std::uint32_t, std::pair<Vector, std::size_t>> sums;
  for (std::uint32_t id : instance_ids) {
    if (id >= bundle.size())
      throw ArgumentError("compute_prototypes: instance id out of range");
    const std::uint32_t label = bundle.instances[id].label;
    auto it = wanted.find(label);
    if (it == wanted.end()) continue;
    const Embedding z =
        embed_text(params, std::span<const float>(bundle.instances[id].text_features),
                   bundle.t);
    auto& [sum, count] = sums[label];
    if (sum.empty()) sum.assign(z.size(), 0.0);
    axpy(1.0, z, sum);
    ++count;
  }

  PrototypeTable table;
  table.metric = metric;
  for (const auto& [class_id, seen] : wanted) {
    auto it = sums.find(class_id);
    if (it == sums.end())
      throw EmptyClassError("class " + std::to_string(class_id) +
                            " has no text samples in the provided instance set");
    auto& [sum, count] = it->second;
    Vector proto = sum;
    for (double& v : proto) v /= static_cast<double>(count);
    table.entries.push_back({class_id, seen, std::move(proto)});
  }
  // std::map iteration already yields ascending class ids.
  return table;
}

double rescaled_distance(double dist, bool is_seen, double alpha) {
  if (alpha < 0.0) throw ArgumentError("alpha must be >= 0");
  return is_seen ? (1.0 + alpha) * dist : dist;
}

std::uint32_t classify(std::span<const double> z_v, const PrototypeTable& table,
                       double alpha) {
  if (table.empty()) throw ArgumentError("classify: empty prototype table");
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_class = std::numeric_limits<std::uint32_t>::max();
  for (const auto& e : table.entries) {
    const double d =
        rescaled_distance(distance(z_v, e.prototype, table.metric), e.seen, alpha);
    // Exact ties go to the smallest class id, independent of entry order.
    if (d < best || (d == best && e.class_id < best_class)) {
      best = d;
      best_class = e.class_id;
    }
  }
  return best_class;
}

std::vector<std::uint32_t> classify_batch(const std::vector<Embedding>& embeddings,
                                          const PrototypeTable& table, double alpha) {
  std::vector<std::uint32_t> out;
  out.reserve(embeddings.size());
  for (const auto& z : embeddings) out.push_back(classify(z, table, alpha));
  return out;
}

void save_prototypes_csv(const PrototypeTable& table,
                         const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "class_id,seen,values\n";
  char buf[64];
  for (const auto& e : table.entries) {
    os << e.class_id << ',' << (e.seen ? 1 : 0);
    for (double v : e.prototype) {
      std::snprintf(buf, sizeof(buf), ",%.9g", v);
      os << buf;
    }
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace cmzsl
