#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cmzsl/embedding_model.hpp"
#include "cmzsl/feature_store.hpp"
#include "cmzsl/linalg.hpp"

namespace cmzsl {

/// Per-class mean text embedding plus a seen/unseen flag. Entries are kept
/// sorted by class id so argmin ties resolve to the smallest id.
struct PrototypeTable {
  struct Entry {
    std::uint32_t class_id = 0;
    bool seen = false;
    Vector prototype;
  };
  std::vector<Entry> entries;
  Metric metric = Metric::sqeuclid;

  bool empty() const { return entries.empty(); }
  const Entry* find(std::uint32_t class_id) const;
};

/// p(y) = mean of embed_text over the instances of class y among
/// `instance_ids`. Every requested class needs at least one instance.
PrototypeTable compute_prototypes(const ModelParams& params,
                                  const DatasetBundle& bundle,
                                  std::span<const std::uint32_t> instance_ids,
                                  std::span<const std::uint32_t> class_ids,
                                  const std::vector<bool>& seen_flags, Metric metric);

/// (1+alpha) * dist for seen classes, dist unchanged for unseen.
double rescaled_distance(double dist, bool is_seen, double alpha);

/// Nearest prototype under the rescaled distance; ties go to the smallest
/// class id.
std::uint32_t classify(std::span<const double> z_v, const PrototypeTable& table,
                       double alpha);

std::vector<std::uint32_t> classify_batch(const std::vector<Embedding>& embeddings,
                                          const PrototypeTable& table, double alpha);

/// CSV export: class_id, seen flag, then the Dz prototype values.
void save_prototypes_csv(const PrototypeTable& table,
                         const std::filesystem::path& path);

}  // namespace cmzsl
