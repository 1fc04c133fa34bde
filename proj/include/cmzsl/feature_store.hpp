#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmzsl/errors.hpp"

namespace cmzsl {

/// One image paired with its T text descriptions and a class label.
/// Features are stored as f32, exactly as they live in the CMF1 file, so
/// a save/load round trip is bit-exact.
struct InstanceRecord {
  std::vector<float> image_features;  // Dv
  std::vector<float> text_features;   // T x Dt, row-major
  std::uint32_t label = 0;
};

struct DatasetBundle {
  std::vector<InstanceRecord> instances;
  std::uint32_t num_classes = 0;
  std::uint32_t dv = 0;
  std::uint32_t dt = 0;
  std::uint32_t t = 1;
  std::vector<std::string> class_names;  // optional, not serialized

  std::size_t size() const { return instances.size(); }

  /// One text description (row d of the T x Dt block) of instance i.
  std::span<const float> text_row(std::size_t i, std::size_t d) const {
    return {instances[i].text_features.data() + d * dt, dt};
  }

  /// Throws DataError if any invariant is violated.
  void validate() const;
};

/// Disjoint index lists plus the seen/unseen class partition.
struct SplitSpec {
  std::vector<std::uint32_t> train_ids;
  std::vector<std::uint32_t> val_seen_ids;
  std::vector<std::uint32_t> val_unseen_ids;
  std::vector<std::uint32_t> test_seen_ids;
  std::vector<std::uint32_t> test_unseen_ids;
  std::vector<std::uint32_t> seen_classes;
  std::vector<std::uint32_t> unseen_classes;

  /// Throws SplitError on overlapping lists, overlapping class sets, or
  /// an instance filed under the wrong side of the seen/unseen partition.
  void validate(const DatasetBundle& bundle) const;
};

/// Desk-scale synthetic dataset: per-class latent means pushed through two
/// fixed random linear maps, one per modality, plus isotropic noise.
struct SynthConfig {
  std::uint32_t num_seen = 8;
  std::uint32_t num_unseen = 4;
  std::uint32_t instances_per_class = 30;
  std::uint32_t dv = 32;
  std::uint32_t dt = 24;
  std::uint32_t t = 3;
  std::uint32_t latent_dim = 6;
  double noise_sigma = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class BundleFormat { binary, csv };

DatasetBundle load_bundle(const std::filesystem::path& path, BundleFormat format);
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& path,
                 BundleFormat format);

std::pair<DatasetBundle, SplitSpec> synth_generate(const SynthConfig& config);

/// Splits the seen-train portion of a bundle into train / val_seen by a
/// per-class stratified holdout (largest-remainder apportionment, so the
/// global holdout count is exactly round(fraction * N)), and routes every
/// instance of `unseen_val_classes` to val_unseen.
SplitSpec build_validation_split(const DatasetBundle& bundle,
                                 std::span<const std::uint32_t> seen_classes,
                                 std::span<const std::uint32_t> unseen_val_classes,
                                 double seen_holdout_fraction,
                                 std::uint64_t seed);

SplitSpec load_split(const std::filesystem::path& path);
void save_split(const SplitSpec& split, const std::filesystem::path& path);

}  // namespace cmzsl
