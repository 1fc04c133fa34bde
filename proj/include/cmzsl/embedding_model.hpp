#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "cmzsl/linalg.hpp"

namespace cmzsl {

enum class Metric { sqeuclid, cosine_dist };

Metric metric_from_string(const std::string& name);  // ArgumentError on unknown
std::string metric_to_string(Metric metric);

/// Two linear projection heads into the joint space plus one linear
/// classifier head per modality over the C train classes. Parameters are
/// kept in double; the checkpoint file stores f32.
struct ModelParams {
  Matrix wv;  // Dz x Dv image projection
  Vector bv;  // Dz
  Matrix wt;  // Dz x Dt text projection
  Vector bt;  // Dz
  Matrix wi;  // C x Dz image classifier
  Vector bi;  // C
  Matrix wc;  // C x Dz text classifier
  Vector bc;  // C

  std::size_t dz() const { return wv.rows; }
  std::size_t dv() const { return wv.cols; }
  std::size_t dt() const { return wt.cols; }
  std::size_t num_train_classes() const { return wi.rows; }

  void validate() const;  // ShapeError / NumericsError
};

using Embedding = Vector;

/// z = Wv x + bv
Embedding embed_image(const ModelParams& params, std::span<const double> image_features);
Embedding embed_image(const ModelParams& params, std::span<const float> image_features);

/// Mean-pools the T description rows, then projects: z = Wt mean(rows) + bt.
/// For linear heads this equals projecting each row and averaging.
Embedding embed_text(const ModelParams& params, std::span<const double> text_features,
                     std::size_t t_count);
Embedding embed_text(const ModelParams& params, std::span<const float> text_features,
                     std::size_t t_count);

/// sqeuclid: sum of squared differences. cosine_dist: 1 - cos angle;
/// throws DegenerateInputError on a zero vector.
double distance(std::span<const double> a, std::span<const double> b, Metric metric);

/// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
ModelParams init_params(std::size_t dv, std::size_t dt, std::size_t dz, std::size_t c,
                        std::uint64_t seed);

/// CMP1 checkpoint: magic, version, dims, then all matrices as f32
/// row-major in field order (Wv bv Wt bt Wi bi Wc bc), little-endian.
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace cmzsl
