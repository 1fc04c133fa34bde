#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cmzsl/embedding_model.hpp"
#include "cmzsl/rng.hpp"
#include "test_util.hpp"

using namespace cmzsl;
using testutil::TempDir;

namespace {

ModelParams manual_params(std::size_t dv, std::size_t dt, std::size_t dz,
                          std::size_t c) {
  ModelParams p;
  p.wv = Matrix(dz, dv);
  p.wt = Matrix(dz, dt);
  p.wi = Matrix(c, dz);
  p.wc = Matrix(c, dz);
  p.bv.assign(dz, 0.0);
  p.bt.assign(dz, 0.0);
  p.bi.assign(c, 0.0);
  p.bc.assign(c, 0.0);
  return p;
}

/// Independent oracle: plain triple-loop affine map.
Vector naive_affine(const Matrix& w, const Vector& x, const Vector& b) {
  Vector out(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = b[r];
    for (std::size_t c = 0; c < w.cols; ++c) acc += w(r, c) * x[c];
    out[r] = acc;
  }
  return out;
}

Vector random_vector(std::size_t n, SplitMix64& rng) {
  Vector v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("identity map passes features through") {
  ModelParams p = manual_params(2, 2, 2, 1);
  p.wv(0, 0) = 1.0;
  p.wv(1, 1) = 1.0;
  const Vector x = {1.0, 2.0};
  const Embedding z = embed_image(p, std::span<const double>(x));
  CHECK(z[0] == doctest::Approx(1.0));
  CHECK(z[1] == doctest::Approx(2.0));
}

TEST_CASE("zero weights yield the bias") {
  ModelParams p = manual_params(3, 2, 2, 1);
  p.bv = {0.7, -0.3};
  for (const Vector& x : {Vector{1.0, 2.0, 3.0}, Vector{-5.0, 0.0, 2.5}}) {
    const Embedding z = embed_image(p, std::span<const double>(x));
    CHECK(z[0] == doctest::Approx(0.7));
    CHECK(z[1] == doctest::Approx(-0.3));
  }
}

TEST_CASE("embed_image matches the naive matvec oracle") {
  SplitMix64 rng(99);
  ModelParams p = init_params(17, 5, 9, 3, 4);
  for (double& v : p.bv) v = rng.normal();
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = random_vector(17, rng);
    const Embedding z = embed_image(p, std::span<const double>(x));
    const Vector expect = naive_affine(p.wv, x, p.bv);
    for (std::size_t k = 0; k < z.size(); ++k)
      CHECK(std::abs(z[k] - expect[k]) < 1e-12);
  }
}

TEST_CASE("embed_image rejects a wrong length") {
  const ModelParams p = init_params(4, 3, 2, 2, 0);
  const Vector x = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(embed_image(p, std::span<const double>(x)), ShapeError);
}

TEST_CASE("single description equals plain projection") {
  SplitMix64 rng(5);
  const ModelParams p = init_params(4, 6, 3, 2, 1);
  const Vector text = random_vector(6, rng);
  const Embedding via_text = embed_text(p, std::span<const double>(text), 1);
  const Vector direct = naive_affine(p.wt, text, p.bt);
  for (std::size_t k = 0; k < via_text.size(); ++k)
    CHECK(std::abs(via_text[k] - direct[k]) < 1e-12);
}

TEST_CASE("opposite descriptions cancel to the bias") {
  SplitMix64 rng(6);
  const ModelParams p = init_params(4, 5, 3, 2, 2);  // bt is zero from init
  const Vector u = random_vector(5, rng);
  Vector block(10);
  for (std::size_t k = 0; k < 5; ++k) {
    block[k] = u[k];
    block[5 + k] = -u[k];
  }
  const Embedding z = embed_text(p, std::span<const double>(block), 2);
  for (double v : z) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("pool-then-project equals project-then-pool") {
  SplitMix64 rng(7);
  const ModelParams p = init_params(4, 8, 5, 2, 3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t t_count = 3;
    Vector block(t_count * 8);
    for (double& v : block) v = rng.normal();
    const Embedding pooled = embed_text(p, std::span<const double>(block), t_count);

    Vector mean_proj(5, 0.0);
    for (std::size_t r = 0; r < t_count; ++r) {
      Vector row(block.begin() + static_cast<std::ptrdiff_t>(r * 8),
                 block.begin() + static_cast<std::ptrdiff_t>((r + 1) * 8));
      const Vector projected = naive_affine(p.wt, row, p.bt);
      for (std::size_t k = 0; k < 5; ++k)
        mean_proj[k] += projected[k] / static_cast<double>(t_count);
    }
    for (std::size_t k = 0; k < 5; ++k)
      CHECK(std::abs(pooled[k] - mean_proj[k]) < 1e-9);
  }
}

TEST_CASE("linearity of the image head") {
  SplitMix64 rng(8);
  ModelParams p = init_params(6, 3, 4, 2, 9);
  for (double& v : p.bv) v = rng.normal();
  const Vector zero(6, 0.0);
  const Embedding f0 = embed_image(p, std::span<const double>(zero));
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = random_vector(6, rng);
    const Vector y = random_vector(6, rng);
    const double a = rng.uniform(-2.0, 2.0);
    const double b = rng.uniform(-2.0, 2.0);
    Vector combo(6);
    for (std::size_t k = 0; k < 6; ++k) combo[k] = a * x[k] + b * y[k];
    const Embedding f_combo = embed_image(p, std::span<const double>(combo));
    const Embedding fx = embed_image(p, std::span<const double>(x));
    const Embedding fy = embed_image(p, std::span<const double>(y));
    for (std::size_t k = 0; k < 4; ++k) {
      const double expect = a * (fx[k] - f0[k]) + b * (fy[k] - f0[k]);
      CHECK(std::abs((f_combo[k] - f0[k]) - expect) < 1e-9);
    }
  }
}

TEST_CASE("distance identities") {
  const Vector a = {0.0, 0.0};
  const Vector b = {3.0, 4.0};
  CHECK(distance(a, b, Metric::sqeuclid) == doctest::Approx(25.0));
  const Vector c = {1.2, -0.4, 9.0};
  CHECK(distance(c, c, Metric::sqeuclid) == doctest::Approx(0.0));
  CHECK(distance(c, c, Metric::cosine_dist) == doctest::Approx(0.0));
}

TEST_CASE("sqeuclid matches the elementwise-loop oracle") {
  SplitMix64 rng(10);
  for (int trial = 0; trial < 25; ++trial) {
    const Vector a = random_vector(7, rng);
    const Vector b = random_vector(7, rng);
    double expect = 0.0;
    for (std::size_t k = 0; k < 7; ++k) expect += (a[k] - b[k]) * (a[k] - b[k]);
    CHECK(std::abs(distance(a, b, Metric::sqeuclid) - expect) < 1e-12);
  }
}

TEST_CASE("distances are symmetric and nonnegative") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector a = random_vector(5, rng);
    const Vector b = random_vector(5, rng);
    for (Metric m : {Metric::sqeuclid, Metric::cosine_dist}) {
      const double dab = distance(a, b, m);
      const double dba = distance(b, a, m);
      CHECK(dab >= 0.0);
      CHECK(std::abs(dab - dba) < 1e-12);
    }
  }
}

TEST_CASE("cosine distance rejects zero vectors") {
  const Vector zero = {0.0, 0.0};
  const Vector x = {1.0, 2.0};
  CHECK_THROWS_AS(distance(zero, x, Metric::cosine_dist), DegenerateInputError);
  CHECK_THROWS_AS(distance(x, zero, Metric::cosine_dist), DegenerateInputError);
  CHECK(distance(zero, x, Metric::sqeuclid) == doctest::Approx(5.0));
}

TEST_CASE("distance rejects mismatched dimensions") {
  const Vector a = {1.0, 2.0};
  const Vector b = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(distance(a, b, Metric::sqeuclid), ShapeError);
}

TEST_CASE("init_params is deterministic with zero biases and bounded weights") {
  const ModelParams a = init_params(100, 20, 16, 7, 42);
  const ModelParams b = init_params(100, 20, 16, 7, 42);
  CHECK(a.wv.data == b.wv.data);
  CHECK(a.wt.data == b.wt.data);
  CHECK(a.wi.data == b.wi.data);
  CHECK(a.wc.data == b.wc.data);

  for (double v : a.bv) CHECK(v == 0.0);
  for (double v : a.bt) CHECK(v == 0.0);
  for (double v : a.bi) CHECK(v == 0.0);
  for (double v : a.bc) CHECK(v == 0.0);

  for (double v : a.wv.data) CHECK(std::abs(v) <= 0.1);  // fan_in 100
  const double bound_t = 1.0 / std::sqrt(20.0);
  for (double v : a.wt.data) CHECK(std::abs(v) <= bound_t);

  const ModelParams c = init_params(100, 20, 16, 7, 43);
  CHECK(a.wv.data != c.wv.data);
}

TEST_CASE("checkpoint round trip is stable at f32 precision") {
  TempDir dir;
  const ModelParams original = init_params(9, 4, 6, 3, 17);
  const auto path1 = dir.file("a.cmp");
  const auto path2 = dir.file("b.cmp");

  save_params(original, path1);
  const ModelParams once = load_params(path1);
  CHECK(once.dv() == 9);
  CHECK(once.dt() == 4);
  CHECK(once.dz() == 6);
  CHECK(once.num_train_classes() == 3);
  // One f32 trip may truncate, but a second trip is the identity.
  save_params(once, path2);
  const ModelParams twice = load_params(path2);
  CHECK(once.wv.data == twice.wv.data);
  CHECK(once.wt.data == twice.wt.data);
  CHECK(once.wi.data == twice.wi.data);
  CHECK(once.wc.data == twice.wc.data);
  CHECK(once.bv == twice.bv);
  // And the truncation error is bounded by f32 resolution.
  for (std::size_t k = 0; k < original.wv.data.size(); ++k)
    CHECK(std::abs(original.wv.data[k] - once.wv.data[k]) < 1e-7);
}

TEST_CASE("checkpoint loader rejects junk") {
  TempDir dir;
  const auto path = dir.file("junk.cmp");
  std::ofstream(path) << "definitely not a checkpoint";
  CHECK_THROWS_AS(load_params(path), FormatError);
  CHECK_THROWS_AS(load_params(dir.file("missing.cmp")), IoError);
}

TEST_CASE("metric names parse both ways") {
  CHECK(metric_from_string("sqeuclid") == Metric::sqeuclid);
  CHECK(metric_from_string("cosine") == Metric::cosine_dist);
  CHECK(metric_from_string("cosine_dist") == Metric::cosine_dist);
  CHECK_THROWS_AS(metric_from_string("manhattan"), ArgumentError);
  CHECK(metric_to_string(Metric::sqeuclid) == "sqeuclid");
}
