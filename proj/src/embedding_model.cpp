#include "cmzsl/embedding_model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cmzsl/errors.hpp"
#include "cmzsl/rng.hpp"

namespace cmzsl {

namespace {

constexpr char kParamsMagic[4] = {'C', 'M', 'P', '1'};
constexpr std::uint32_t kParamsVersion = 1;

Vector to_double(std::span<const float> x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(x[i]);
  return out;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4)
    throw FormatError(std::string("truncated checkpoint while reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_block(std::ostream& os, std::span<const double> block) {
  for (double v : block) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void get_block(std::istream& is, std::span<double> block, const char* what) {
  for (double& v : block)
    v = static_cast<double>(std::bit_cast<float>(get_u32(is, what)));
}

}  // namespace

Metric metric_from_string(const std::string& name) {
  if (name == "sqeuclid") return Metric::sqeuclid;
  if (name == "cosine" || name == "cosine_dist") return Metric::cosine_dist;
  throw ArgumentError("unknown metric: " + name);
}

std::string metric_to_string(Metric metric) {
  return metric == Metric::sqeuclid ? "sqeuclid" : "cosine";
}

void ModelParams::validate() const {
  const std::size_t z = dz();
  const std::size_t c = num_train_classes();
  if (wt.rows != z || bv.size() != z || bt.size() != z)
    throw ShapeError("projection head dimensions disagree");
  if (wi.cols != z || wc.cols != z || wc.rows != c || bi.size() != c ||
      bc.size() != c)
    throw ShapeError("classifier head dimensions disagree");
  for (const auto* block : {&wv.data, &wt.data, &wi.data, &wc.data, &bv, &bt, &bi, &bc})
    if (!all_finite(*block)) throw NumericsError("non-finite model parameter");
}

Embedding embed_image(const ModelParams& params, std::span<const double> x) {
  if (x.size() != params.dv()) throw ShapeError("embed_image: feature length != Dv");
  return affine(params.wv, x, params.bv);
}

Embedding embed_image(const ModelParams& params, std::span<const float> x) {
  return embed_image(params, std::span<const double>(to_double(x)));
}

Embedding embed_text(const ModelParams& params, std::span<const double> text,
                     std::size_t t_count) {
  if (t_count < 1) throw ShapeError("embed_text: need at least one description");
  const std::size_t dt = params.dt();
  if (text.size() != t_count * dt)
    throw ShapeError("embed_text: feature block length != T*Dt");
  Vector pooled(dt, 0.0);
  for (std::size_t r = 0; r < t_count; ++r)
    axpy(1.0 / static_cast<double>(t_count), text.subspan(r * dt, dt), pooled);
  return affine(params.wt, pooled, params.bt);
}

Embedding embed_text(const ModelParams& params, std::span<const float> text,
                     std::size_t t_count) {
  return embed_text(params, std::span<const double>(to_double(text)), t_count);
}

double distance(std::span<const double> a, std::span<const double> b, Metric metric) {
  if (a.size() != b.size()) throw ShapeError("distance: dimension mismatch");
  if (metric == Metric::sqeuclid) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = a[i] - b[i];
      acc += diff * diff;
    }
    return acc;
  }
  const double na = std::sqrt(sqnorm(a));
  const double nb = std::sqrt(sqnorm(b));
  if (na == 0.0 || nb == 0.0)
    throw DegenerateInputError("cosine distance of a zero vector");
  return 1.0 - dot(a, b) / (na * nb);
}

ModelParams init_params(std::size_t dv, std::size_t dt, std::size_t dz, std::size_t c,
                        std::uint64_t seed) {
  if (dv < 1 || dt < 1 || dz < 1 || c < 1)
    throw ArgumentError("init_params: all dimensions must be >= 1");
  ModelParams p;
  p.wv = Matrix(dz, dv);
  p.wt = Matrix(dz, dt);
  p.wi = Matrix(c, dz);
  p.wc = Matrix(c, dz);
  p.bv.assign(dz, 0.0);
  p.bt.assign(dz, 0.0);
  p.bi.assign(c, 0.0);
  p.bc.assign(c, 0.0);

  SplitMix64 rng(seed);
  auto fill = [&rng](Matrix& m) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.cols));
    for (double& v : m.data) v = rng.uniform(-bound, bound);
  };
  fill(p.wv);
  fill(p.wt);
  fill(p.wi);
  fill(p.wc);
  return p;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  params.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(kParamsMagic, 4);
  put_u32(os, kParamsVersion);
  put_u32(os, static_cast<std::uint32_t>(params.dv()));
  put_u32(os, static_cast<std::uint32_t>(params.dt()));
  put_u32(os, static_cast<std::uint32_t>(params.dz()));
  put_u32(os, static_cast<std::uint32_t>(params.num_train_classes()));
  put_block(os, params.wv.data);
  put_block(os, params.bv);
  put_block(os, params.wt.data);
  put_block(os, params.bt);
  put_block(os, params.wi.data);
  put_block(os, params.bi);
  put_block(os, params.wc.data);
  put_block(os, params.bc);
  if (!os) throw IoError("write failed: " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kParamsMagic, 4) != 0)
    throw FormatError("bad checkpoint magic in " + path.string());
  const std::uint32_t version = get_u32(is, "version");
  if (version != kParamsVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t dv = get_u32(is, "Dv");
  const std::uint32_t dt = get_u32(is, "Dt");
  const std::uint32_t dz = get_u32(is, "Dz");
  const std::uint32_t c = get_u32(is, "C");
  if (dv < 1 || dt < 1 || dz < 1 || c < 1)
    throw FormatError("checkpoint carries zero dimension");

  ModelParams p;
  p.wv = Matrix(dz, dv);
  p.wt = Matrix(dz, dt);
  p.wi = Matrix(c, dz);
  p.wc = Matrix(c, dz);
  p.bv.assign(dz, 0.0);
  p.bt.assign(dz, 0.0);
  p.bi.assign(c, 0.0);
  p.bc.assign(c, 0.0);
  get_block(is, p.wv.data, "Wv");
  get_block(is, p.bv, "bv");
  get_block(is, p.wt.data, "Wt");
  get_block(is, p.bt, "bt");
  get_block(is, p.wi.data, "Wi");
  get_block(is, p.bi, "bi");
  get_block(is, p.wc.data, "Wc");
  get_block(is, p.bc, "bc");
  p.validate();
  return p;
}

}  // namespace cmzsl
