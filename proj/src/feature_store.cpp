#include "cmzsl/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cmzsl/rng.hpp"

namespace cmzsl {

namespace {

constexpr char kBundleMagic[4] = {'C', 'M', 'F', '1'};
constexpr std::uint32_t kBundleVersion = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  put_bytes(os, b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::ostream& os, float v) {
  put_u32(os, std::bit_cast<std::uint32_t>(v));
}

void get_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError(std::string("truncated file while reading ") + what);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  get_bytes(is, b, 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is, const char* what) {
  const std::uint64_t lo = get_u32(is, what);
  const std::uint64_t hi = get_u32(is, what);
  return lo | (hi << 32);
}

float get_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(get_u32(is, what));
}

void save_binary(const DatasetBundle& b, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  put_bytes(os, kBundleMagic, 4);
  put_u32(os, kBundleVersion);
  put_u64(os, b.instances.size());
  put_u32(os, b.num_classes);
  put_u32(os, b.dv);
  put_u32(os, b.dt);
  put_u32(os, b.t);
  for (const auto& inst : b.instances) put_u32(os, inst.label);
  for (const auto& inst : b.instances)
    for (float v : inst.image_features) put_f32(os, v);
  for (const auto& inst : b.instances)
    for (float v : inst.text_features) put_f32(os, v);
  if (!os) throw IoError("write failed: " + path.string());
}

DatasetBundle load_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  get_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kBundleMagic, 4) != 0)
    throw FormatError("bad magic in " + path.string());
  const std::uint32_t version = get_u32(is, "version");
  if (version != kBundleVersion)
    throw FormatError("unsupported bundle version " + std::to_string(version));
  DatasetBundle b;
  const std::uint64_t n = get_u64(is, "instance count");
  b.num_classes = get_u32(is, "num_classes");
  b.dv = get_u32(is, "Dv");
  b.dt = get_u32(is, "Dt");
  b.t = get_u32(is, "T");
  b.instances.resize(n);
  for (auto& inst : b.instances) inst.label = get_u32(is, "label");
  for (auto& inst : b.instances) {
    inst.image_features.resize(b.dv);
    for (auto& v : inst.image_features) v = get_f32(is, "image features");
  }
  const std::size_t text_len = static_cast<std::size_t>(b.t) * b.dt;
  for (auto& inst : b.instances) {
    inst.text_features.resize(text_len);
    for (auto& v : inst.text_features) v = get_f32(is, "text features");
  }
  b.validate();
  return b;
}

void save_csv(const DatasetBundle& b, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "label,modality,index,values\n";
  char buf[64];
  auto put_values = [&](std::span<const float> vals) {
    for (float v : vals) {
      std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(v));
      os << buf;
    }
    os << '\n';
  };
  for (std::size_t i = 0; i < b.instances.size(); ++i) {
    const auto& inst = b.instances[i];
    os << inst.label << ",image,0";
    put_values(inst.image_features);
    for (std::uint32_t d = 0; d < b.t; ++d) {
      os << inst.label << ",text," << d;
      put_values(b.text_row(i, d));
    }
  }
  if (!os) throw IoError("write failed: " + path.string());
}

DatasetBundle load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty CSV: " + path.string());
  if (line.rfind("label,modality,index,values", 0) != 0)
    throw FormatError("bad CSV header: " + line);

  DatasetBundle b;
  b.dv = 0;
  b.dt = 0;
  b.t = 0;
  std::uint32_t max_label = 0;
  bool any = false;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 4)
      throw FormatError("CSV line " + std::to_string(line_no) + ": too few fields");
    std::uint32_t label = 0;
    try {
      label = static_cast<std::uint32_t>(std::stoul(fields[0]));
    } catch (const std::exception&) {
      throw FormatError("CSV line " + std::to_string(line_no) + ": bad label");
    }
    const std::string& modality = fields[1];
    std::vector<float> values;
    values.reserve(fields.size() - 3);
    for (std::size_t k = 3; k < fields.size(); ++k) {
      try {
        values.push_back(std::stof(fields[k]));
      } catch (const std::exception&) {
        throw FormatError("CSV line " + std::to_string(line_no) + ": bad value");
      }
    }
    if (modality == "image") {
      if (b.dv == 0)
        b.dv = static_cast<std::uint32_t>(values.size());
      else if (values.size() != b.dv)
        throw FormatError("CSV line " + std::to_string(line_no) + ": ragged image row");
      InstanceRecord inst;
      inst.label = label;
      inst.image_features = std::move(values);
      b.instances.push_back(std::move(inst));
    } else if (modality == "text") {
      if (b.instances.empty())
        throw FormatError("CSV line " + std::to_string(line_no) +
                          ": text row before any image row");
      if (b.dt == 0)
        b.dt = static_cast<std::uint32_t>(values.size());
      else if (values.size() != b.dt)
        throw FormatError("CSV line " + std::to_string(line_no) + ": ragged text row");
      auto& inst = b.instances.back();
      if (inst.label != label)
        throw FormatError("CSV line " + std::to_string(line_no) +
                          ": label differs from its image row");
      inst.text_features.insert(inst.text_features.end(), values.begin(),
                                values.end());
    } else {
      throw FormatError("CSV line " + std::to_string(line_no) + ": unknown modality '" +
                        modality + "'");
    }
    max_label = std::max(max_label, label);
    any = true;
  }
  if (any) {
    b.num_classes = max_label + 1;
    b.t = static_cast<std::uint32_t>(b.instances.front().text_features.size() /
                                     std::max<std::uint32_t>(b.dt, 1));
    if (b.t == 0) throw FormatError("CSV bundle has no text rows");
  }
  b.validate();
  return b;
}

/// round(fraction * n_c) per class, corrected by largest remainder so the
/// class counts sum exactly to round(fraction * N).
std::map<std::uint32_t, std::size_t> apportion_holdout(
    const std::map<std::uint32_t, std::size_t>& class_sizes, double fraction) {
  std::size_t total = 0;
  for (const auto& [c, n] : class_sizes) total += n;
  const auto target = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(total)));

  std::map<std::uint32_t, std::size_t> holdout;
  std::size_t assigned = 0;
  std::vector<std::pair<double, std::uint32_t>> remainders;  // (-rem, class)
  for (const auto& [c, n] : class_sizes) {
    const double quota = fraction * static_cast<double>(n);
    auto base = static_cast<std::size_t>(std::floor(quota));
    base = std::min(base, n);
    holdout[c] = base;
    assigned += base;
    remainders.emplace_back(-(quota - std::floor(quota)), c);
  }
  std::sort(remainders.begin(), remainders.end());
  std::size_t left = target > assigned ? target - assigned : 0;
  for (const auto& [neg_rem, c] : remainders) {
    if (left == 0) break;
    if (holdout[c] < class_sizes.at(c)) {
      ++holdout[c];
      --left;
    }
  }
  return holdout;
}

}  // namespace

void DatasetBundle::validate() const {
  if (dv == 0 || dt == 0) throw DataError("Dv and Dt must be positive");
  if (t == 0) throw DataError("T must be >= 1");
  const std::size_t text_len = static_cast<std::size_t>(t) * dt;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    if (inst.image_features.size() != dv)
      throw DataError("instance " + std::to_string(i) + ": image feature length " +
                      std::to_string(inst.image_features.size()) + " != Dv");
    if (inst.text_features.size() != text_len)
      throw DataError("instance " + std::to_string(i) + ": text feature length " +
                      std::to_string(inst.text_features.size()) + " != T*Dt");
    if (inst.label >= num_classes)
      throw DataError("instance " + std::to_string(i) + ": label " +
                      std::to_string(inst.label) + " >= num_classes");
    for (float v : inst.image_features)
      if (!std::isfinite(v))
        throw DataError("instance " + std::to_string(i) + ": non-finite image value");
    for (float v : inst.text_features)
      if (!std::isfinite(v))
        throw DataError("instance " + std::to_string(i) + ": non-finite text value");
  }
}

void SplitSpec::validate(const DatasetBundle& bundle) const {
  std::set<std::uint32_t> seen(seen_classes.begin(), seen_classes.end());
  std::set<std::uint32_t> unseen(unseen_classes.begin(), unseen_classes.end());
  for (std::uint32_t c : seen)
    if (unseen.count(c))
      throw SplitError("class " + std::to_string(c) + " is both seen and unseen");

  std::set<std::uint32_t> all_ids;
  auto check_list = [&](std::span<const std::uint32_t> ids, bool expect_seen,
                        const char* name) {
    for (std::uint32_t id : ids) {
      if (id >= bundle.size())
        throw SplitError(std::string(name) + ": index " + std::to_string(id) +
                         " out of range");
      if (!all_ids.insert(id).second)
        throw SplitError("index " + std::to_string(id) + " appears in two lists");
      const std::uint32_t label = bundle.instances[id].label;
      const bool is_seen = seen.count(label) > 0;
      const bool is_unseen = unseen.count(label) > 0;
      if (expect_seen && !is_seen)
        throw SplitError(std::string(name) + ": instance " + std::to_string(id) +
                         " has non-seen label " + std::to_string(label));
      if (!expect_seen && !is_unseen)
        throw SplitError(std::string(name) + ": instance " + std::to_string(id) +
                         " has non-unseen label " + std::to_string(label));
    }
  };
  check_list(train_ids, true, "train");
  check_list(val_seen_ids, true, "val_seen");
  check_list(test_seen_ids, true, "test_seen");
  check_list(val_unseen_ids, false, "val_unseen");
  check_list(test_unseen_ids, false, "test_unseen");
}

void SynthConfig::validate() const {
  if (num_seen < 1 || num_unseen < 1 || instances_per_class < 1 || dv < 1 ||
      dt < 1 || t < 1 || latent_dim < 1)
    throw ArgumentError("synth config: all counts must be >= 1");
  if (noise_sigma < 0.0) throw ArgumentError("synth config: noise_sigma must be >= 0");
}

DatasetBundle load_bundle(const std::filesystem::path& path, BundleFormat format) {
  return format == BundleFormat::binary ? load_binary(path) : load_csv(path);
}

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& path,
                 BundleFormat format) {
  bundle.validate();
  if (format == BundleFormat::binary)
    save_binary(bundle, path);
  else
    save_csv(bundle, path);
}

std::pair<DatasetBundle, SplitSpec> synth_generate(const SynthConfig& config) {
  config.validate();
  const std::uint32_t num_classes = config.num_seen + config.num_unseen;

  // Substreams keep each random block independent of the others' sizes.
  SplitMix64 mean_rng = substream(config.seed, 0);
  SplitMix64 map_v_rng = substream(config.seed, 1);
  SplitMix64 map_t_rng = substream(config.seed, 2);
  SplitMix64 noise_rng = substream(config.seed, 3);

  std::vector<double> means(static_cast<std::size_t>(num_classes) * config.latent_dim);
  for (auto& v : means) v = mean_rng.normal();

  const double map_scale = 1.0 / std::sqrt(static_cast<double>(config.latent_dim));
  std::vector<double> map_v(static_cast<std::size_t>(config.dv) * config.latent_dim);
  for (auto& v : map_v) v = map_v_rng.normal() * map_scale;
  std::vector<double> map_t(static_cast<std::size_t>(config.dt) * config.latent_dim);
  for (auto& v : map_t) v = map_t_rng.normal() * map_scale;

  auto project = [&](const std::vector<double>& map, std::uint32_t out_dim,
                     const double* mu) {
    std::vector<double> out(out_dim, 0.0);
    for (std::uint32_t r = 0; r < out_dim; ++r) {
      double acc = 0.0;
      for (std::uint32_t k = 0; k < config.latent_dim; ++k)
        acc += map[static_cast<std::size_t>(r) * config.latent_dim + k] * mu[k];
      out[r] = acc;
    }
    return out;
  };

  DatasetBundle bundle;
  bundle.num_classes = num_classes;
  bundle.dv = config.dv;
  bundle.dt = config.dt;
  bundle.t = config.t;
  bundle.instances.reserve(static_cast<std::size_t>(num_classes) *
                           config.instances_per_class);

  SplitSpec split;
  for (std::uint32_t c = 0; c < num_classes; ++c)
    (c < config.num_seen ? split.seen_classes : split.unseen_classes).push_back(c);

  for (std::uint32_t c = 0; c < num_classes; ++c) {
    const double* mu = means.data() + static_cast<std::size_t>(c) * config.latent_dim;
    const std::vector<double> img_mean = project(map_v, config.dv, mu);
    const std::vector<double> txt_mean = project(map_t, config.dt, mu);

    const std::uint32_t n = config.instances_per_class;
    const auto n_train = static_cast<std::uint32_t>(std::llround(0.6 * n));
    const auto n_val = static_cast<std::uint32_t>(std::llround(0.2 * n));

    for (std::uint32_t k = 0; k < n; ++k) {
      InstanceRecord inst;
      inst.label = c;
      inst.image_features.resize(config.dv);
      for (std::uint32_t d = 0; d < config.dv; ++d)
        inst.image_features[d] =
            static_cast<float>(img_mean[d] + config.noise_sigma * noise_rng.normal());
      inst.text_features.resize(static_cast<std::size_t>(config.t) * config.dt);
      for (std::uint32_t r = 0; r < config.t; ++r)
        for (std::uint32_t d = 0; d < config.dt; ++d)
          inst.text_features[static_cast<std::size_t>(r) * config.dt + d] =
              static_cast<float>(txt_mean[d] + config.noise_sigma * noise_rng.normal());

      const auto id = static_cast<std::uint32_t>(bundle.instances.size());
      if (c < config.num_seen) {
        // 60/20/20 train/val/test inside each seen class.
        if (k < n_train)
          split.train_ids.push_back(id);
        else if (k < n_train + n_val)
          split.val_seen_ids.push_back(id);
        else
          split.test_seen_ids.push_back(id);
      } else {
        // Unseen classes go whole to val or test by class-id parity.
        (c % 2 == 0 ? split.val_unseen_ids : split.test_unseen_ids).push_back(id);
      }
      bundle.instances.push_back(std::move(inst));
    }
  }

  split.validate(bundle);
  return {std::move(bundle), std::move(split)};
}

SplitSpec build_validation_split(const DatasetBundle& bundle,
                                 std::span<const std::uint32_t> seen_classes,
                                 std::span<const std::uint32_t> unseen_val_classes,
                                 double seen_holdout_fraction, std::uint64_t seed) {
  if (!(seen_holdout_fraction > 0.0 && seen_holdout_fraction < 1.0))
    throw ArgumentError("seen_holdout_fraction must lie in (0,1)");
  std::set<std::uint32_t> seen(seen_classes.begin(), seen_classes.end());
  std::set<std::uint32_t> unseen(unseen_val_classes.begin(), unseen_val_classes.end());
  for (std::uint32_t c : seen)
    if (unseen.count(c))
      throw SplitError("class " + std::to_string(c) +
                       " listed as both seen and unseen-val");

  std::map<std::uint32_t, std::vector<std::uint32_t>> by_class;
  SplitSpec out;
  for (std::uint32_t id = 0; id < bundle.size(); ++id) {
    const std::uint32_t label = bundle.instances[id].label;
    if (seen.count(label))
      by_class[label].push_back(id);
    else if (unseen.count(label))
      out.val_unseen_ids.push_back(id);
  }

  std::map<std::uint32_t, std::size_t> class_sizes;
  for (const auto& [c, ids] : by_class) class_sizes[c] = ids.size();
  const auto holdout = apportion_holdout(class_sizes, seen_holdout_fraction);

  for (const auto& [c, ids] : by_class) {
    std::vector<std::uint32_t> order = ids;
    SplitMix64 rng = substream(seed, c);
    // Partial Fisher-Yates: the first n_hold entries become the holdout.
    const std::size_t n_hold = holdout.at(c);
    for (std::size_t i = 0; i < n_hold && i + 1 < order.size(); ++i) {
      const std::size_t j = i + rng.next_below(order.size() - i);
      std::swap(order[i], order[j]);
    }
    out.val_seen_ids.insert(out.val_seen_ids.end(), order.begin(),
                            order.begin() + static_cast<std::ptrdiff_t>(n_hold));
    out.train_ids.insert(out.train_ids.end(),
                         order.begin() + static_cast<std::ptrdiff_t>(n_hold),
                         order.end());
  }
  std::sort(out.train_ids.begin(), out.train_ids.end());
  std::sort(out.val_seen_ids.begin(), out.val_seen_ids.end());

  out.seen_classes.assign(seen.begin(), seen.end());
  out.unseen_classes.assign(unseen.begin(), unseen.end());
  out.validate(bundle);
  return out;
}

SplitSpec load_split(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad split JSON: " + std::string(e.what()));
  }
  SplitSpec s;
  auto read_list = [&](const char* key, std::vector<std::uint32_t>& dst) {
    if (!j.contains(key)) throw FormatError(std::string("split JSON missing ") + key);
    dst = j.at(key).get<std::vector<std::uint32_t>>();
  };
  read_list("train_ids", s.train_ids);
  read_list("val_seen_ids", s.val_seen_ids);
  read_list("val_unseen_ids", s.val_unseen_ids);
  read_list("test_seen_ids", s.test_seen_ids);
  read_list("test_unseen_ids", s.test_unseen_ids);
  read_list("seen_classes", s.seen_classes);
  read_list("unseen_classes", s.unseen_classes);
  return s;
}

void save_split(const SplitSpec& split, const std::filesystem::path& path) {
  nlohmann::json j;
  j["train_ids"] = split.train_ids;
  j["val_seen_ids"] = split.val_seen_ids;
  j["val_unseen_ids"] = split.val_unseen_ids;
  j["test_seen_ids"] = split.test_seen_ids;
  j["test_unseen_ids"] = split.test_unseen_ids;
  j["seen_classes"] = split.seen_classes;
  j["unseen_classes"] = split.unseen_classes;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace cmzsl
