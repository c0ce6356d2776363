/*
 * Copyright 2026 The FDSP Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fdsp/errors.hpp"
#include "fdsp/hash.hpp"
#include "fdsp/numcore/tensor.hpp"

namespace fdsp::data {

struct DomainInfo {
  std::uint32_t id = 0;
  std::string name;
};

struct Provenance {
  enum class kind { synthetic, imported };
  kind source = kind::synthetic;
  std::uint64_t seed = 0;
  double shift_strength = 0.0;
  std::string path;
};

/// Labelled feature vectors grouped by domain. Row i of features belongs to
/// domain domain_of[i] with class label_of[i]; i doubles as the sample's lineage id.
struct DomainDataset {
  std::string name;
  std::size_t feature_dim = 0;
  std::vector<DomainInfo> domains;
  std::vector<std::string> classes;
  Tensor features;
  std::vector<std::uint32_t> domain_of;
  std::vector<std::uint32_t> label_of;
  Provenance provenance;

  [[nodiscard]] std::size_t size() const noexcept { return domain_of.size(); }
  [[nodiscard]] std::size_t num_classes() const noexcept { return classes.size(); }

  [[nodiscard]] std::vector<std::size_t> indices_of(std::uint32_t domain) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (domain_of[i] == domain) out.push_back(i);
    return out;
  }

  [[nodiscard]] const DomainInfo& domain(std::uint32_t id) const {
    for (const auto& d : domains)
      if (d.id == id) return d;
    throw index_error("dataset '" + name + "' has no domain " + std::to_string(id));
  }

  [[nodiscard]] std::uint32_t domain_by_name(std::string_view n) const {
    for (const auto& d : domains)
      if (d.name == n) return d.id;
    throw index_error("dataset '" + name + "' has no domain named '" + std::string(n) + "'");
  }

  /// Throws unless every sample references a known domain and class.
  void validate() const {
    if (features.rows != size() || label_of.size() != size() || features.cols != feature_dim) {
      throw schema_error("dataset '" + name + "' sample arrays disagree in length");
    }
    for (std::size_t i = 0; i < size(); ++i) {
      if (label_of[i] >= classes.size()) throw schema_error("sample " + std::to_string(i) + " has class out of range");
      bool known = false;
      for (const auto& d : domains) known = known || d.id == domain_of[i];
      if (!known) throw schema_error("sample " + std::to_string(i) + " has unknown domain");
    }
  }

  friend bool operator==(const DomainDataset& a, const DomainDataset& b) {
    auto same_domains = [&] {
      if (a.domains.size() != b.domains.size()) return false;
      for (std::size_t i = 0; i < a.domains.size(); ++i)
        if (a.domains[i].id != b.domains[i].id || a.domains[i].name != b.domains[i].name) return false;
      return true;
    };
    return a.name == b.name && a.feature_dim == b.feature_dim && same_domains() && a.classes == b.classes &&
           bit_equal(a.features, b.features) && a.domain_of == b.domain_of && a.label_of == b.label_of;
  }
};

/// y = scale * R x + shift.
struct DomainTransform {
  Tensor rotation;  // [n x n], orthogonal
  std::vector<float> shift;
  float scale = 1.0f;

  [[nodiscard]] std::vector<float> apply(std::span<const float> x) const {
    const std::size_t n = rotation.rows;
    std::vector<float> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += double(rotation(i, j)) * x[j];
      y[i] = static_cast<float>(scale * s + shift[i]);
    }
    return y;
  }
};

/// Largest Givens angle at shift strength 1, and the shift norm at strength 1.
inline constexpr double max_rotation_angle = 0.6 * std::numbers::pi;
inline constexpr double max_shift_norm = 4.0;
inline constexpr double max_scale_jitter = 0.25;

/// Seeded affine domain shift whose size grows with strength in [0, 1].
/// Strength 0 is the identity. The rotation is two sweeps of Givens rotations
/// over random coordinate pairings.
template <class Rng>
DomainTransform make_transform(std::size_t n, double strength, Rng& rng) {
  std::vector<double> R(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) R[i * n + i] = 1.0;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<std::size_t> perm(n);
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(perm[i - 1], perm[pick(rng)]);
    }
    for (std::size_t k = 0; k + 1 < n; k += 2) {
      const std::size_t p = perm[k], q = perm[k + 1];
      const double theta = strength * max_rotation_angle * unit(rng);
      const double c = std::cos(theta), s = std::sin(theta);
      for (std::size_t j = 0; j < n; ++j) {  // rows p, q of G * R
        const double rp = R[p * n + j], rq = R[q * n + j];
        R[p * n + j] = c * rp - s * rq;
        R[q * n + j] = s * rp + c * rq;
      }
    }
  }
  DomainTransform t;
  t.rotation = Tensor(n, n);
  for (std::size_t i = 0; i < n * n; ++i) t.rotation.data[i] = static_cast<float>(R[i]);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> dir(n);
  double norm = 0.0;
  for (auto& x : dir) {
    x = normal(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  t.shift.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.shift[i] = static_cast<float>(strength * max_shift_norm * dir[i] / norm);
  t.scale = static_cast<float>(1.0 + strength * max_scale_jitter * unit(rng));
  return t;
}

/// Parameters of a synthetic multi-domain dataset.
struct SyntheticSpec {
  std::size_t classes = 5;
  std::size_t domains = 4;
  std::size_t shots = 16;
  std::size_t feature_dim = 64;
  double shift_strength = 0.8;
  std::uint64_t seed = 0;
  std::string family = "A";  // "A" or "B": distinct names and centroid seeds
};

namespace detail {

inline const std::vector<std::string>& family_classes(std::string_view family) {
  static const std::vector<std::string> a = {"dog", "elephant", "giraffe", "guitar", "horse", "house", "person",
                                             "bicycle", "clock", "flower"};
  static const std::vector<std::string> b = {"backpack", "bottle", "chair", "computer", "lamp", "mug", "scissors",
                                             "telephone", "umbrella", "spoon"};
  return family == "B" ? b : a;
}

inline const std::vector<std::string>& family_domains(std::string_view family) {
  static const std::vector<std::string> a = {"photo", "art", "cartoon", "sketch", "clipart", "painting"};
  static const std::vector<std::string> b = {"real", "product", "infograph", "quickdraw", "mosaic", "pixel"};
  return family == "B" ? b : a;
}

}  // namespace detail

/// Class-conditional Gaussians (centroid std 3, unit noise) pushed through one
/// seeded DomainTransform per domain. Samples are ordered domain, class, shot.
inline DomainDataset gen_dataset(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw config_error("synthetic dataset needs at least 2 classes");
  if (spec.domains < 2) throw config_error("synthetic dataset needs at least 2 domains");
  if (spec.shots < 1) throw config_error("synthetic dataset needs at least 1 shot");
  if (spec.feature_dim < 2) throw config_error("synthetic dataset needs feature_dim >= 2");
  if (!(spec.shift_strength >= 0.0 && spec.shift_strength <= 1.0)) {
    throw config_error("shift_strength must lie in [0, 1]");
  }
  if (spec.family != "A" && spec.family != "B") throw config_error("unknown dataset family '" + spec.family + "'");

  std::mt19937_64 rng(fnv1a64{}.update(spec.family).update_u64(spec.seed).digest());
  DomainDataset ds;
  ds.name = "synthetic-" + spec.family;
  ds.feature_dim = spec.feature_dim;
  const auto& cnames = detail::family_classes(spec.family);
  const auto& dnames = detail::family_domains(spec.family);
  for (std::size_t k = 0; k < spec.classes; ++k) {
    ds.classes.push_back(k < cnames.size() ? cnames[k] : spec.family + "_class" + std::to_string(k));
  }
  for (std::size_t d = 0; d < spec.domains; ++d) {
    ds.domains.push_back({static_cast<std::uint32_t>(d), d < dnames.size() ? dnames[d] : "domain" + std::to_string(d)});
  }
  const Tensor centroids = Tensor::gaussian(spec.classes, spec.feature_dim, 3.0, rng);
  std::vector<DomainTransform> transforms;
  for (std::size_t d = 0; d < spec.domains; ++d) {
    transforms.push_back(make_transform(spec.feature_dim, spec.shift_strength, rng));
  }

  const std::size_t n = spec.domains * spec.classes * spec.shots;
  ds.features = Tensor(n, spec.feature_dim);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<float> x(spec.feature_dim);
  std::size_t row = 0;
  for (std::size_t d = 0; d < spec.domains; ++d) {
    for (std::size_t k = 0; k < spec.classes; ++k) {
      for (std::size_t s = 0; s < spec.shots; ++s, ++row) {
        for (std::size_t j = 0; j < spec.feature_dim; ++j) x[j] = static_cast<float>(centroids(k, j) + noise(rng));
        const auto y = transforms[d].apply(x);
        std::copy(y.begin(), y.end(), ds.features.row(row).begin());
        ds.domain_of.push_back(static_cast<std::uint32_t>(d));
        ds.label_of.push_back(static_cast<std::uint32_t>(k));
      }
    }
  }
  ds.provenance = {Provenance::kind::synthetic, spec.seed, spec.shift_strength, {}};
  return ds;
}

// ---------------------------------------------------------------------------
// On-disk format
//
// <dir>/manifest.json   {name, version: 1, feature_dim, domains: [{id, name, blob,
//                        labels, count}], classes: [...], checksums: {file: hex}}
// <blob>                u32 rows | u32 dim | rows*dim little-endian f32
// <labels>              rows x u16 class id
// ---------------------------------------------------------------------------

inline constexpr int dataset_format_version = 1;

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw io_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + p.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("failed writing " + p.string());
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

struct blob {
  std::size_t rows = 0, dim = 0;
  std::vector<float> values;
};

inline blob parse_blob(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  if (bytes.size() < 8) throw schema_error(what + ": blob shorter than its header");
  blob b;
  b.rows = get_u32(bytes, 0);
  b.dim = get_u32(bytes, 4);
  if (bytes.size() != 8 + 4 * b.rows * b.dim) {
    throw schema_error(what + ": blob size does not match its " + std::to_string(b.rows) + "x" +
                       std::to_string(b.dim) + " header");
  }
  b.values.resize(b.rows * b.dim);
  for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] = std::bit_cast<float>(get_u32(bytes, 8 + 4 * i));
  return b;
}

template <class T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw schema_error(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw schema_error(where + ": field '" + std::string(key) + "' has the wrong type");
  }
}

struct load_options {
  bool require_checksums = true;
  bool imported = false;
};

inline DomainDataset load(const std::filesystem::path& manifest_path, const load_options& opts) {
  const auto dir = manifest_path.parent_path();
  nlohmann::json m;
  try {
    const auto bytes = read_file(manifest_path);
    m = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw schema_error("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  const std::string where = manifest_path.filename().string();
  const auto version = field<int>(m, "version", where);
  if (version != dataset_format_version) {
    throw version_error("manifest version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(dataset_format_version) + ")");
  }
  DomainDataset ds;
  ds.name = field<std::string>(m, "name", where);
  ds.feature_dim = field<std::size_t>(m, "feature_dim", where);
  ds.classes = field<std::vector<std::string>>(m, "classes", where);
  if (ds.classes.size() < 2) throw schema_error(where + ": need at least two classes");
  const auto domains = field<nlohmann::json>(m, "domains", where);
  if (!domains.is_array() || domains.empty()) throw schema_error(where + ": 'domains' must be a non-empty array");
  nlohmann::json checksums = m.contains("checksums") ? m.at("checksums") : nlohmann::json::object();
  if (!checksums.is_object()) throw schema_error(where + ": 'checksums' must be an object");

  auto checked = [&](const std::string& file) {
    auto bytes = read_file(dir / file);
    if (checksums.contains(file)) {
      if (!checksums.at(file).is_string() || checksums.at(file).get<std::string>() != hex64(fnv1a(bytes))) {
        throw checksum_error("checksum mismatch for " + file);
      }
    } else if (opts.require_checksums) {
      throw schema_error(where + ": no checksum recorded for " + file);
    }
    return bytes;
  };

  std::string first_dim_domain;
  std::size_t first_dim = 0;
  std::vector<float> values;
  for (const auto& dj : domains) {
    DomainInfo info{field<std::uint32_t>(dj, "id", where), field<std::string>(dj, "name", where)};
    for (const auto& seen : ds.domains)
      if (seen.id == info.id) throw schema_error(where + ": duplicate domain id " + std::to_string(info.id));
    const auto blob_name = field<std::string>(dj, "blob", where);
    const auto label_name = dj.contains("labels") ? field<std::string>(dj, "labels", where) : blob_name + ".labels";
    const auto count = field<std::size_t>(dj, "count", where);
    const auto b = parse_blob(checked(blob_name), blob_name);
    if (first_dim_domain.empty()) {
      first_dim_domain = info.name;
      first_dim = b.dim;
    } else if (b.dim != first_dim) {
      throw dimension_error("inconsistent embedding dims: domain '" + first_dim_domain + "' has " +
                            std::to_string(first_dim) + ", domain '" + info.name + "' has " + std::to_string(b.dim));
    }
    if (b.dim != ds.feature_dim) {
      throw dimension_error("domain '" + info.name + "' has dim " + std::to_string(b.dim) + " but manifest says " +
                            std::to_string(ds.feature_dim));
    }
    if (b.rows != count) throw schema_error(where + ": domain '" + info.name + "' count disagrees with its blob");
    const auto labels = checked(label_name);
    if (labels.size() != 2 * b.rows) throw schema_error(label_name + ": expected one u16 label per row");
    for (std::size_t r = 0; r < b.rows; ++r) {
      const auto label = static_cast<std::uint32_t>(labels[2 * r] | (labels[2 * r + 1] << 8));
      if (label >= ds.classes.size()) throw schema_error(label_name + ": class id out of range");
      ds.label_of.push_back(label);
      ds.domain_of.push_back(info.id);
    }
    values.insert(values.end(), b.values.begin(), b.values.end());
    ds.domains.push_back(std::move(info));
  }
  ds.features = Tensor(ds.domain_of.size(), ds.feature_dim, std::move(values));
  if (opts.imported) {
    ds.provenance = {Provenance::kind::imported, 0, 0.0, manifest_path.string()};
  } else if (m.contains("provenance") && m["provenance"].is_object() &&
             m["provenance"].value("kind", "") == "synthetic") {
    ds.provenance = {Provenance::kind::synthetic, m["provenance"].value<std::uint64_t>("seed", 0),
                     m["provenance"].value("shift_strength", 0.0), {}};
  } else {
    ds.provenance = {Provenance::kind::imported, 0, 0.0, manifest_path.string()};
  }
  ds.validate();
  return ds;
}

inline std::filesystem::path manifest_of(const std::filesystem::path& p) {
  return std::filesystem::is_directory(p) ? p / "manifest.json" : p;
}

}  // namespace detail

/// Writes manifest.json plus one blob and one label sidecar per domain into dir.
inline void save_dataset(const DomainDataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json m;
  m["name"] = ds.name;
  m["version"] = dataset_format_version;
  m["feature_dim"] = ds.feature_dim;
  m["classes"] = ds.classes;
  m["domains"] = nlohmann::json::array();
  m["checksums"] = nlohmann::json::object();
  for (const auto& d : ds.domains) {
    const auto rows = ds.indices_of(d.id);
    std::vector<std::uint8_t> blob, labels;
    detail::put_u32(blob, static_cast<std::uint32_t>(rows.size()));
    detail::put_u32(blob, static_cast<std::uint32_t>(ds.feature_dim));
    for (auto r : rows) {
      for (float f : ds.features.row(r)) detail::put_u32(blob, std::bit_cast<std::uint32_t>(f));
      labels.push_back(static_cast<std::uint8_t>(ds.label_of[r] & 0xFF));
      labels.push_back(static_cast<std::uint8_t>(ds.label_of[r] >> 8));
    }
    const std::string blob_name = "domain_" + std::to_string(d.id) + ".bin";
    const std::string label_name = "domain_" + std::to_string(d.id) + ".labels";
    detail::write_file(dir / blob_name, blob);
    detail::write_file(dir / label_name, labels);
    m["checksums"][blob_name] = hex64(fnv1a(blob));
    m["checksums"][label_name] = hex64(fnv1a(labels));
    m["domains"].push_back({{"id", d.id}, {"name", d.name}, {"blob", blob_name}, {"labels", label_name},
                            {"count", rows.size()}});
  }
  if (ds.provenance.source == Provenance::kind::synthetic) {
    m["provenance"] = {{"kind", "synthetic"}, {"seed", ds.provenance.seed},
                       {"shift_strength", ds.provenance.shift_strength}};
  } else {
    m["provenance"] = {{"kind", "imported"}};
  }
  const std::string text = m.dump(2) + "\n";
  detail::write_file(dir / "manifest.json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

/// Strict loader for datasets written by save_dataset: every file must carry a matching checksum.
inline DomainDataset load_dataset(const std::filesystem::path& dir_or_manifest) {
  return detail::load(detail::manifest_of(dir_or_manifest), {true, false});
}

/// Loads externally produced embedding dumps in the same layout. Checksums are
/// verified when present; feature vectors are used as-is.
inline DomainDataset import_embeddings(const std::filesystem::path& manifest_path) {
  return detail::load(detail::manifest_of(manifest_path), {false, true});
}

}  // namespace fdsp::data
