#include "pkil/embedding.hpp"

#include <cmath>
#include <fstream>

#include "pkil/simd/kernels.hpp"

namespace pkil {

std::string condition_key(std::string_view condition_id) {
  return "cond:" + std::string(condition_id);
}

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error("invalid-dimension", "embedding dimension must be positive");
}

bool EmbeddingStore::contains(std::string_view id) const {
  return index_.find(std::string(id)) != index_.end();
}

void EmbeddingStore::add(std::string id, std::span<const double> vec) {
  if (vec.size() != dim_) {
    throw Error("dimension-mismatch", "embedding '" + id + "' has " + std::to_string(vec.size()) +
                                          " components, expected " + std::to_string(dim_));
  }
  if (index_.count(id) > 0) throw Error("duplicate-id", "duplicate embedding id '" + id + "'");
  const double norm2 = simd::squared_norm(vec);
  if (!std::isfinite(norm2)) throw Error("non-finite", "embedding '" + id + "' is not finite");
  if (norm2 == 0.0) throw Error("zero-vector", "embedding '" + id + "' is the zero vector");

  const std::size_t offset = data_.size();
  data_.insert(data_.end(), vec.begin(), vec.end());
  double* row = data_.data() + offset;
  simd::active().scale_inplace(row, dim_, 1.0 / std::sqrt(norm2));
  // One refinement pass brings the norm to within an ulp or two of 1.
  const double refined = simd::active().squared_norm(row, dim_);
  simd::active().scale_inplace(row, dim_, 1.0 / std::sqrt(refined));

  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
}

std::optional<std::span<const double>> EmbeddingStore::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return std::span<const double>(data_.data() + it->second * dim_, dim_);
}

std::span<const double> EmbeddingStore::at(std::string_view id) const {
  auto found = find(id);
  if (!found) throw Error("missing-embedding", "no embedding for '" + std::string(id) + "'");
  return *found;
}

EmbeddingStore load_store(const std::filesystem::path& path) {
  std::optional<EmbeddingStore> store;
  for_each_json_line(path, [&](std::size_t line, const Json& record) {
    const std::string where = path.string() + ":" + std::to_string(line) + ": ";
    if (!store) {
      if (!record.is_object() || !record.contains("dim") || !record["dim"].is_number_integer() ||
          record["dim"].get<std::int64_t>() <= 0) {
        throw Error("malformed-record", where + "first line must be {\"dim\": N} with N > 0");
      }
      store.emplace(record["dim"].get<std::size_t>());
      if (record.contains("embedder")) {
        EmbedderInfo info;
        info.kind = record["embedder"].get<std::string>();
        info.seed = record.value("seed", std::int64_t{0});
        store->set_embedder(std::move(info));
      }
      return;
    }
    if (!record.is_object() || !record.contains("id") || !record["id"].is_string() ||
        !record.contains("vec") || !record["vec"].is_array()) {
      throw Error("malformed-record", where + "expected {\"id\": string, \"vec\": [numbers]}");
    }
    std::vector<double> vec;
    vec.reserve(record["vec"].size());
    for (const auto& v : record["vec"]) {
      if (!v.is_number()) throw Error("malformed-record", where + "non-numeric vector component");
      vec.push_back(v.get<double>());
    }
    try {
      store->add(record["id"].get<std::string>(), vec);
    } catch (const Error& e) {
      throw Error(e.code(), where + e.what());
    }
  });
  if (!store) throw Error("malformed-record", path.string() + ": empty embedding file");
  return std::move(*store);
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io-error", "cannot write " + path.string());
  Json header{{"dim", store.dim()}};
  if (store.embedder()) {
    header["embedder"] = store.embedder()->kind;
    header["seed"] = store.embedder()->seed;
  }
  out << header.dump() << '\n';
  for (const auto& id : store.ids()) {
    const auto vec = store.at(id);
    Json row{{"id", id}, {"vec", std::vector<double>(vec.begin(), vec.end())}};
    out << row.dump() << '\n';
  }
  if (!out) throw Error("io-error", "short write to " + path.string());
}

KernelConfig KernelConfig::gaussian(double scale) {
  KernelConfig cfg{KernelKind::gaussian, scale};
  cfg.validate();
  return cfg;
}

void KernelConfig::validate() const {
  if (kind == KernelKind::cosine) {
    if (scale) throw Error("invalid-kernel", "cosine kernel takes no scale");
    return;
  }
  if (!scale) throw Error("invalid-kernel", "gaussian kernel requires a scale");
  if (!std::isfinite(*scale) || *scale == 0.0 || std::abs(*scale) > 1.0) {
    throw Error("invalid-kernel", "gaussian scale must lie in [-1,1] and be non-zero");
  }
}

std::string to_string(KernelKind kind) {
  return kind == KernelKind::cosine ? "cosine" : "gaussian";
}

KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "cosine" || name == "cos") return KernelKind::cosine;
  if (name == "gaussian" || name == "gauss") return KernelKind::gaussian;
  throw Error("invalid-kernel", "unknown kernel '" + std::string(name) + "' (cosine|gaussian)");
}

double kernel_from_cosine(const KernelConfig& cfg, double cosine) noexcept {
  if (cfg.kind == KernelKind::cosine) return cosine;
  return std::exp(-(1.0 - cosine) / std::abs(*cfg.scale));
}

double similarity(const KernelConfig& cfg, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error("dimension-mismatch", "similarity between vectors of dims " +
                                          std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  return kernel_from_cosine(cfg, simd::dot(a, b));
}

namespace {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<double> hash_embed(std::string_view text, std::size_t dim, std::int64_t seed) {
  if (dim < 2) throw Error("invalid-dimension", "hash_embed requires dim >= 2");
  std::vector<double> vec(dim, 0.0);
  const auto tokens = tokenize(text);
  const std::uint64_t salt = mix64(static_cast<std::uint64_t>(seed));
  for (const auto& token : tokens) {
    const std::uint64_t h = mix64(fnv1a64(token) ^ salt);
    const std::size_t bucket = static_cast<std::size_t>(h % dim);
    vec[bucket] += (h >> 63) != 0 ? 1.0 : -1.0;
  }
  const double norm2 = simd::squared_norm(vec);
  if (norm2 == 0.0) {
    throw Error("zero-vector", "text has no hashable tokens: '" + std::string(text.substr(0, 40)) + "'");
  }
  simd::active().scale_inplace(vec.data(), dim, 1.0 / std::sqrt(norm2));
  return vec;
}

}  // namespace pkil
