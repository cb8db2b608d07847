#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pkil/error.hpp"
#include "pkil/text_util.hpp"

namespace pkil {

/// Key under which the embedding of condition `id`'s text is stored.
std::string condition_key(std::string_view condition_id);

/// Metadata carried in an embedding file header beyond `dim`.
struct EmbedderInfo {
  std::string kind;  // "hash" for the built-in embedder, free-form otherwise
  std::int64_t seed = 0;

  bool operator==(const EmbedderInfo&) const = default;
};

/// Unit-normalized vectors keyed by content id. Vectors live in one
/// contiguous row-major block; immutable once built.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool contains(std::string_view id) const;

  /// Re-normalizes `vec` to unit length. Throws on dimension mismatch, zero
  /// or non-finite vectors and duplicate ids.
  void add(std::string id, std::span<const double> vec);

  /// Throws `Error{"missing-embedding"}` when absent.
  std::span<const double> at(std::string_view id) const;
  std::optional<std::span<const double>> find(std::string_view id) const;

  const std::vector<std::string>& ids() const noexcept { return ids_; }

  const std::optional<EmbedderInfo>& embedder() const noexcept { return embedder_; }
  void set_embedder(EmbedderInfo info) { embedder_ = std::move(info); }

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
  std::optional<EmbedderInfo> embedder_;
};

/// Reads the line-delimited embedding format:
///   {"dim": N}
///   {"id": "...", "vec": [f1, ..., fN]}
EmbeddingStore load_store(const std::filesystem::path& path);
void save_store(const EmbeddingStore& store, const std::filesystem::path& path);

enum class KernelKind { cosine, gaussian };

struct KernelConfig {
  KernelKind kind = KernelKind::cosine;
  std::optional<double> scale;  // gaussian only, in [-1,1] \ {0}

  static KernelConfig cosine() { return {KernelKind::cosine, std::nullopt}; }
  /// Throws `Error{"invalid-kernel"}` for scale 0 or |scale| > 1.
  static KernelConfig gaussian(double scale);

  void validate() const;
  bool operator==(const KernelConfig&) const = default;
};

std::string to_string(KernelKind kind);
KernelKind parse_kernel_kind(std::string_view name);

/// Cosine: dot(a, b). Gaussian: exp(-(1 - dot(a, b)) / |scale|), which for
/// unit vectors is a Gaussian in squared distance (|a-b|^2 = 2 - 2 cos).
/// Both inputs must already be unit length.
double similarity(const KernelConfig& cfg, std::span<const double> a, std::span<const double> b);

/// Maps a cosine value through the kernel without recomputing the dot.
double kernel_from_cosine(const KernelConfig& cfg, double cosine) noexcept;

/// Deterministic bag-of-words feature hashing: each lower-cased token lands in
/// a seeded bucket with a seeded sign; the sum is L2-normalized. Throws
/// `Error{"zero-vector"}` when the text has no tokens (or they cancel).
std::vector<double> hash_embed(std::string_view text, std::size_t dim, std::int64_t seed);

}  // namespace pkil
