#include <doctest.h>

#include <cmath>
#include <random>

#include "pkil/embedding.hpp"
#include "support.hpp"

using namespace pkil;

namespace {

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("store normalizes on ingest") {
  EmbeddingStore store(3);
  store.add("a", std::vector<double>{3.0, 0.0, 4.0});
  const auto v = store.at("a");
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[2] == doctest::Approx(0.8));
  CHECK(norm(v) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(store.contains("a"));
  CHECK_FALSE(store.find("b").has_value());
  CHECK(error_code([&] { store.at("b"); }) == "missing-embedding");
}

TEST_CASE("store rejects bad vectors") {
  EmbeddingStore store(2);
  CHECK(error_code([&] { store.add("a", std::vector<double>{1.0}); }) == "dimension-mismatch");
  CHECK(error_code([&] { store.add("a", std::vector<double>{0.0, 0.0}); }) == "zero-vector");
  CHECK(error_code([&] { store.add("a", std::vector<double>{NAN, 1.0}); }) == "non-finite");
  store.add("a", std::vector<double>{1.0, 1.0});
  CHECK(error_code([&] { store.add("a", std::vector<double>{1.0, 0.0}); }) == "duplicate-id");
}

TEST_CASE("file round-trip keeps vectors and header metadata") {
  testing::TempDir dir;
  std::mt19937_64 rng(5);
  EmbeddingStore store(16);
  store.set_embedder({"hash", 42});
  for (int i = 0; i < 10; ++i) store.add("id" + std::to_string(i), testing::random_unit(rng, 16));
  save_store(store, dir / "s.emb");
  const auto back = load_store(dir / "s.emb");
  CHECK(back.dim() == 16);
  CHECK(back.ids() == store.ids());
  REQUIRE(back.embedder().has_value());
  CHECK(back.embedder()->kind == "hash");
  CHECK(back.embedder()->seed == 42);
  for (const auto& id : store.ids()) {
    const auto a = store.at(id);
    const auto b = back.at(id);
    for (std::size_t i = 0; i < 16; ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("externally produced files load with unit norms") {
  // Raw, unnormalized rows as an external exporter would write them.
  testing::TempDir dir;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 3.0);
  std::string text = "{\"dim\": 8}\n";
  for (int i = 0; i < 10; ++i) {
    text += "{\"id\": \"t" + std::to_string(i) + "\", \"vec\": [";
    for (int k = 0; k < 8; ++k) text += (k ? ", " : "") + std::to_string(g(rng));
    text += "]}\n";
  }
  write_file(dir / "x.emb", text);
  const auto store = load_store(dir / "x.emb");
  CHECK(store.size() == 10);
  for (const auto& id : store.ids()) CHECK(std::abs(norm(store.at(id)) - 1.0) <= 1e-9);
}

TEST_CASE("malformed files report line numbers") {
  testing::TempDir dir;
  write_file(dir / "a.emb", "{\"dim\": 2}\n{\"id\": \"a\", \"vec\": [1, 0]}\n{\"id\": \"b\", \"vec\": [1]}\n");
  try {
    load_store(dir / "a.emb");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  write_file(dir / "b.emb", "{\"dim\": 2}\n{\"id\": \"a\", \"vec\": [1, 0]\n");
  CHECK(error_code([&] { load_store(dir / "b.emb"); }) == "malformed-record");
  write_file(dir / "c.emb", "{\"id\": \"a\", \"vec\": [1, 0]}\n");
  CHECK_FALSE(error_code([&] { load_store(dir / "c.emb"); }).empty());
  CHECK(error_code([&] { load_store(dir / "missing.emb"); }) == "file-not-found");
}

TEST_CASE("kernel configuration") {
  CHECK_NOTHROW(KernelConfig::gaussian(0.5));
  CHECK_NOTHROW(KernelConfig::gaussian(-1.0));
  CHECK(error_code([] { KernelConfig::gaussian(0.0); }) == "invalid-kernel");
  CHECK(error_code([] { KernelConfig::gaussian(1.5); }) == "invalid-kernel");
  CHECK(parse_kernel_kind("cos") == KernelKind::cosine);
  CHECK(parse_kernel_kind("gauss") == KernelKind::gaussian);
  CHECK(parse_kernel_kind("gaussian") == KernelKind::gaussian);
  CHECK_THROWS(parse_kernel_kind("rbf2"));
}

TEST_CASE("similarity kernels") {
  std::mt19937_64 rng(7);
  const auto a = testing::random_unit(rng, 32);
  const auto b = testing::random_unit(rng, 32);
  double dot = 0.0, dist2 = 0.0;
  for (std::size_t i = 0; i < 32; ++i) {
    dot += a[i] * b[i];
    dist2 += (a[i] - b[i]) * (a[i] - b[i]);
  }
  CHECK(similarity(KernelConfig::cosine(), a, b) == doctest::Approx(dot).epsilon(1e-12));
  // Gaussian in squared Euclidean distance for unit vectors: exp(-|a-b|^2 / (2|scale|)).
  for (double scale : {0.5, -0.25, 1.0}) {
    const double want = std::exp(-dist2 / (2.0 * std::abs(scale)));
    CHECK(similarity(KernelConfig::gaussian(scale), a, b) == doctest::Approx(want).epsilon(1e-10));
  }
  CHECK(similarity(KernelConfig::gaussian(0.5), a, a) == doctest::Approx(1.0));
  CHECK(similarity(KernelConfig::cosine(), a, b) == similarity(KernelConfig::cosine(), b, a));
}

TEST_CASE("hash embedder") {
  const auto a = hash_embed("I wish I were dead", 512, 7);
  const auto b = hash_embed("i WISH i were DEAD!!", 512, 7);
  const auto c = hash_embed("I wish I were dead", 512, 8);
  CHECK(a == b);  // case and punctuation are not tokens
  CHECK(a != c);
  CHECK(norm(a) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(error_code([] { hash_embed("  ... !! ", 64, 1); }) == "zero-vector");
  CHECK(error_code([] { hash_embed("", 64, 1); }) == "zero-vector");
  // Shared words raise similarity.
  const auto d = hash_embed("wish to be dead", 512, 7);
  const auto e = hash_embed("the bus was late", 512, 7);
  double ad = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < 512; ++i) {
    ad += a[i] * d[i];
    ae += a[i] * e[i];
  }
  CHECK(ad > ae);
}

TEST_CASE("condition keys") { CHECK(condition_key("C1") == "cond:C1"); }
