#include "pkil/synth.hpp"

#include <array>
#include <random>

#include "pkil/sentiment.hpp"

namespace pkil {
namespace {

constexpr std::array<std::string_view, 8> kOpeners = {
    "lately", "honestly", "some days", "i guess", "most nights", "again", "these weeks", "truthfully"};

constexpr std::array<std::string_view, 12> kFiller = {
    "the bus was late this morning",
    "my cat knocked a mug off the table",
    "it rained all afternoon",
    "work has been busy with the quarterly report",
    "i cooked pasta for dinner",
    "the neighbours are painting their fence",
    "my phone screen cracked on monday",
    "we watched a film about ships",
    "the library closes early on sundays",
    "i walked the dog around the park",
    "my brother moved to another city",
    "the coffee machine at the office broke"};

constexpr std::array<std::string_view, 6> kPositive = {
    "i am grateful for my friends and feel hopeful",
    "today felt calm and good",
    "i laughed with my sister and felt glad",
    "i am proud of a small step and feel better",
    "a kind message made me smile and feel loved",
    "the walk felt peaceful and i enjoyed it"};

class Rng {
 public:
  explicit Rng(std::int64_t seed) : engine_(static_cast<std::uint64_t>(seed) * 0x9E3779B97F4A7C15ULL + 1) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

std::string condition_sentence(const Condition& c, Rng& rng, double drop_rate) {
  const auto tokens = tokenize(c.text);
  std::vector<std::string> kept;
  for (const auto& t : tokens) {
    if (rng.unit() >= drop_rate) kept.push_back(t);
  }
  if (kept.empty()) kept.push_back(tokens[rng.below(tokens.size())]);
  std::string s(kOpeners[rng.below(kOpeners.size())]);
  for (const auto& t : kept) s += " " + t;
  return s;
}

}  // namespace

EmbeddingStore embed_corpus(const ProcessKnowledge& pk, const std::vector<LabeledPost>& posts, std::size_t dim,
                            std::int64_t seed) {
  EmbeddingStore store(dim);
  store.set_embedder({"hash", seed});
  for (const auto& c : pk.conditions()) store.add(condition_key(c.id), hash_embed(c.text, dim, seed));
  for (const auto& p : posts) store.add(p.id, hash_embed(p.text, dim, seed));
  return store;
}

SynthCorpus synthesize(const ProcessKnowledge& pk, const SynthConfig& cfg) {
  if (cfg.posts == 0) throw Error("invalid-argument", "synthesize needs at least one post");
  if (cfg.min_filler > cfg.max_filler) throw Error("invalid-argument", "min_filler exceeds max_filler");

  // Candidate truth sets per label: each rule's conditions, empty for the
  // fallback. A rule shadowed by an earlier one is skipped.
  std::map<std::string, std::vector<std::vector<std::size_t>>> choices;
  for (const auto& rule : pk.rules()) {
    std::vector<std::size_t> idx;
    std::vector<bool> truths(pk.condition_count());
    for (const auto& id : rule.conditions) {
      idx.push_back(*pk.condition_index(id));
      truths[idx.back()] = true;
    }
    if (hard_label(pk, truths).label == rule.label) choices[rule.label].push_back(std::move(idx));
  }
  if (pk.fallback_label()) choices[*pk.fallback_label()].push_back({});
  std::vector<std::string> labels;
  for (const auto& l : pk.label_set()) {
    if (choices.count(l) != 0) labels.push_back(l);
  }

  Rng rng(cfg.seed);
  SynthCorpus corpus{{}, {}, EmbeddingStore(cfg.dim)};
  for (std::size_t i = 0; i < cfg.posts; ++i) {
    const auto& label = labels[rng.below(labels.size())];
    const auto& options = choices[label];
    const auto& chosen = options[rng.below(options.size())];

    std::vector<std::string> sentences;
    for (const auto j : chosen) sentences.push_back(condition_sentence(pk.conditions()[j], rng, cfg.drop_rate));
    const std::size_t filler = cfg.min_filler + rng.below(cfg.max_filler - cfg.min_filler + 1);
    for (std::size_t f = 0; f < filler; ++f) sentences.emplace_back(kFiller[rng.below(kFiller.size())]);
    if (rng.unit() < cfg.positive_rate) sentences.emplace_back(kPositive[rng.below(kPositive.size())]);
    rng.shuffle(sentences);

    std::string text;
    for (auto& s : sentences) {
      s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
      text += (text.empty() ? "" : " ") + s + ".";
    }

    LabeledPost post;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%04zu", i);
    post.id = id;
    post.text = std::move(text);
    post.label = label;
    ConditionTruths truths;
    for (const auto& c : pk.conditions()) truths[c.id] = false;
    for (const auto j : chosen) truths[pk.conditions()[j].id] = true;
    post.conditions = std::move(truths);
    corpus.sentiment[post.id] = lexicon_positive(post.text);
    corpus.posts.push_back(std::move(post));
  }
  corpus.store = embed_corpus(pk, corpus.posts, cfg.dim, cfg.seed);
  return corpus;
}

}  // namespace pkil
