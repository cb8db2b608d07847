#pragma once

// Synthetic labelled posts for a process-knowledge file. Each post picks a
// label uniformly, sets its truths to the conditions of a rule producing that
// label (none for the fallback) and writes one noisy paraphrase per true
// condition among neutral filler. Fully determined by the seed.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pkil/dataset.hpp"
#include "pkil/embedding.hpp"
#include "pkil/pk_dsl.hpp"

namespace pkil {

struct SynthConfig {
  std::size_t posts = 400;
  std::int64_t seed = 7;
  std::size_t dim = 512;
  double drop_rate = 0.2;       // chance of dropping each condition token
  double positive_rate = 0.3;   // chance of a positive-sentiment sentence
  std::size_t min_filler = 1;
  std::size_t max_filler = 3;
};

struct SynthCorpus {
  std::vector<LabeledPost> posts;          // label and conditions set
  std::map<std::string, bool> sentiment;   // lexicon oracle per post id
  EmbeddingStore store;                    // posts by id plus cond:<id>
};

SynthCorpus synthesize(const ProcessKnowledge& pk, const SynthConfig& cfg);

/// Hash-embeds every condition text and every post (under its id) into a new
/// store tagged with the hash embedder and `seed`.
EmbeddingStore embed_corpus(const ProcessKnowledge& pk, const std::vector<LabeledPost>& posts, std::size_t dim,
                            std::int64_t seed);

}  // namespace pkil
