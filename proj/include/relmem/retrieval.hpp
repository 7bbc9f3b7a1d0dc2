#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "relmem/corpus.hpp"
#include "relmem/kgraph.hpp"
#include "relmem/rng.hpp"

namespace relmem::retrieval {

struct EntityMention {
  int64_t entity = -1;  // gazetteer index
  int64_t count = 0;    // mentions in the observed segment
  std::vector<int64_t> positions;  // word positions of each mention start
  int64_t first_pos = 0;
};

// Longest-match gazetteer tagging aggregated per entity, ordered by first
// mention position.
std::vector<EntityMention> tag_entities(const std::vector<std::string>& words,
                                        const kgraph::Gazetteer& gaz);

// Document frequencies over the training split, frozen after construction.
class TfIdfIndex {
 public:
  static TfIdfIndex build(const std::vector<corpus::Article>& train_articles,
                          const kgraph::Gazetteer& gaz);
  // empty index for harnesses that score by frequency/random only
  static TfIdfIndex empty(const kgraph::Gazetteer& gaz);

  int64_t article_count() const { return articles_; }
  int64_t df(int64_t entity_idx) const;
  // ln((1 + A) / (1 + df)); defined for df = 0 (dynamic-only entities)
  double idf(int64_t entity_idx) const;

 private:
  int64_t articles_ = 0;
  std::vector<int64_t> df_;
};

enum class Scoring { kTfIdf, kFrequency, kRandom };

struct ScoredEntity {
  int64_t entity;
  double score;
  int64_t first_pos;
};

// tf-idf: count * idf; frequency: count; random: seeded uniform draw per
// mention (rng required for kRandom).
std::vector<ScoredEntity> score_mentions(
    const std::vector<EntityMention>& mentions, const TfIdfIndex& index,
    Scoring scoring, Rng* rng);

// K highest scores; ties by (earlier first mention, then lexicographic
// canonical name). Returns fewer when fewer exist.
std::vector<int64_t> select_top_k(const std::vector<ScoredEntity>& scored,
                                  int64_t k, const kgraph::Gazetteer& gaz);

// Concatenated one-hop lookups in entity-rank order, deduplicated keeping
// the first occurrence.
std::vector<kgraph::RelationTriple> retrieve(
    const std::vector<int64_t>& entities, const kgraph::Gazetteer& gaz,
    const kgraph::TripleStore& store);

// Capacity-P FIFO buffer of retrieved triples; reset at article boundaries.
class RelationalMemory {
 public:
  RelationalMemory(int64_t capacity, uint64_t seed);

  // empties the queue and reseeds the overflow rng (article boundary)
  void reset(uint64_t seed);
  // overflow batches (> capacity) replace the queue with a uniform random
  // subset of exactly P candidates; otherwise candidates are appended FIFO,
  // already-resident triples are refreshed to the newest position, and the
  // oldest entries are evicted down to capacity
  void update(const std::vector<kgraph::RelationTriple>& candidates);

  int64_t capacity() const { return cap_; }
  size_t size() const { return queue_.size(); }
  const std::vector<kgraph::RelationTriple>& resident() const {
    return queue_;
  }
  uint64_t content_hash() const;
  void dump_tsv(const std::string& path) const;

 private:
  int64_t cap_;
  Rng rng_;
  std::vector<kgraph::RelationTriple> queue_;  // oldest first
  std::unordered_set<std::string> keys_;
};

// Per-token flags marking tokens inside gazetteer mentions, for metric
// records. Works for both char and word vocabularies via decoded spans.
std::vector<uint8_t> entity_token_flags(const std::vector<int64_t>& ids,
                                        const corpus::Vocabulary& vocab,
                                        const kgraph::Gazetteer& gaz);

}  // namespace relmem::retrieval
