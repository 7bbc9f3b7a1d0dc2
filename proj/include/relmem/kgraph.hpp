#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "relmem/corpus.hpp"

namespace relmem::kgraph {

enum class Provenance { kTraining, kDynamic, kFile };

struct RelationTriple {
  std::string head;
  std::string relation;
  std::string tail;
  Provenance provenance = Provenance::kFile;
  int64_t ordinal = -1;  // assigned by the store on insertion
};

std::string fold_case(const std::string& s);
std::string collapse_ws(const std::string& s);
// dedup/residency key: case-folded, whitespace-collapsed fields
std::string canonical_key(const std::string& head, const std::string& relation,
                          const std::string& tail);
std::string canonical_key(const RelationTriple& t);

// Entity surface strings with canonical casing. Provides the longest-match
// mention finder shared by extraction, retrieval tagging, and metrics.
class Gazetteer {
 public:
  static Gazetteer load(const std::string& path);  // one entity per line
  static Gazetteer from_entities(std::vector<std::string> names);

  size_t size() const { return entities_.size(); }
  const std::vector<std::string>& entities() const { return entities_; }
  const std::string& canonical(int64_t idx) const { return entities_[idx]; }
  int64_t index_of(const std::string& name) const;  // -1 when absent

  struct Mention {
    int64_t entity;  // gazetteer index
    int64_t pos;     // first word position
    int64_t len;     // word count
  };
  // Longest-match, left-to-right, case-insensitive matching over word
  // tokens; spans never overlap.
  std::vector<Mention> find_mentions(
      const std::vector<std::string>& words) const;

 private:
  std::vector<std::string> entities_;
  std::vector<std::vector<std::string>> folded_words_;
  std::unordered_map<std::string, std::vector<int64_t>> by_first_word_;
  void index();
};

// Append-only deduplicated triple set indexed by both head and tail.
class TripleStore {
 public:
  // returns true when the triple was new; assigns the insertion ordinal
  bool add(RelationTriple t);
  size_t size() const { return triples_.size(); }
  const std::vector<RelationTriple>& triples() const { return triples_; }
  // all triples containing the entity as head or tail, insertion order
  std::vector<RelationTriple> lookup(const std::string& entity) const;
  bool contains(const RelationTriple& t) const;
  uint64_t content_hash() const;
  void export_tsv(const std::string& path) const;

 private:
  std::vector<RelationTriple> triples_;
  std::unordered_map<std::string, std::vector<int64_t>> index_;
  std::unordered_set<std::string> dedup_;
};

// Sentence split of a word-token stream on ./!/? (delimiter kept).
std::vector<std::vector<std::string>> split_sentences(
    const std::vector<std::string>& words);

// Deterministic pattern extractor standing in for OpenIE: for gazetteer
// mention pairs (A, B), a connecting span of <= 8 tokens containing a
// verb-like token becomes (A, trimmed span, B); "A is/was a/the X" becomes
// (A, "is", X).
std::vector<RelationTriple> extract_triples(
    const std::vector<std::string>& sentence, const Gazetteer& gaz);

// TSV import: head<TAB>relation<TAB>tail per line.
TripleStore load_triples(const std::string& path);

// Union of extract_triples over every sentence of every training article.
TripleStore extract_from_training_set(
    const std::vector<corpus::Article>& train_articles, const Gazetteer& gaz);

// Appends previously unseen triples with provenance kDynamic.
void add_dynamic(TripleStore& store,
                 const std::vector<RelationTriple>& triples);

struct ExtractionReport {
  int64_t entities = 0;
  int64_t triples = 0;
  double triples_per_entity = 0.0;
  std::string text() const;
};
ExtractionReport extraction_report(const TripleStore& store);

}  // namespace relmem::kgraph
