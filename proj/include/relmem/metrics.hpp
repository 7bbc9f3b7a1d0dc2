#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "relmem/corpus.hpp"
#include "relmem/kgraph.hpp"

namespace relmem::metrics {

struct TokenRecord {
  int64_t position = 0;  // global position within the evaluated stream
  int64_t token = 0;
  double nll = 0.0;   // nats, of predicting this token
  bool entity = false;  // token lies inside a gazetteer mention
  // mean over the d gate dimensions of the gate that produced this token's
  // distribution; 1.0 at bypass positions (empty memory)
  double gate = 1.0;
  bool bypass = true;
  std::string article;
  int64_t segment = 0;
};

double perplexity(const std::vector<TokenRecord>& records);
double bits_per_token(const std::vector<TokenRecord>& records);
// perplexity over entity-flagged tokens only; throws when none qualify
double knowledge_perplexity(const std::vector<TokenRecord>& records);
double non_entity_perplexity(const std::vector<TokenRecord>& records);

struct GateStats {
  double entity_mean = 0.0;
  double non_entity_mean = 0.0;
  std::array<int64_t, 20> histogram{};  // over [0,1], non-bypass records
  int64_t entity_count = 0;
  int64_t non_entity_count = 0;
};
// bypass positions are excluded from the means and the histogram
GateStats gate_stats(const std::vector<TokenRecord>& records);

// F1 between the entity sets tagged in two word streams. P and R are 0 for
// empty sets; F1 is 0 when P + R is 0.
double knowledge_f1_sets(const std::vector<std::string>& generated_words,
                         const std::vector<std::string>& reference_words,
                         const kgraph::Gazetteer& gaz);

// Mean F1 over sampled continuations; sample_words(i) must return the i-th
// generated continuation as word tokens.
enum class F1Reduce { kMean, kMax, kPooled };
double knowledge_f1(
    const std::function<std::vector<std::string>(int64_t)>& sample_words,
    const std::vector<std::string>& reference_words,
    const kgraph::Gazetteer& gaz, int64_t n_samples,
    F1Reduce reduce = F1Reduce::kMean);

struct TripleEdit {
  int64_t index = 0;  // position in the probe memory
  kgraph::RelationTriple replacement;
};

struct InterventionProbe {
  std::string prompt;
  std::vector<kgraph::RelationTriple> memory;
  std::vector<TripleEdit> edits;
};

struct InterventionResult {
  std::string before;
  struct PerEdit {
    std::string after;
    int64_t tail_first_token_rank = 0;  // 1-based in the next-token dist
    bool changed = false;
  };
  std::vector<PerEdit> per_edit;
  std::string text() const;
};

// decode(memory) must greedy-decode the probe prompt under that memory;
// next_dist(memory) must return the next-token distribution at the prompt
// end. Edits touch only the probe's memory copy.
InterventionResult causal_intervene(
    const InterventionProbe& probe,
    const std::function<std::string(
        const std::vector<kgraph::RelationTriple>&)>& decode,
    const std::function<std::vector<double>(
        const std::vector<kgraph::RelationTriple>&)>& next_dist,
    const corpus::Vocabulary& vocab);

// "metric<TAB>split<TAB>value" lines
std::string metrics_tsv(
    const std::vector<std::tuple<std::string, std::string, double>>& rows);
// "bin_low<TAB>count" lines for external plotting
std::string histogram_tsv(const GateStats& stats);

}  // namespace relmem::metrics
