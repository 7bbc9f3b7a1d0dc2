#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "relmem/config.hpp"
#include "relmem/corpus.hpp"
#include "relmem/kgraph.hpp"
#include "relmem/metrics.hpp"
#include "relmem/model.hpp"
#include "relmem/optim.hpp"
#include "relmem/retrieval.hpp"

namespace relmem::harness {

struct OptimConfig {
  double lr_peak = 2.5e-3;
  int64_t warmup = 150;
  int64_t total_steps = 2000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
};

struct RunConfig {
  model::ModelConfig model;
  OptimConfig optim;
  int64_t batch = 1;
  uint64_t seed = 1;
  bool dynamic_extraction = true;
  model::Ablation ablation = model::Ablation::kFull;
  retrieval::Scoring scoring = retrieval::Scoring::kTfIdf;
  corpus::VocabMode vocab_mode = corpus::VocabMode::kWord;
  bool vocab_all = true;  // vocabulary over train + eval splits
  std::string corpus_train, corpus_eval, gazetteer_path, triples_path;
  int64_t gen_len = 32;
  int64_t f1_samples = 20;
  double temperature = 1.0;

  // strict "key = value" schema: unknown or duplicate keys are errors
  static RunConfig parse(const cfg::KvList& kv);
  static RunConfig parse_file(const std::string& path);
  cfg::KvList render() const;
};

// Everything a run needs, bound and ready: corpus splits, vocabulary,
// gazetteer, frozen tf-idf index, and the (dynamically growable) store.
struct Pipeline {
  std::vector<corpus::Article> train_articles, eval_articles;
  corpus::Vocabulary vocab;
  kgraph::Gazetteer gaz;
  retrieval::TfIdfIndex index;
  kgraph::TripleStore store;

  // loads from the paths in rc and patches rc.model.vocab
  static Pipeline load(RunConfig& rc);
  // in-memory variant used by tests; extracts triples from the training
  // split unless a prebuilt store is supplied
  static Pipeline build(std::vector<corpus::Article> train,
                        std::vector<corpus::Article> eval,
                        kgraph::Gazetteer gaz, RunConfig& rc,
                        std::optional<kgraph::TripleStore> store = {});
};

struct TrainLogEntry {
  int64_t step;
  double lr;
  double loss;
};

struct TrainResult {
  model::Parameters params;
  std::vector<TrainLogEntry> log;
  std::string log_tsv() const;  // "step<TAB>lr<TAB>loss" lines
};

struct TrainSegmentInfo {
  std::string article;
  int64_t seg_index = 0;
  std::vector<kgraph::RelationTriple> memory_at_scoring;
  uint64_t memory_hash_start = 0, memory_hash_end = 0;
};
using TrainHook = std::function<void(const TrainSegmentInfo&)>;

// Algorithm-1 training branch: per article the memory is reset; per segment
// the loss/backward/Adam step happen strictly before retrieval updates the
// memory. No dynamic extraction.
TrainResult train(Pipeline& pipe, const RunConfig& rc,
                  const TrainHook& hook = nullptr);

struct EvalReport {
  std::vector<metrics::TokenRecord> records;
  double total_nll = 0.0;
  int64_t tokens = 0;
  double ppl = 0.0, bpt = 0.0;
  double knowledge_ppl = 0.0, non_entity_ppl = 0.0;  // NaN when undefined
  std::string text() const;
  std::string tokens_tsv() const;
};

struct EvalSegmentInfo {
  std::string article;
  int64_t seg_index = 0;
  uint64_t memory_hash_start = 0, memory_hash_end = 0;
  std::vector<int64_t> memory_ordinals_at_scoring;
  int64_t store_size_before_dynamic = 0;
  int64_t dynamic_added = 0;
};
using EvalHook = std::function<void(const EvalSegmentInfo&)>;

// Algorithm-1 eval branch: per segment strictly EVAL, then dynamic
// extraction (when enabled), then retrieval, then the memory update.
EvalReport evaluate(Pipeline& pipe, const model::Parameters& params,
                    const RunConfig& rc, const EvalHook& hook = nullptr);

struct GenOptions {
  bool greedy = true;
  double temperature = 1.0;
  int64_t length = 32;
  uint64_t seed = 7;
};

// Autoregressive decoding with a frozen relational memory. Returns the
// continuation token ids (prompt excluded).
std::vector<int64_t> generate(const model::Parameters& params,
                              const corpus::Vocabulary& vocab,
                              const std::vector<int64_t>& prompt_ids,
                              const std::vector<kgraph::RelationTriple>& memory,
                              const GenOptions& opts,
                              model::Ablation ablation);

// Next-token distribution at the prompt end under the given memory.
std::vector<double> next_distribution(
    const model::Parameters& params, const corpus::Vocabulary& vocab,
    const std::vector<int64_t>& prompt_ids,
    const std::vector<kgraph::RelationTriple>& memory,
    model::Ablation ablation);

// Round-robin assignment of article indices to B independent lanes.
std::vector<std::vector<int64_t>> batch_schedule(int64_t n_articles,
                                                 int64_t batch);

}  // namespace relmem::harness
