#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "relmem/corpus.hpp"
#include "relmem/kgraph.hpp"
#include "relmem/tensor.hpp"

namespace relmem::model {

// Which parts of a triple are serialized into the relation encoder.
enum class Ablation { kFull, kNoRelation, kNoRelationTail, kEmptyMemory };

Ablation ablation_from_string(const std::string& s);
std::string ablation_to_string(Ablation a);

struct ModelConfig {
  int64_t d = 64;          // hidden size (also the relation-encoder size)
  int64_t layers = 2;      // decoder layers L
  int64_t heads = 4;       // attention heads H
  int64_t seg_len = 32;    // text segment length N
  int64_t ext_len = 32;    // extended context length M
  int64_t mem_cap = 8;     // relational memory capacity P
  int64_t top_k = 2;       // entities retrieved per segment K
  int64_t vocab = 0;       // V, set once the vocabulary is built
  int64_t rel_buckets = 16;  // relative-position bias buckets per head
  double dropout = 0.1;
  uint64_t seed = 1;

  void validate() const;
  std::string card() const;  // human-readable dump
  std::vector<std::pair<std::string, std::string>> echo() const;
  static ModelConfig from_echo(
      const std::vector<std::pair<std::string, std::string>>& kv);
};

struct LayerParams {
  Tensor ln1_g, ln1_b;  // attention sublayer norm
  Tensor wq, wk, wv, wo;
  Tensor rel_bias;  // [heads * rel_buckets] learned relative-position bias
  Tensor ln2_g, ln2_b;  // feed-forward sublayer norm
  Tensor w1, b1, w2, b2;
};

// All learned parameters. w_e is shared between input lookup and the output
// projection; w_g maps the [h, m] concatenation (2d) to the d gate logits.
struct Parameters {
  ModelConfig cfg;
  Tensor w_e;  // [V, d]
  std::vector<LayerParams> layers;
  Tensor ln_f_g, ln_f_b;  // final norm
  Tensor lstm_wx, lstm_wh, lstm_b;  // relation encoder, gate order i,f,g,o
  Tensor w_g;  // [2d, d]

  static Parameters init(const ModelConfig& cfg);
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> all() const;
  void zero_grads();
  uint64_t values_hash() const;
};

// Gradient-detached hidden states of the previous segment, one entry per
// layer level (the inputs each layer consumed), up to ext_len positions.
struct SegmentCache {
  std::vector<Tensor> levels;
  int64_t len() const { return levels.empty() ? 0 : levels[0].rows(); }
  bool empty() const { return levels.empty(); }
  void clear() { levels.clear(); }
};

struct TxlOut {
  Tensor h;           // [T, d] final-layer states
  SegmentCache next;  // cache for the following segment
};

// Masked multi-head self-attention over [cache ++ segment] with a learned
// relative-position bias, pre-norm residual blocks, GELU feed-forward.
// The cache is consumed as constants (stop-gradient contract); the new
// cache holds the last min(ext_len, T) positions of this segment's states.
TxlOut txl_forward(Tape& tape, const std::vector<int64_t>& ids,
                   const SegmentCache& cache, const Parameters& params,
                   Rng* dropout_rng);

// distance -> bucket, exact below rel_buckets/2 then log-spaced, capped
int64_t rel_bucket(int64_t dist, int64_t n_buckets, int64_t cap);

// "head, relation, tail" (per the ablation) tokenized and truncated to
// max_tokens; throws when the serialization encodes to all-unknowns.
std::vector<int64_t> serialize_triple(const kgraph::RelationTriple& t,
                                      const corpus::Vocabulary& vocab,
                                      Ablation ablation,
                                      int64_t max_tokens = 32);

// LSTM over w_e embeddings of the token sequence; returns the final hidden
// state [1, d]. Throws on an empty sequence.
Tensor encode_relation(Tape& tape, const std::vector<int64_t>& ids,
                       const Parameters& params);

// m_t rows: scaled dot-product attention of each h row over the encoding
// rows, scale 1/sqrt(d). encodings must be non-empty.
Tensor attend_memory(Tape& tape, const Tensor& h, const Tensor& encodings);

struct Fused {
  Tensor z;  // gated combination
  Tensor g;  // gate values in (0,1)
};
// g = sigmoid([h, m] w_g); z = g*h + (1-g)*m
Fused gate_fuse(Tape& tape, const Tensor& h, const Tensor& m,
                const Parameters& params);

// softmax(w_e z) rows; the tied-embedding output distribution
Tensor predict_next(Tape& tape, const Tensor& z, const Parameters& params);

// logits = z w_e^T (shared by the loss path and predict_next)
Tensor output_logits(Tape& tape, const Tensor& z, const Parameters& params);

}  // namespace relmem::model
