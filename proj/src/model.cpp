#include "relmem/model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace relmem::model {

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::kFull;
  if (s == "no_relation") return Ablation::kNoRelation;
  if (s == "no_relation_tail") return Ablation::kNoRelationTail;
  if (s == "empty") return Ablation::kEmptyMemory;
  throw std::invalid_argument("unknown ablation: " + s);
}

std::string ablation_to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoRelation: return "no_relation";
    case Ablation::kNoRelationTail: return "no_relation_tail";
    case Ablation::kEmptyMemory: return "empty";
  }
  throw std::logic_error("bad ablation value");
}

void ModelConfig::validate() const {
  if (d <= 0 || layers <= 0 || heads <= 0 || seg_len <= 0 || ext_len <= 0 ||
      mem_cap <= 0 || top_k <= 0 || vocab <= 0 || rel_buckets <= 0) {
    throw std::invalid_argument("model config: all sizes must be positive");
  }
  if (d % heads != 0) {
    throw std::invalid_argument("model config: d must be divisible by heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("model config: dropout must be in [0,1)");
  }
}

std::string ModelConfig::card() const {
  std::ostringstream ss;
  ss << "model card\n"
     << "  hidden size d      = " << d << "\n"
     << "  layers L           = " << layers << "\n"
     << "  heads H            = " << heads << "\n"
     << "  segment length N   = " << seg_len << "\n"
     << "  extended context M = " << ext_len << "\n"
     << "  memory capacity P  = " << mem_cap << "\n"
     << "  top entities K     = " << top_k << "\n"
     << "  vocabulary V       = " << vocab << "\n"
     << "  rel bias buckets   = " << rel_buckets << "\n"
     << "  dropout            = " << dropout
     << "  (applied after each sublayer output)\n"
     << "  seed               = " << seed << "\n";
  return ss.str();
}

std::vector<std::pair<std::string, std::string>> ModelConfig::echo() const {
  auto num = [](auto v) { return std::to_string(v); };
  std::ostringstream drop;
  drop.precision(17);
  drop << dropout;
  return {{"d", num(d)},
          {"layers", num(layers)},
          {"heads", num(heads)},
          {"seg_len", num(seg_len)},
          {"ext_len", num(ext_len)},
          {"mem_cap", num(mem_cap)},
          {"top_k", num(top_k)},
          {"vocab", num(vocab)},
          {"rel_buckets", num(rel_buckets)},
          {"dropout", drop.str()},
          {"seed", num(seed)}};
}

ModelConfig ModelConfig::from_echo(
    const std::vector<std::pair<std::string, std::string>>& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "d") c.d = std::stoll(v);
    else if (k == "layers") c.layers = std::stoll(v);
    else if (k == "heads") c.heads = std::stoll(v);
    else if (k == "seg_len") c.seg_len = std::stoll(v);
    else if (k == "ext_len") c.ext_len = std::stoll(v);
    else if (k == "mem_cap") c.mem_cap = std::stoll(v);
    else if (k == "top_k") c.top_k = std::stoll(v);
    else if (k == "vocab") c.vocab = std::stoll(v);
    else if (k == "rel_buckets") c.rel_buckets = std::stoll(v);
    else if (k == "dropout") c.dropout = std::stod(v);
    else if (k == "seed") c.seed = std::stoull(v);
    else throw std::invalid_argument("model config echo: unknown key " + k);
  }
  c.validate();
  return c;
}

Parameters Parameters::init(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const double s = 0.02;
  const int64_t d = cfg.d;
  Parameters p;
  p.cfg = cfg;
  p.w_e = Tensor::randn({cfg.vocab, d}, s, rng, true);
  for (int64_t l = 0; l < cfg.layers; ++l) {
    LayerParams lp;
    lp.ln1_g = Tensor::full({d}, 1.0, true);
    lp.ln1_b = Tensor::zeros({d}, true);
    lp.wq = Tensor::randn({d, d}, s, rng, true);
    lp.wk = Tensor::randn({d, d}, s, rng, true);
    lp.wv = Tensor::randn({d, d}, s, rng, true);
    lp.wo = Tensor::randn({d, d}, s, rng, true);
    lp.rel_bias = Tensor::zeros({cfg.heads * cfg.rel_buckets}, true);
    lp.ln2_g = Tensor::full({d}, 1.0, true);
    lp.ln2_b = Tensor::zeros({d}, true);
    lp.w1 = Tensor::randn({d, 4 * d}, s, rng, true);
    lp.b1 = Tensor::zeros({4 * d}, true);
    lp.w2 = Tensor::randn({4 * d, d}, s, rng, true);
    lp.b2 = Tensor::zeros({d}, true);
    p.layers.push_back(std::move(lp));
  }
  p.ln_f_g = Tensor::full({d}, 1.0, true);
  p.ln_f_b = Tensor::zeros({d}, true);
  p.lstm_wx = Tensor::randn({d, 4 * d}, s, rng, true);
  p.lstm_wh = Tensor::randn({d, 4 * d}, s, rng, true);
  p.lstm_b = Tensor::zeros({4 * d}, true);
  p.w_g = Tensor::randn({2 * d, d}, s, rng, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> Parameters::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed.w_e", w_e);
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const LayerParams& lp = layers[l];
    out.emplace_back(p + "ln1_g", lp.ln1_g);
    out.emplace_back(p + "ln1_b", lp.ln1_b);
    out.emplace_back(p + "wq", lp.wq);
    out.emplace_back(p + "wk", lp.wk);
    out.emplace_back(p + "wv", lp.wv);
    out.emplace_back(p + "wo", lp.wo);
    out.emplace_back(p + "rel_bias", lp.rel_bias);
    out.emplace_back(p + "ln2_g", lp.ln2_g);
    out.emplace_back(p + "ln2_b", lp.ln2_b);
    out.emplace_back(p + "w1", lp.w1);
    out.emplace_back(p + "b1", lp.b1);
    out.emplace_back(p + "w2", lp.w2);
    out.emplace_back(p + "b2", lp.b2);
  }
  out.emplace_back("final.ln_g", ln_f_g);
  out.emplace_back("final.ln_b", ln_f_b);
  out.emplace_back("encoder.lstm_wx", lstm_wx);
  out.emplace_back("encoder.lstm_wh", lstm_wh);
  out.emplace_back("encoder.lstm_b", lstm_b);
  out.emplace_back("gate.w_g", w_g);
  return out;
}

std::vector<Tensor> Parameters::all() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

void Parameters::zero_grads() {
  for (Tensor& t : all()) t.zero_grad();
}

uint64_t Parameters::values_hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const Tensor& t : all()) {
    for (double x : t.v()) {
      uint64_t bits;
      static_assert(sizeof(bits) == sizeof(x));
      std::memcpy(&bits, &x, sizeof(bits));
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

int64_t rel_bucket(int64_t dist, int64_t n_buckets, int64_t cap) {
  if (dist < 0) throw std::invalid_argument("rel_bucket: negative distance");
  const int64_t exact = n_buckets / 2;
  if (dist < exact) return dist;
  const double log_ratio = std::log(static_cast<double>(dist) /
                                    static_cast<double>(exact)) /
                           std::log(static_cast<double>(std::max<int64_t>(
                                        cap, exact + 1)) /
                                    static_cast<double>(exact));
  const int64_t b =
      exact + static_cast<int64_t>(log_ratio *
                                   static_cast<double>(n_buckets - exact));
  return std::min(b, n_buckets - 1);
}

TxlOut txl_forward(Tape& tape, const std::vector<int64_t>& ids,
                   const SegmentCache& cache, const Parameters& params,
                   Rng* dropout_rng) {
  const ModelConfig& cfg = params.cfg;
  const int64_t t_len = static_cast<int64_t>(ids.size());
  if (t_len == 0) throw std::invalid_argument("txl_forward: empty segment");
  if (t_len > cfg.seg_len) {
    throw std::invalid_argument("txl_forward: segment longer than N");
  }
  if (!cache.empty() &&
      static_cast<int64_t>(cache.levels.size()) != cfg.layers) {
    throw std::invalid_argument("txl_forward: cache level count mismatch");
  }
  const int64_t d = cfg.d;
  const int64_t dh = d / cfg.heads;
  const int64_t mc = cache.len();
  const int64_t s_len = mc + t_len;
  const double rate = dropout_rng ? cfg.dropout : 0.0;

  // causal mask: query t (global mc+t) may attend to keys <= mc+t
  std::vector<uint8_t> mask(static_cast<size_t>(t_len * s_len), 0);
  for (int64_t i = 0; i < t_len; ++i) {
    for (int64_t j = 0; j <= mc + i; ++j) mask[i * s_len + j] = 1;
  }
  // relative-position bias gather indices per head
  const int64_t cap = cfg.ext_len + cfg.seg_len;
  std::vector<int64_t> bucket(static_cast<size_t>(t_len * s_len), 0);
  for (int64_t i = 0; i < t_len; ++i) {
    for (int64_t j = 0; j <= mc + i; ++j) {
      bucket[i * s_len + j] = rel_bucket(mc + i - j, cfg.rel_buckets, cap);
    }
  }

  Tensor x = tape.gather_rows(params.w_e, ids);  // [T,d]
  SegmentCache next;
  for (int64_t l = 0; l < cfg.layers; ++l) {
    const LayerParams& lp = params.layers[l];
    // record this layer's input states for the next segment's cache
    {
      const int64_t keep = std::min<int64_t>(cfg.ext_len, t_len);
      Tensor snap = Tensor::zeros({keep, d});
      std::copy(x.v().end() - keep * d, x.v().end(), snap.v().begin());
      next.levels.push_back(std::move(snap));
    }
    Tensor full = cache.empty()
                      ? x
                      : tape.concat_rows({cache.levels[l], x});  // [S,d]
    Tensor ln_full = tape.layer_norm(full, lp.ln1_g, lp.ln1_b);
    Tensor ln_q = mc == 0 ? ln_full : tape.slice_rows(ln_full, mc, s_len);
    Tensor q = tape.matmul(ln_q, lp.wq);     // [T,d]
    Tensor k = tape.matmul(ln_full, lp.wk);  // [S,d]
    Tensor v = tape.matmul(ln_full, lp.wv);  // [S,d]
    std::vector<Tensor> head_outs;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int64_t h = 0; h < cfg.heads; ++h) {
      Tensor qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
      Tensor kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
      Tensor vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
      Tensor scores = tape.scale(tape.matmul_nt(qh, kh), scale);  // [T,S]
      std::vector<int64_t> idx(bucket.size());
      for (size_t i = 0; i < bucket.size(); ++i) {
        idx[i] = h * cfg.rel_buckets + bucket[i];
      }
      Tensor bias = tape.gather(lp.rel_bias, std::move(idx), {t_len, s_len});
      scores = tape.add(scores, bias);
      Tensor probs = tape.softmax(scores, &mask, 1.0);
      head_outs.push_back(tape.matmul(probs, vh));  // [T,dh]
    }
    Tensor attn = tape.matmul(tape.concat_cols(head_outs), lp.wo);
    if (rate > 0.0) attn = tape.dropout(attn, rate, *dropout_rng);
    x = tape.add(x, attn);

    Tensor ln2 = tape.layer_norm(x, lp.ln2_g, lp.ln2_b);
    Tensor ff = tape.gelu(tape.add_rowvec(tape.matmul(ln2, lp.w1), lp.b1));
    ff = tape.add_rowvec(tape.matmul(ff, lp.w2), lp.b2);
    if (rate > 0.0) ff = tape.dropout(ff, rate, *dropout_rng);
    x = tape.add(x, ff);
  }
  TxlOut out;
  out.h = tape.layer_norm(x, params.ln_f_g, params.ln_f_b);
  out.next = std::move(next);
  return out;
}

std::vector<int64_t> serialize_triple(const kgraph::RelationTriple& t,
                                      const corpus::Vocabulary& vocab,
                                      Ablation ablation, int64_t max_tokens) {
  std::string text;
  switch (ablation) {
    case Ablation::kFull:
      text = t.head + ", " + t.relation + ", " + t.tail;
      break;
    case Ablation::kNoRelation:
      text = t.head + ", " + t.tail;
      break;
    case Ablation::kNoRelationTail:
      text = t.head;
      break;
    case Ablation::kEmptyMemory:
      throw std::logic_error(
          "serialize_triple: empty-memory ablation encodes nothing");
  }
  std::vector<int64_t> ids = vocab.encode(text);
  if (static_cast<int64_t>(ids.size()) > max_tokens) ids.resize(max_tokens);
  if (ids.empty()) {
    throw std::runtime_error("serialize_triple: empty serialization");
  }
  bool all_unknown = true;
  for (int64_t id : ids) {
    if (id != corpus::Vocabulary::kUnk) {
      all_unknown = false;
      break;
    }
  }
  if (all_unknown) {
    throw std::runtime_error("serialize_triple: unencodable triple (" + text +
                             ")");
  }
  return ids;
}

Tensor encode_relation(Tape& tape, const std::vector<int64_t>& ids,
                       const Parameters& params) {
  if (ids.empty()) {
    throw std::invalid_argument("encode_relation: empty token sequence");
  }
  const int64_t d = params.cfg.d;
  Tensor h = Tensor::zeros({1, d});
  Tensor c = Tensor::zeros({1, d});
  for (int64_t id : ids) {
    Tensor x = tape.gather_rows(params.w_e, {id});  // [1,d]
    Tensor gates = tape.add_rowvec(
        tape.add(tape.matmul(x, params.lstm_wx),
                 tape.matmul(h, params.lstm_wh)),
        params.lstm_b);  // [1,4d]
    Tensor in_g = tape.sigmoid(tape.slice_cols(gates, 0, d));
    Tensor forget_g = tape.sigmoid(tape.slice_cols(gates, d, 2 * d));
    Tensor cand = tape.tanh(tape.slice_cols(gates, 2 * d, 3 * d));
    Tensor out_g = tape.sigmoid(tape.slice_cols(gates, 3 * d, 4 * d));
    c = tape.add(tape.mul(forget_g, c), tape.mul(in_g, cand));
    h = tape.mul(out_g, tape.tanh(c));
  }
  return h;
}

Tensor attend_memory(Tape& tape, const Tensor& h, const Tensor& encodings) {
  if (!encodings.defined() || encodings.rows() == 0) {
    throw std::invalid_argument("attend_memory: no encodings");
  }
  if (h.cols() != encodings.cols()) {
    throw std::invalid_argument("attend_memory: dimension mismatch");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(h.cols()));
  Tensor scores = tape.matmul_nt(h, encodings);         // [T,P]
  Tensor weights = tape.softmax(scores, nullptr, scale);
  return tape.matmul(weights, encodings);               // [T,d]
}

Fused gate_fuse(Tape& tape, const Tensor& h, const Tensor& m,
                const Parameters& params) {
  if (h.shape() != m.shape() || h.cols() != params.cfg.d) {
    throw std::invalid_argument("gate_fuse: dimension mismatch");
  }
  Tensor cat = tape.concat_cols({h, m});                // [T,2d]
  Tensor g = tape.sigmoid(tape.matmul(cat, params.w_g));  // [T,d]
  Tensor z = tape.add(tape.mul(g, h), tape.mul(tape.one_minus(g), m));
  return {z, g};
}

Tensor output_logits(Tape& tape, const Tensor& z, const Parameters& params) {
  return tape.matmul_nt(z, params.w_e);  // [T,V]
}

Tensor predict_next(Tape& tape, const Tensor& z, const Parameters& params) {
  Tensor logits = output_logits(tape, z, params);
  return tape.softmax(logits, nullptr, 1.0);
}

}  // namespace relmem::model
