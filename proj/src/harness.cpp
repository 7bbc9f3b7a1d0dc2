#include "relmem/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace relmem::harness {

namespace {

constexpr uint64_t kDropSeedSalt = 0x5eed0d20c0ffee11ull;
constexpr uint64_t kMemorySeedSalt = 0x6d656d6f72790000ull;
constexpr uint64_t kScoreSeedSalt = 0x73636f7265000000ull;

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: " + key + " must be true/false");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// [<s>] + article tokens; inputs are positions [0, len-1), targets shifted
struct ArticleStream {
  std::vector<int64_t> stream;
  std::vector<corpus::Segment> segments;  // over input positions
};

ArticleStream make_stream(const corpus::Article& a,
                          const corpus::Vocabulary& vocab, int64_t n) {
  ArticleStream as;
  as.stream.push_back(corpus::Vocabulary::kStart);
  for (int64_t id : vocab.encode(a.text)) as.stream.push_back(id);
  const int64_t inputs = static_cast<int64_t>(as.stream.size()) - 1;
  std::vector<int64_t> input_ids(as.stream.begin(),
                                 as.stream.begin() + inputs);
  as.segments = corpus::segment_stream(input_ids, a.id, n);
  return as;
}

std::vector<int64_t> targets_of(const ArticleStream& as,
                                const corpus::Segment& seg, int64_t n) {
  const int64_t start = seg.index * n + 1;
  std::vector<int64_t> out(as.stream.begin() + start,
                           as.stream.begin() + start +
                               static_cast<int64_t>(seg.ids.size()));
  return out;
}

struct Lane {
  std::vector<int64_t> article_order;
  size_t cursor = 0;  // next article to open
  bool active = false;
  int64_t article_idx = -1;
  ArticleStream stream;
  size_t seg_pos = 0;
  model::SegmentCache cache;
  retrieval::RelationalMemory memory;
  Rng score_rng;

  Lane(int64_t cap, uint64_t seed)
      : memory(cap, seed), score_rng(seed ^ kScoreSeedSalt) {}
};

uint64_t article_seed(uint64_t run_seed, const std::string& article_id,
                      uint64_t salt) {
  return run_seed ^ salt ^ cfg::fnv1a(article_id);
}

// opens the lane's next article (cycling when wrap is true); returns false
// when the lane is exhausted and wrap is false
bool open_next_article(Lane& lane, const std::vector<corpus::Article>& arts,
                       const corpus::Vocabulary& vocab, const RunConfig& rc,
                       bool wrap) {
  if (lane.cursor >= lane.article_order.size()) {
    if (!wrap || lane.article_order.empty()) {
      lane.active = false;
      return false;
    }
    lane.cursor = 0;
  }
  lane.article_idx = lane.article_order[lane.cursor++];
  const corpus::Article& a = arts[lane.article_idx];
  lane.stream = make_stream(a, vocab, rc.model.seg_len);
  lane.seg_pos = 0;
  lane.cache.clear();
  lane.memory.reset(article_seed(rc.seed, a.id, kMemorySeedSalt));
  lane.score_rng = Rng(article_seed(rc.seed, a.id, kScoreSeedSalt));
  lane.active = !lane.stream.segments.empty();
  return lane.active;
}

// relation encodings for the resident memory; undefined when bypassing
Tensor encode_memory(Tape& tape, const RunConfig& rc,
                     const std::vector<kgraph::RelationTriple>& resident,
                     const model::Parameters& params,
                     const corpus::Vocabulary& vocab,
                     std::unordered_map<std::string, Tensor>* cache) {
  if (rc.ablation == model::Ablation::kEmptyMemory || resident.empty()) {
    return Tensor();
  }
  std::vector<Tensor> rows;
  rows.reserve(resident.size());
  for (const auto& t : resident) {
    if (cache) {
      const std::string key = kgraph::canonical_key(t);
      auto it = cache->find(key);
      if (it == cache->end()) {
        const auto ids = model::serialize_triple(t, vocab, rc.ablation);
        it = cache->emplace(key, model::encode_relation(tape, ids, params))
                 .first;
      }
      rows.push_back(it->second);
    } else {
      const auto ids = model::serialize_triple(t, vocab, rc.ablation);
      rows.push_back(model::encode_relation(tape, ids, params));
    }
  }
  return tape.concat_rows(rows);
}

struct SegmentForward {
  Tensor logits;
  Tensor gate;  // undefined at bypass
  bool bypass = true;
  model::SegmentCache next_cache;
};

SegmentForward forward_segment(Tape& tape, const RunConfig& rc,
                               const std::vector<int64_t>& inputs,
                               const model::SegmentCache& cache,
                               const Tensor& encodings,
                               const model::Parameters& params,
                               Rng* drop_rng) {
  SegmentForward out;
  model::TxlOut tx = model::txl_forward(tape, inputs, cache, params, drop_rng);
  Tensor z;
  if (encodings.defined()) {
    Tensor m = model::attend_memory(tape, tx.h, encodings);
    model::Fused fused = model::gate_fuse(tape, tx.h, m, params);
    z = fused.z;
    out.gate = fused.g;
    out.bypass = false;
  } else {
    z = tx.h;
    out.bypass = true;
  }
  out.logits = model::output_logits(tape, z, params);
  out.next_cache = std::move(tx.next);
  return out;
}

// tag / score / select / retrieve / update, the shared Algorithm-1 tail
void update_memory_from_segment(Lane& lane, const RunConfig& rc,
                                const Pipeline& pipe,
                                const std::vector<std::string>& segment_words) {
  const auto mentions = retrieval::tag_entities(segment_words, pipe.gaz);
  if (mentions.empty()) return;
  const auto scored = retrieval::score_mentions(mentions, pipe.index,
                                                rc.scoring, &lane.score_rng);
  const auto top = retrieval::select_top_k(scored, rc.model.top_k, pipe.gaz);
  const auto candidates = retrieval::retrieve(top, pipe.gaz, pipe.store);
  if (!candidates.empty()) lane.memory.update(candidates);
}

int64_t sample_from(const std::vector<double>& probs, double temperature,
                    bool greedy, Rng& rng,
                    const std::vector<double>& logits) {
  if (greedy || temperature < 1e-9) {
    int64_t best = 0;
    for (size_t j = 1; j < probs.size(); ++j) {
      if (probs[j] > probs[best]) best = static_cast<int64_t>(j);
    }
    return best;
  }
  std::vector<double> scaled(logits.size());
  for (size_t j = 0; j < logits.size(); ++j) scaled[j] = logits[j] / temperature;
  const std::vector<double> p = softmax_vector(scaled);
  const double u = rng.uniform();
  double acc = 0.0;
  for (size_t j = 0; j < p.size(); ++j) {
    acc += p[j];
    if (u < acc) return static_cast<int64_t>(j);
  }
  return static_cast<int64_t>(p.size()) - 1;
}

}  // namespace

RunConfig RunConfig::parse(const cfg::KvList& kv) {
  RunConfig rc;
  std::set<std::string> seen;
  for (const auto& [key, value] : kv) {
    if (!seen.insert(key).second) {
      throw std::invalid_argument("config: duplicate key " + key);
    }
    if (key == "corpus_train") rc.corpus_train = value;
    else if (key == "corpus_eval") rc.corpus_eval = value;
    else if (key == "gazetteer") rc.gazetteer_path = value;
    else if (key == "triples") rc.triples_path = value;
    else if (key == "vocab_mode") {
      if (value == "char") rc.vocab_mode = corpus::VocabMode::kChar;
      else if (value == "word") rc.vocab_mode = corpus::VocabMode::kWord;
      else throw std::invalid_argument("config: vocab_mode must be char|word");
    } else if (key == "vocab_scope") {
      if (value == "train") rc.vocab_all = false;
      else if (value == "all") rc.vocab_all = true;
      else throw std::invalid_argument("config: vocab_scope must be train|all");
    } else if (key == "d") rc.model.d = std::stoll(value);
    else if (key == "layers") rc.model.layers = std::stoll(value);
    else if (key == "heads") rc.model.heads = std::stoll(value);
    else if (key == "seg_len") rc.model.seg_len = std::stoll(value);
    else if (key == "ext_len") rc.model.ext_len = std::stoll(value);
    else if (key == "mem_cap") rc.model.mem_cap = std::stoll(value);
    else if (key == "top_k") rc.model.top_k = std::stoll(value);
    else if (key == "rel_buckets") rc.model.rel_buckets = std::stoll(value);
    else if (key == "dropout") rc.model.dropout = std::stod(value);
    else if (key == "batch") rc.batch = std::stoll(value);
    else if (key == "lr_peak") rc.optim.lr_peak = std::stod(value);
    else if (key == "warmup") rc.optim.warmup = std::stoll(value);
    else if (key == "total_steps") rc.optim.total_steps = std::stoll(value);
    else if (key == "beta1") rc.optim.beta1 = std::stod(value);
    else if (key == "beta2") rc.optim.beta2 = std::stod(value);
    else if (key == "eps") rc.optim.eps = std::stod(value);
    else if (key == "clip_norm") rc.optim.clip_norm = std::stod(value);
    else if (key == "seed") rc.seed = std::stoull(value);
    else if (key == "dynamic_extraction") {
      rc.dynamic_extraction = parse_bool(value, key);
    } else if (key == "ablation") {
      rc.ablation = model::ablation_from_string(value);
    } else if (key == "scoring") {
      if (value == "tfidf") rc.scoring = retrieval::Scoring::kTfIdf;
      else if (value == "frequency") rc.scoring = retrieval::Scoring::kFrequency;
      else if (value == "random") rc.scoring = retrieval::Scoring::kRandom;
      else throw std::invalid_argument(
          "config: scoring must be tfidf|frequency|random");
    } else if (key == "gen_len") rc.gen_len = std::stoll(value);
    else if (key == "f1_samples") rc.f1_samples = std::stoll(value);
    else if (key == "temperature") rc.temperature = std::stod(value);
    else throw std::invalid_argument("config: unknown key " + key);
  }
  rc.model.seed = rc.seed;
  if (rc.batch < 1) throw std::invalid_argument("config: batch must be >= 1");
  if (rc.gen_len < 1) throw std::invalid_argument("config: gen_len must be >= 1");
  if (rc.f1_samples < 1) {
    throw std::invalid_argument("config: f1_samples must be >= 1");
  }
  return rc;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  return parse(cfg::parse_kv_file(path));
}

cfg::KvList RunConfig::render() const {
  cfg::KvList kv;
  kv.emplace_back("corpus_train", corpus_train);
  kv.emplace_back("corpus_eval", corpus_eval);
  kv.emplace_back("gazetteer", gazetteer_path);
  kv.emplace_back("triples", triples_path);
  kv.emplace_back("vocab_mode",
                  vocab_mode == corpus::VocabMode::kChar ? "char" : "word");
  kv.emplace_back("vocab_scope", vocab_all ? "all" : "train");
  kv.emplace_back("d", std::to_string(model.d));
  kv.emplace_back("layers", std::to_string(model.layers));
  kv.emplace_back("heads", std::to_string(model.heads));
  kv.emplace_back("seg_len", std::to_string(model.seg_len));
  kv.emplace_back("ext_len", std::to_string(model.ext_len));
  kv.emplace_back("mem_cap", std::to_string(model.mem_cap));
  kv.emplace_back("top_k", std::to_string(model.top_k));
  kv.emplace_back("rel_buckets", std::to_string(model.rel_buckets));
  kv.emplace_back("dropout", fmt(model.dropout));
  kv.emplace_back("batch", std::to_string(batch));
  kv.emplace_back("lr_peak", fmt(optim.lr_peak));
  kv.emplace_back("warmup", std::to_string(optim.warmup));
  kv.emplace_back("total_steps", std::to_string(optim.total_steps));
  kv.emplace_back("beta1", fmt(optim.beta1));
  kv.emplace_back("beta2", fmt(optim.beta2));
  kv.emplace_back("eps", fmt(optim.eps));
  kv.emplace_back("clip_norm", fmt(optim.clip_norm));
  kv.emplace_back("seed", std::to_string(seed));
  kv.emplace_back("dynamic_extraction", dynamic_extraction ? "true" : "false");
  kv.emplace_back("ablation", model::ablation_to_string(ablation));
  kv.emplace_back("scoring",
                  scoring == retrieval::Scoring::kTfIdf
                      ? "tfidf"
                      : scoring == retrieval::Scoring::kFrequency
                            ? "frequency"
                            : "random");
  kv.emplace_back("gen_len", std::to_string(gen_len));
  kv.emplace_back("f1_samples", std::to_string(f1_samples));
  kv.emplace_back("temperature", fmt(temperature));
  return kv;
}

Pipeline Pipeline::load(RunConfig& rc) {
  if (rc.corpus_train.empty()) {
    throw std::invalid_argument("config: corpus_train is required");
  }
  if (rc.gazetteer_path.empty()) {
    throw std::invalid_argument("config: gazetteer is required");
  }
  std::vector<corpus::Article> train = corpus::load(rc.corpus_train);
  std::vector<corpus::Article> eval;
  if (!rc.corpus_eval.empty()) eval = corpus::load(rc.corpus_eval);
  kgraph::Gazetteer gaz = kgraph::Gazetteer::load(rc.gazetteer_path);
  std::optional<kgraph::TripleStore> store;
  if (!rc.triples_path.empty()) {
    store = kgraph::load_triples(rc.triples_path);
  }
  return build(std::move(train), std::move(eval), std::move(gaz), rc,
               std::move(store));
}

Pipeline Pipeline::build(std::vector<corpus::Article> train,
                         std::vector<corpus::Article> eval,
                         kgraph::Gazetteer gaz, RunConfig& rc,
                         std::optional<kgraph::TripleStore> store) {
  Pipeline pipe;
  pipe.train_articles = std::move(train);
  pipe.eval_articles = std::move(eval);
  pipe.gaz = std::move(gaz);
  std::vector<corpus::Article> vocab_source = pipe.train_articles;
  if (rc.vocab_all) {
    vocab_source.insert(vocab_source.end(), pipe.eval_articles.begin(),
                        pipe.eval_articles.end());
  }
  pipe.vocab = corpus::Vocabulary::build(vocab_source, rc.vocab_mode);
  rc.model.vocab = pipe.vocab.size();
  pipe.index = retrieval::TfIdfIndex::build(pipe.train_articles, pipe.gaz);
  if (store.has_value()) {
    pipe.store = std::move(*store);
  } else {
    pipe.store = kgraph::extract_from_training_set(pipe.train_articles,
                                                   pipe.gaz);
  }
  return pipe;
}

std::vector<std::vector<int64_t>> batch_schedule(int64_t n_articles,
                                                 int64_t batch) {
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  std::vector<std::vector<int64_t>> lanes(static_cast<size_t>(batch));
  for (int64_t i = 0; i < n_articles; ++i) {
    lanes[static_cast<size_t>(i % batch)].push_back(i);
  }
  return lanes;
}

std::string TrainResult::log_tsv() const {
  std::ostringstream ss;
  for (const auto& e : log) {
    ss << e.step << '\t' << fmt(e.lr) << '\t' << fmt(e.loss) << '\n';
  }
  return ss.str();
}

TrainResult train(Pipeline& pipe, const RunConfig& rc, const TrainHook& hook) {
  RunConfig cfg = rc;
  cfg.model.validate();
  if (pipe.store.size() == 0 &&
      cfg.ablation != model::Ablation::kEmptyMemory) {
    std::fprintf(stderr,
                 "warning: triple store is empty; memory fusion will always "
                 "bypass\n");
  }
  model::Parameters params = model::Parameters::init(cfg.model);
  Adam adam(Adam::Config{cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps});
  std::vector<Tensor> param_list = params.all();
  adam.init(param_list);
  Rng drop_rng(cfg.seed ^ kDropSeedSalt);

  const auto schedule = batch_schedule(
      static_cast<int64_t>(pipe.train_articles.size()), cfg.batch);
  std::vector<Lane> lanes;
  for (int64_t b = 0; b < cfg.batch; ++b) {
    Lane lane(cfg.model.mem_cap, cfg.seed + static_cast<uint64_t>(b));
    lane.article_order = schedule[static_cast<size_t>(b)];
    lanes.push_back(std::move(lane));
  }

  TrainResult result{std::move(params), {}};
  for (int64_t step = 1; step <= cfg.optim.total_steps; ++step) {
    Tape tape;
    Tensor weighted_sum;  // sum of per-lane nll sums
    int64_t token_total = 0;
    for (Lane& lane : lanes) {
      if (!lane.active || lane.seg_pos >= lane.stream.segments.size()) {
        if (!open_next_article(lane, pipe.train_articles, pipe.vocab, cfg,
                               /*wrap=*/true)) {
          continue;
        }
      }
      const corpus::Segment& seg = lane.stream.segments[lane.seg_pos];
      const std::vector<int64_t> targets =
          targets_of(lane.stream, seg, cfg.model.seg_len);

      TrainSegmentInfo info;
      info.article = seg.article_id;
      info.seg_index = seg.index;
      info.memory_at_scoring = lane.memory.resident();
      info.memory_hash_start = lane.memory.content_hash();

      Tensor enc = encode_memory(tape, cfg, lane.memory.resident(),
                                 result.params, pipe.vocab, nullptr);
      SegmentForward fwd = forward_segment(tape, cfg, seg.ids, lane.cache,
                                           enc, result.params, &drop_rng);
      Tensor lane_loss = tape.cross_entropy_mean(fwd.logits, targets);
      const int64_t n_tok = static_cast<int64_t>(targets.size());
      Tensor lane_sum = tape.scale(lane_loss, static_cast<double>(n_tok));
      weighted_sum = weighted_sum.defined()
                         ? tape.add(weighted_sum, lane_sum)
                         : lane_sum;
      token_total += n_tok;

      info.memory_hash_end = lane.memory.content_hash();

      // Algorithm-1 order: the update happens strictly after TRAIN
      lane.cache = std::move(fwd.next_cache);
      const auto segment_words =
          corpus::word_tokenize(pipe.vocab.decode(targets));
      update_memory_from_segment(lane, cfg, pipe, segment_words);
      lane.seg_pos++;
      if (hook) hook(info);
    }
    if (!weighted_sum.defined()) {
      throw std::runtime_error("train: no trainable segments (empty corpus?)");
    }
    Tensor loss =
        tape.scale(weighted_sum, 1.0 / static_cast<double>(token_total));
    result.params.zero_grads();
    tape.backward(loss);
    clip_global_norm(param_list, cfg.optim.clip_norm);
    const double lr = relmem::lr_schedule(step, cfg.optim.warmup,
                                          cfg.optim.total_steps,
                                          cfg.optim.lr_peak);
    adam.step(param_list, lr);
    result.log.push_back({step, lr, loss.item()});
  }
  return result;
}

std::string EvalReport::text() const {
  std::ostringstream ss;
  ss << "tokens\t" << tokens << "\n"
     << "total_nll\t" << fmt(total_nll) << "\n"
     << "perplexity\t" << fmt(ppl) << "\n"
     << "bits_per_token\t" << fmt(bpt) << "\n"
     << "knowledge_perplexity\t"
     << (std::isnan(knowledge_ppl) ? "n/a" : fmt(knowledge_ppl)) << "\n"
     << "non_entity_perplexity\t"
     << (std::isnan(non_entity_ppl) ? "n/a" : fmt(non_entity_ppl)) << "\n";
  return ss.str();
}

std::string EvalReport::tokens_tsv() const {
  std::ostringstream ss;
  ss << "position\ttoken\tnll\tentity\tgate\tbypass\tarticle\tsegment\n";
  for (const auto& r : records) {
    ss << r.position << '\t' << r.token << '\t' << fmt(r.nll) << '\t'
       << (r.entity ? 1 : 0) << '\t' << fmt(r.gate) << '\t'
       << (r.bypass ? 1 : 0) << '\t' << r.article << '\t' << r.segment
       << '\n';
  }
  return ss.str();
}

EvalReport evaluate(Pipeline& pipe, const model::Parameters& params,
                    const RunConfig& rc, const EvalHook& hook) {
  RunConfig cfg = rc;
  cfg.model.validate();
  const auto schedule = batch_schedule(
      static_cast<int64_t>(pipe.eval_articles.size()), cfg.batch);
  std::vector<Lane> lanes;
  for (int64_t b = 0; b < cfg.batch; ++b) {
    Lane lane(cfg.model.mem_cap, cfg.seed + static_cast<uint64_t>(b));
    lane.article_order = schedule[static_cast<size_t>(b)];
    lanes.push_back(std::move(lane));
  }
  // one record list per article so batched and sequential runs emit the
  // records in the same (article-order) sequence
  std::vector<std::vector<metrics::TokenRecord>> per_article(
      pipe.eval_articles.size());
  std::unordered_map<std::string, Tensor> enc_cache;

  bool any_active = true;
  while (any_active) {
    any_active = false;
    for (Lane& lane : lanes) {
      if (!lane.active || lane.seg_pos >= lane.stream.segments.size()) {
        if (!open_next_article(lane, pipe.eval_articles, pipe.vocab, cfg,
                               /*wrap=*/false)) {
          continue;
        }
      }
      any_active = true;
      const corpus::Segment& seg = lane.stream.segments[lane.seg_pos];
      const std::vector<int64_t> targets =
          targets_of(lane.stream, seg, cfg.model.seg_len);

      EvalSegmentInfo info;
      info.article = seg.article_id;
      info.seg_index = seg.index;
      info.memory_hash_start = lane.memory.content_hash();
      for (const auto& t : lane.memory.resident()) {
        info.memory_ordinals_at_scoring.push_back(t.ordinal);
      }

      Tape tape(/*recording=*/false);
      Tensor enc = encode_memory(tape, cfg, lane.memory.resident(), params,
                                 pipe.vocab, &enc_cache);
      SegmentForward fwd = forward_segment(tape, cfg, seg.ids, lane.cache,
                                           enc, params, nullptr);
      const std::vector<double> nll = per_token_nll(fwd.logits, targets);
      const std::vector<uint8_t> flags =
          retrieval::entity_token_flags(targets, pipe.vocab, pipe.gaz);
      const int64_t d = cfg.model.d;
      auto& records = per_article[static_cast<size_t>(lane.article_idx)];
      for (size_t i = 0; i < targets.size(); ++i) {
        metrics::TokenRecord r;
        r.token = targets[i];
        r.nll = nll[i];
        r.entity = flags[i] != 0;
        if (fwd.bypass) {
          r.gate = 1.0;
          r.bypass = true;
        } else {
          const double* grow = fwd.gate.v().data() + i * d;
          double acc = 0.0;
          for (int64_t j = 0; j < d; ++j) acc += grow[j];
          r.gate = acc / static_cast<double>(d);
          r.bypass = false;
        }
        r.article = seg.article_id;
        r.segment = seg.index;
        records.push_back(std::move(r));
      }
      info.memory_hash_end = lane.memory.content_hash();
      info.store_size_before_dynamic = static_cast<int64_t>(pipe.store.size());

      // dynamic extraction strictly after scoring, before retrieval
      const auto segment_words =
          corpus::word_tokenize(pipe.vocab.decode(targets));
      if (cfg.dynamic_extraction) {
        std::vector<kgraph::RelationTriple> found;
        for (const auto& sentence : kgraph::split_sentences(segment_words)) {
          for (auto& t : kgraph::extract_triples(sentence, pipe.gaz)) {
            found.push_back(std::move(t));
          }
        }
        const size_t before = pipe.store.size();
        kgraph::add_dynamic(pipe.store, found);
        info.dynamic_added = static_cast<int64_t>(pipe.store.size() - before);
      }
      lane.cache = std::move(fwd.next_cache);
      update_memory_from_segment(lane, cfg, pipe, segment_words);
      lane.seg_pos++;
      if (hook) hook(info);
    }
  }

  EvalReport report;
  int64_t position = 0;
  for (auto& records : per_article) {
    for (auto& r : records) {
      r.position = position++;
      report.total_nll += r.nll;
      report.records.push_back(std::move(r));
    }
  }
  report.tokens = position;
  if (report.tokens > 0) {
    report.ppl = metrics::perplexity(report.records);
    report.bpt = metrics::bits_per_token(report.records);
    bool has_entity = false, has_other = false;
    for (const auto& r : report.records) {
      (r.entity ? has_entity : has_other) = true;
    }
    report.knowledge_ppl = has_entity
                               ? metrics::knowledge_perplexity(report.records)
                               : std::nan("");
    report.non_entity_ppl =
        has_other ? metrics::non_entity_perplexity(report.records)
                  : std::nan("");
  }
  return report;
}

std::vector<int64_t> generate(const model::Parameters& params,
                              const corpus::Vocabulary& vocab,
                              const std::vector<int64_t>& prompt_ids,
                              const std::vector<kgraph::RelationTriple>& memory,
                              const GenOptions& opts,
                              model::Ablation ablation) {
  if (opts.length < 1) {
    throw std::invalid_argument("generate: length must be >= 1");
  }
  const int64_t n = params.cfg.seg_len;
  Tape tape(/*recording=*/false);
  RunConfig rc;
  rc.ablation = ablation;
  Tensor enc = encode_memory(tape, rc, memory, params, vocab, nullptr);

  std::vector<int64_t> pending;
  pending.push_back(corpus::Vocabulary::kStart);
  pending.insert(pending.end(), prompt_ids.begin(), prompt_ids.end());
  model::SegmentCache cache;

  // flush full segments of the prompt into the cache
  while (static_cast<int64_t>(pending.size()) > n) {
    std::vector<int64_t> chunk(pending.begin(), pending.begin() + n);
    pending.erase(pending.begin(), pending.begin() + n);
    SegmentForward fwd =
        forward_segment(tape, rc, chunk, cache, enc, params, nullptr);
    cache = std::move(fwd.next_cache);
  }

  Rng rng(opts.seed);
  std::vector<int64_t> out;
  const int64_t v = params.cfg.vocab;
  std::vector<double> last_logits;
  // forward the pending inputs; commit them into the cache when they fill a
  // whole segment, and keep the last row's logits either way
  auto advance = [&]() {
    SegmentForward fwd =
        forward_segment(tape, rc, pending, cache, enc, params, nullptr);
    last_logits.assign(fwd.logits.v().end() - v, fwd.logits.v().end());
    if (static_cast<int64_t>(pending.size()) == n) {
      cache = std::move(fwd.next_cache);
      pending.clear();
    }
  };
  advance();
  for (int64_t step = 0; step < opts.length; ++step) {
    const std::vector<double> probs = softmax_vector(last_logits);
    const int64_t next =
        sample_from(probs, opts.temperature, opts.greedy, rng, last_logits);
    out.push_back(next);
    pending.push_back(next);
    advance();
  }
  return out;
}

std::vector<double> next_distribution(
    const model::Parameters& params, const corpus::Vocabulary& vocab,
    const std::vector<int64_t>& prompt_ids,
    const std::vector<kgraph::RelationTriple>& memory,
    model::Ablation ablation) {
  const int64_t n = params.cfg.seg_len;
  Tape tape(/*recording=*/false);
  RunConfig rc;
  rc.ablation = ablation;
  Tensor enc = encode_memory(tape, rc, memory, params, vocab, nullptr);
  std::vector<int64_t> pending;
  pending.push_back(corpus::Vocabulary::kStart);
  pending.insert(pending.end(), prompt_ids.begin(), prompt_ids.end());
  model::SegmentCache cache;
  while (static_cast<int64_t>(pending.size()) > n) {
    std::vector<int64_t> chunk(pending.begin(), pending.begin() + n);
    pending.erase(pending.begin(), pending.begin() + n);
    SegmentForward fwd =
        forward_segment(tape, rc, chunk, cache, enc, params, nullptr);
    cache = std::move(fwd.next_cache);
  }
  SegmentForward fwd =
      forward_segment(tape, rc, pending, cache, enc, params, nullptr);
  const int64_t v = params.cfg.vocab;
  std::vector<double> logits(fwd.logits.v().end() - v, fwd.logits.v().end());
  return softmax_vector(logits);
}

}  // namespace relmem::harness
