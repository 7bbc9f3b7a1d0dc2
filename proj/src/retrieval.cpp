#include "relmem/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace relmem::retrieval {

std::vector<EntityMention> tag_entities(const std::vector<std::string>& words,
                                        const kgraph::Gazetteer& gaz) {
  std::vector<EntityMention> out;
  std::map<int64_t, size_t> slot;  // entity -> index into out
  for (const auto& m : gaz.find_mentions(words)) {
    auto it = slot.find(m.entity);
    if (it == slot.end()) {
      EntityMention em;
      em.entity = m.entity;
      em.count = 1;
      em.positions = {m.pos};
      em.first_pos = m.pos;
      slot[m.entity] = out.size();
      out.push_back(std::move(em));
    } else {
      out[it->second].count++;
      out[it->second].positions.push_back(m.pos);
    }
  }
  return out;
}

TfIdfIndex TfIdfIndex::build(
    const std::vector<corpus::Article>& train_articles,
    const kgraph::Gazetteer& gaz) {
  TfIdfIndex idx;
  idx.articles_ = static_cast<int64_t>(train_articles.size());
  idx.df_.assign(gaz.size(), 0);
  for (const corpus::Article& a : train_articles) {
    const auto words = corpus::word_tokenize(a.text);
    std::unordered_set<int64_t> present;
    for (const auto& m : gaz.find_mentions(words)) present.insert(m.entity);
    for (int64_t e : present) idx.df_[e]++;
  }
  return idx;
}

TfIdfIndex TfIdfIndex::empty(const kgraph::Gazetteer& gaz) {
  TfIdfIndex idx;
  idx.articles_ = 0;
  idx.df_.assign(gaz.size(), 0);
  return idx;
}

int64_t TfIdfIndex::df(int64_t entity_idx) const {
  if (entity_idx < 0 || entity_idx >= static_cast<int64_t>(df_.size())) {
    throw std::out_of_range("TfIdfIndex::df: entity index out of range");
  }
  return df_[entity_idx];
}

double TfIdfIndex::idf(int64_t entity_idx) const {
  return std::log(static_cast<double>(1 + articles_) /
                  static_cast<double>(1 + df(entity_idx)));
}

std::vector<ScoredEntity> score_mentions(
    const std::vector<EntityMention>& mentions, const TfIdfIndex& index,
    Scoring scoring, Rng* rng) {
  if (scoring == Scoring::kRandom && rng == nullptr) {
    throw std::invalid_argument("score_mentions: random scoring needs an rng");
  }
  std::vector<ScoredEntity> out;
  out.reserve(mentions.size());
  for (const EntityMention& m : mentions) {
    double score = 0.0;
    switch (scoring) {
      case Scoring::kTfIdf:
        score = static_cast<double>(m.count) * index.idf(m.entity);
        break;
      case Scoring::kFrequency:
        score = static_cast<double>(m.count);
        break;
      case Scoring::kRandom:
        score = rng->uniform();
        break;
    }
    out.push_back({m.entity, score, m.first_pos});
  }
  return out;
}

std::vector<int64_t> select_top_k(const std::vector<ScoredEntity>& scored,
                                  int64_t k, const kgraph::Gazetteer& gaz) {
  if (k < 1) throw std::invalid_argument("select_top_k: k must be >= 1");
  std::vector<ScoredEntity> sorted = scored;
  std::sort(sorted.begin(), sorted.end(),
            [&gaz](const ScoredEntity& a, const ScoredEntity& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.first_pos != b.first_pos) return a.first_pos < b.first_pos;
              return gaz.canonical(a.entity) < gaz.canonical(b.entity);
            });
  if (static_cast<int64_t>(sorted.size()) > k) sorted.resize(k);
  std::vector<int64_t> out;
  out.reserve(sorted.size());
  for (const ScoredEntity& s : sorted) out.push_back(s.entity);
  return out;
}

std::vector<kgraph::RelationTriple> retrieve(
    const std::vector<int64_t>& entities, const kgraph::Gazetteer& gaz,
    const kgraph::TripleStore& store) {
  std::vector<kgraph::RelationTriple> out;
  std::unordered_set<std::string> seen;
  for (int64_t e : entities) {
    for (kgraph::RelationTriple& t : store.lookup(gaz.canonical(e))) {
      if (seen.insert(kgraph::canonical_key(t)).second) {
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

RelationalMemory::RelationalMemory(int64_t capacity, uint64_t seed)
    : cap_(capacity), rng_(seed) {
  if (capacity < 1) {
    throw std::invalid_argument("RelationalMemory: capacity must be >= 1");
  }
}

void RelationalMemory::reset(uint64_t seed) {
  queue_.clear();
  keys_.clear();
  rng_ = Rng(seed);
}

void RelationalMemory::update(
    const std::vector<kgraph::RelationTriple>& candidates) {
  if (static_cast<int64_t>(candidates.size()) > cap_) {
    // random drop: a uniform subset of exactly P replaces the whole queue
    std::vector<int64_t> idx(candidates.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
    for (int64_t i = 0; i < cap_; ++i) {
      const int64_t j =
          i + static_cast<int64_t>(rng_.below(idx.size() - static_cast<size_t>(i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(static_cast<size_t>(cap_));
    std::sort(idx.begin(), idx.end());  // keep candidate order in the queue
    queue_.clear();
    keys_.clear();
    for (int64_t i : idx) {
      const auto& t = candidates[i];
      if (keys_.insert(kgraph::canonical_key(t)).second) {
        queue_.push_back(t);
      }
    }
    return;
  }
  for (const auto& t : candidates) {
    const std::string key = kgraph::canonical_key(t);
    if (keys_.count(key)) {
      // refresh an already-resident triple to the newest position
      auto it = std::find_if(queue_.begin(), queue_.end(),
                             [&key](const kgraph::RelationTriple& q) {
                               return kgraph::canonical_key(q) == key;
                             });
      kgraph::RelationTriple moved = *it;
      queue_.erase(it);
      queue_.push_back(std::move(moved));
    } else {
      keys_.insert(key);
      queue_.push_back(t);
    }
    while (static_cast<int64_t>(queue_.size()) > cap_) {
      keys_.erase(kgraph::canonical_key(queue_.front()));
      queue_.erase(queue_.begin());
    }
  }
}

uint64_t RelationalMemory::content_hash() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0x1e;
    h *= 1099511628211ull;
  };
  for (const auto& t : queue_) {
    mix(t.head);
    mix(t.relation);
    mix(t.tail);
  }
  return h;
}

void RelationalMemory::dump_tsv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write memory dump: " + path);
  for (const auto& t : queue_) {
    out << t.ordinal << '\t' << t.head << '\t' << t.relation << '\t' << t.tail
        << '\n';
  }
}

std::vector<uint8_t> entity_token_flags(const std::vector<int64_t>& ids,
                                        const corpus::Vocabulary& vocab,
                                        const kgraph::Gazetteer& gaz) {
  std::vector<uint8_t> flags(ids.size(), 0);
  if (ids.empty()) return flags;
  std::vector<std::pair<size_t, size_t>> token_spans;
  const std::string text = vocab.decode_spans(ids, &token_spans);
  const auto word_spans = corpus::word_tokenize_spans(text);
  std::vector<std::string> words;
  words.reserve(word_spans.size());
  for (const auto& ws : word_spans) words.push_back(ws.token);
  for (const auto& m : gaz.find_mentions(words)) {
    const size_t lo = word_spans[m.pos].begin;
    const size_t hi = word_spans[m.pos + m.len - 1].end;
    for (size_t i = 0; i < ids.size(); ++i) {
      if (token_spans[i].begin < hi && token_spans[i].end > lo) flags[i] = 1;
    }
  }
  return flags;
}

}  // namespace relmem::retrieval
