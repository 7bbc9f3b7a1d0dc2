#include "relmem/kgraph.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace relmem::kgraph {

namespace {

const std::unordered_set<std::string>& verb_words() {
  static const std::unordered_set<std::string> kWords = {
      "is",      "are",    "was",     "were",   "be",      "been",
      "being",   "has",    "have",    "had",    "won",     "met",
      "led",     "ran",    "grew",    "made",   "built",   "wrote",
      "became",  "become", "found",   "held",   "took",    "gave",
      "got",     "saw",    "knew",    "sold",   "bought",  "taught",
      "left",    "kept",   "felt",    "chose",  "spoke",   "drove",
      "flew",    "went",   "came",    "did",    "said",    "began",
      "plays",   "works",  "lives",   "leads",  "owns",    "runs",
      "serves",  "teaches", "borders", "rules", "flows",   "sits",
      "stands",  "lies",   "orbits",  "wears",  "keeps",   "writes",
      "studies", "grows",  "makes",   "sells",  "meets",   "draws"};
  return kWords;
}

bool verb_like(const std::string& folded) {
  if (verb_words().count(folded)) return true;
  const size_t n = folded.size();
  if (n >= 4 && folded.compare(n - 2, 2, "ed") == 0) return true;
  if (n >= 5 && folded.compare(n - 3, 3, "ing") == 0) return true;
  return false;
}

// words trimmed off the ends of a connecting span (prepositions are kept;
// they carry the relation sense, e.g. "born in")
const std::unordered_set<std::string>& trim_words() {
  static const std::unordered_set<std::string> kWords = {
      "a",    "an",   "the", "and",   "or",    "but", "also",
      "then", "who",  "which", "that", "as",   "so"};
  return kWords;
}

bool is_punct_token(const std::string& t) {
  return t.size() == 1 && std::ispunct(static_cast<unsigned char>(t[0]));
}

const std::unordered_set<std::string>& phrase_stop_words() {
  static const std::unordered_set<std::string> kWords = {
      "and", "or", "who", "which", "that", "when", "where"};
  return kWords;
}

constexpr int64_t kMaxSpan = 8;
constexpr int64_t kMaxPhrase = 4;

std::string join(const std::vector<std::string>& words, int64_t lo,
                 int64_t hi) {
  std::string out;
  for (int64_t i = lo; i < hi; ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

std::string fold_case(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string collapse_ws(const std::string& s) {
  std::string out;
  bool in_space = true;  // also trims leading space
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
    } else {
      if (in_space && !out.empty()) out += ' ';
      in_space = false;
      out += c;
    }
  }
  return out;
}

std::string canonical_key(const std::string& head, const std::string& relation,
                          const std::string& tail) {
  return fold_case(collapse_ws(head)) + '\x1f' +
         fold_case(collapse_ws(relation)) + '\x1f' +
         fold_case(collapse_ws(tail));
}

std::string canonical_key(const RelationTriple& t) {
  return canonical_key(t.head, t.relation, t.tail);
}

Gazetteer Gazetteer::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open gazetteer: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string name = collapse_ws(line);
    if (!name.empty()) names.push_back(name);
  }
  return from_entities(std::move(names));
}

Gazetteer Gazetteer::from_entities(std::vector<std::string> names) {
  Gazetteer g;
  std::unordered_set<std::string> seen;
  for (std::string& n : names) {
    const std::string name = collapse_ws(n);
    if (name.empty()) {
      throw std::invalid_argument("gazetteer: empty entity name");
    }
    if (!seen.insert(fold_case(name)).second) {
      throw std::invalid_argument("gazetteer: duplicate entity under case-folding: " + name);
    }
    g.entities_.push_back(name);
  }
  g.index();
  return g;
}

void Gazetteer::index() {
  folded_words_.clear();
  by_first_word_.clear();
  for (size_t i = 0; i < entities_.size(); ++i) {
    std::vector<std::string> words;
    for (const std::string& w : corpus::word_tokenize(entities_[i])) {
      words.push_back(fold_case(w));
    }
    folded_words_.push_back(words);
    by_first_word_[words.front()].push_back(static_cast<int64_t>(i));
  }
  // longer candidates first so the matcher can take the first hit
  for (auto& [w, idxs] : by_first_word_) {
    std::sort(idxs.begin(), idxs.end(), [this](int64_t a, int64_t b) {
      if (folded_words_[a].size() != folded_words_[b].size()) {
        return folded_words_[a].size() > folded_words_[b].size();
      }
      return a < b;
    });
  }
}

int64_t Gazetteer::index_of(const std::string& name) const {
  const std::string folded = fold_case(collapse_ws(name));
  for (size_t i = 0; i < entities_.size(); ++i) {
    if (fold_case(entities_[i]) == folded) return static_cast<int64_t>(i);
  }
  return -1;
}

std::vector<Gazetteer::Mention> Gazetteer::find_mentions(
    const std::vector<std::string>& words) const {
  std::vector<Mention> out;
  std::vector<std::string> folded;
  folded.reserve(words.size());
  for (const std::string& w : words) folded.push_back(fold_case(w));
  const int64_t n = static_cast<int64_t>(words.size());
  int64_t pos = 0;
  while (pos < n) {
    auto it = by_first_word_.find(folded[pos]);
    bool matched = false;
    if (it != by_first_word_.end()) {
      for (int64_t cand : it->second) {
        const auto& ew = folded_words_[cand];
        const int64_t len = static_cast<int64_t>(ew.size());
        if (pos + len > n) continue;
        bool ok = true;
        for (int64_t k = 1; k < len; ++k) {
          if (folded[pos + k] != ew[k]) {
            ok = false;
            break;
          }
        }
        if (ok) {
          out.push_back({cand, pos, len});
          pos += len;
          matched = true;
          break;  // candidates are longest-first
        }
      }
    }
    if (!matched) ++pos;
  }
  return out;
}

bool TripleStore::add(RelationTriple t) {
  if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
    throw std::invalid_argument("triple with empty field");
  }
  const std::string key = canonical_key(t);
  if (!dedup_.insert(key).second) return false;
  t.ordinal = static_cast<int64_t>(triples_.size());
  const int64_t id = t.ordinal;
  index_[fold_case(collapse_ws(t.head))].push_back(id);
  const std::string tail_key = fold_case(collapse_ws(t.tail));
  if (tail_key != fold_case(collapse_ws(t.head))) {
    index_[tail_key].push_back(id);
  }
  triples_.push_back(std::move(t));
  return true;
}

std::vector<RelationTriple> TripleStore::lookup(
    const std::string& entity) const {
  auto it = index_.find(fold_case(collapse_ws(entity)));
  if (it == index_.end()) return {};
  std::vector<RelationTriple> out;
  out.reserve(it->second.size());
  for (int64_t id : it->second) out.push_back(triples_[id]);
  return out;
}

bool TripleStore::contains(const RelationTriple& t) const {
  return dedup_.count(canonical_key(t)) > 0;
}

uint64_t TripleStore::content_hash() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0x1f;
    h *= 1099511628211ull;
  };
  for (const RelationTriple& t : triples_) {
    mix(t.head);
    mix(t.relation);
    mix(t.tail);
  }
  return h;
}

void TripleStore::export_tsv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write triples: " + path);
  for (const RelationTriple& t : triples_) {
    out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  }
}

std::vector<std::vector<std::string>> split_sentences(
    const std::vector<std::string>& words) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> current;
  for (const std::string& w : words) {
    current.push_back(w);
    if (w == "." || w == "!" || w == "?") {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<RelationTriple> extract_triples(
    const std::vector<std::string>& sentence, const Gazetteer& gaz) {
  std::vector<RelationTriple> out;
  const auto mentions = gaz.find_mentions(sentence);

  // mention-pair pattern
  for (size_t a = 0; a < mentions.size(); ++a) {
    for (size_t b = a + 1; b < mentions.size(); ++b) {
      const int64_t lo = mentions[a].pos + mentions[a].len;
      const int64_t hi = mentions[b].pos;
      const int64_t span = hi - lo;
      if (span < 1 || span > kMaxSpan) continue;
      bool has_verb = false;
      for (int64_t i = lo; i < hi; ++i) {
        if (verb_like(fold_case(sentence[i]))) {
          has_verb = true;
          break;
        }
      }
      if (!has_verb) continue;
      int64_t rl = lo, rh = hi;
      while (rl < rh && (trim_words().count(fold_case(sentence[rl])) ||
                         is_punct_token(sentence[rl]))) {
        ++rl;
      }
      while (rh > rl && (trim_words().count(fold_case(sentence[rh - 1])) ||
                         is_punct_token(sentence[rh - 1]))) {
        --rh;
      }
      if (rl >= rh) continue;
      RelationTriple t;
      t.head = gaz.canonical(mentions[a].entity);
      t.relation = join(sentence, rl, rh);
      t.tail = gaz.canonical(mentions[b].entity);
      out.push_back(std::move(t));
    }
  }

  // copular pattern: A is/was a/the X
  for (const auto& m : mentions) {
    const int64_t cop = m.pos + m.len;
    if (cop + 1 >= static_cast<int64_t>(sentence.size())) continue;
    const std::string cw = fold_case(sentence[cop]);
    if (cw != "is" && cw != "was" && cw != "are" && cw != "were") continue;
    const std::string art = fold_case(sentence[cop + 1]);
    if (art != "a" && art != "an" && art != "the") continue;
    std::vector<std::string> phrase;
    for (int64_t i = cop + 2;
         i < static_cast<int64_t>(sentence.size()) &&
         static_cast<int64_t>(phrase.size()) < kMaxPhrase;
         ++i) {
      const std::string f = fold_case(sentence[i]);
      if (is_punct_token(sentence[i]) || phrase_stop_words().count(f)) break;
      phrase.push_back(sentence[i]);
    }
    if (phrase.empty()) continue;
    RelationTriple t;
    t.head = gaz.canonical(m.entity);
    t.relation = "is";
    t.tail = join(phrase, 0, static_cast<int64_t>(phrase.size()));
    out.push_back(std::move(t));
  }
  return out;
}

TripleStore load_triples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open triples: " + path);
  TripleStore store;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() ||
        fields[2].empty()) {
      throw std::runtime_error("triples file " + path + ": line " +
                               std::to_string(lineno) +
                               " does not have exactly 3 fields");
    }
    RelationTriple t{fields[0], fields[1], fields[2], Provenance::kFile, -1};
    store.add(std::move(t));
  }
  return store;
}

TripleStore extract_from_training_set(
    const std::vector<corpus::Article>& train_articles, const Gazetteer& gaz) {
  TripleStore store;
  for (const corpus::Article& a : train_articles) {
    const auto words = corpus::word_tokenize(a.text);
    for (const auto& sentence : split_sentences(words)) {
      for (RelationTriple& t : extract_triples(sentence, gaz)) {
        t.provenance = Provenance::kTraining;
        store.add(std::move(t));
      }
    }
  }
  return store;
}

void add_dynamic(TripleStore& store,
                 const std::vector<RelationTriple>& triples) {
  for (const RelationTriple& t : triples) {
    RelationTriple copy = t;
    copy.provenance = Provenance::kDynamic;
    store.add(std::move(copy));
  }
}

ExtractionReport extraction_report(const TripleStore& store) {
  ExtractionReport r;
  r.triples = static_cast<int64_t>(store.size());
  std::unordered_map<std::string, int64_t> counts;
  for (const RelationTriple& t : store.triples()) {
    counts[fold_case(collapse_ws(t.head))]++;
    const std::string tail = fold_case(collapse_ws(t.tail));
    if (tail != fold_case(collapse_ws(t.head))) counts[tail]++;
  }
  r.entities = static_cast<int64_t>(counts.size());
  if (r.entities > 0) {
    int64_t total = 0;
    for (auto& [e, c] : counts) total += c;
    r.triples_per_entity =
        static_cast<double>(total) / static_cast<double>(r.entities);
  }
  return r;
}

std::string ExtractionReport::text() const {
  std::ostringstream ss;
  ss << "entities: " << entities << ", triples: " << triples
     << ", triples/entity: " << triples_per_entity;
  return ss.str();
}

}  // namespace relmem::kgraph
