#include "relmem/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace relmem::corpus {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_article(const Article& a) {
  if (a.text.empty()) {
    throw std::runtime_error("empty article: " + a.id);
  }
  if (!valid_utf8(a.text)) {
    throw std::runtime_error("article is not valid UTF-8: " + a.id);
  }
}

std::string escape_token(const std::string& t) {
  std::string out;
  out.reserve(t.size());
  for (char c : t) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_token(const std::string& t) {
  std::string out;
  out.reserve(t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '\\' && i + 1 < t.size()) {
      ++i;
      switch (t[i]) {
        case '\\': out += '\\'; break;
        case 't': out += '\t'; break;
        case 'n': out += '\n'; break;
        case 'r': out += '\r'; break;
        default: out += t[i];
      }
    } else {
      out += t[i];
    }
  }
  return out;
}

}  // namespace

bool valid_utf8(const std::string& text) {
  size_t i = 0;
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const size_t n = text.size();
  while (i < n) {
    unsigned char c = s[i];
    size_t len;
    if (c < 0x80) {
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (size_t k = 1; k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) return false;
    }
    i += len;
  }
  return true;
}

std::vector<Article> load_dir(const std::string& path) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") {
      files.push_back(e.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Article> out;
  for (const std::string& f : files) {
    Article a{fs::path(f).stem().string(), read_file(f)};
    check_article(a);
    out.push_back(std::move(a));
  }
  if (out.empty()) throw std::runtime_error("no .txt articles in: " + path);
  return out;
}

std::vector<Article> load_delimited(const std::string& path) {
  const std::string content = read_file(path);
  const std::string base = fs::path(path).stem().string();
  std::vector<Article> out;
  std::string current;
  size_t pos = 0;
  int64_t index = 0;
  auto flush = [&]() {
    // trim a single trailing newline introduced by the delimiter line
    std::string text = current;
    if (!text.empty()) {
      Article a{base + "#" + std::to_string(index++), std::move(text)};
      check_article(a);
      out.push_back(std::move(a));
    }
    current.clear();
  };
  while (pos <= content.size()) {
    size_t nl = content.find('\n', pos);
    std::string line = nl == std::string::npos
                           ? content.substr(pos)
                           : content.substr(pos, nl - pos);
    if (line == "<|article|>") {
      flush();
    } else {
      current += line;
      if (nl != std::string::npos) current += '\n';
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  flush();
  if (out.empty()) throw std::runtime_error("no articles in: " + path);
  return out;
}

std::vector<Article> load(const std::string& path) {
  if (fs::is_directory(path)) return load_dir(path);
  if (fs::is_regular_file(path)) return load_delimited(path);
  throw std::runtime_error("corpus path does not exist: " + path);
}

std::vector<std::string> word_tokenize(const std::string& text) {
  std::vector<std::string> out;
  for (auto& ts : word_tokenize_spans(text)) out.push_back(std::move(ts.token));
  return out;
}

std::vector<TokenSpan> word_tokenize_spans(const std::string& text) {
  std::vector<TokenSpan> out;
  size_t i = 0;
  const size_t n = text.size();
  auto is_word_char = [](unsigned char c) {
    return std::isalnum(c) || c >= 0x80;  // multibyte bytes stay in words
  };
  while (i < n) {
    const unsigned char c = text[i];
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      size_t j = i;
      while (j < n && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back({text.substr(i, j - i), i, j});
      i = j;
    } else {
      out.push_back({text.substr(i, 1), i, i + 1});
      ++i;
    }
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<Article>& corpus,
                             VocabMode mode) {
  if (corpus.empty()) {
    throw std::invalid_argument("build_vocab: empty corpus");
  }
  std::map<std::string, int64_t> freq;  // ordered keys give the tie-break
  for (const Article& a : corpus) {
    if (mode == VocabMode::kChar) {
      for (char c : a.text) freq[std::string(1, c)]++;
    } else {
      for (const std::string& w : word_tokenize(a.text)) freq[w]++;
    }
  }
  std::vector<std::pair<std::string, int64_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) {
                     return a.second > b.second;  // lexicographic ties kept
                   });
  Vocabulary v;
  v.mode_ = mode;
  v.tokens_ = {"<s>", "<unk>", "<pad>"};
  for (auto& [tok, cnt] : items) v.tokens_.push_back(tok);
  v.reindex();
  return v;
}

void Vocabulary::reindex() {
  ids_.clear();
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int64_t>(i)).second) {
      throw std::runtime_error("vocabulary: duplicate token " + tokens_[i]);
    }
  }
}

int64_t Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int64_t id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("vocabulary: id out of range");
  }
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int64_t> Vocabulary::encode(const std::string& text) const {
  std::vector<int64_t> out;
  if (mode_ == VocabMode::kChar) {
    out.reserve(text.size());
    for (char c : text) out.push_back(id_of(std::string(1, c)));
  } else {
    for (const std::string& w : word_tokenize(text)) out.push_back(id_of(w));
  }
  return out;
}

std::string Vocabulary::decode(const std::vector<int64_t>& ids) const {
  return decode_spans(ids, nullptr);
}

std::string Vocabulary::decode_spans(
    const std::vector<int64_t>& ids,
    std::vector<std::pair<size_t, size_t>>* spans) const {
  std::string out;
  if (spans) spans->clear();
  for (size_t i = 0; i < ids.size(); ++i) {
    const std::string& t = token(ids[i]);
    if (mode_ == VocabMode::kWord && !out.empty()) out += ' ';
    const size_t begin = out.size();
    out += t;
    if (spans) spans->emplace_back(begin, out.size());
  }
  return out;
}

void Vocabulary::dump(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  out << "#mode\t" << (mode_ == VocabMode::kChar ? "char" : "word") << "\n";
  for (size_t i = 0; i < tokens_.size(); ++i) {
    out << escape_token(tokens_[i]) << "\t" << i << "\n";
  }
}

Vocabulary Vocabulary::load_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("#mode\t", 0) != 0) {
    throw std::runtime_error("vocabulary dump missing #mode header: " + path);
  }
  Vocabulary v;
  const std::string mode = line.substr(6);
  if (mode == "char") {
    v.mode_ = VocabMode::kChar;
  } else if (mode == "word") {
    v.mode_ = VocabMode::kWord;
  } else {
    throw std::runtime_error("vocabulary dump has unknown mode: " + mode);
  }
  int64_t expect = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("malformed vocabulary line: " + line);
    }
    const int64_t id = std::stoll(line.substr(tab + 1));
    if (id != expect++) {
      throw std::runtime_error("vocabulary ids out of order in: " + path);
    }
    v.tokens_.push_back(unescape_token(line.substr(0, tab)));
  }
  if (v.tokens_.size() < 3) {
    throw std::runtime_error("vocabulary dump too short: " + path);
  }
  v.reindex();
  return v;
}

std::vector<Segment> segment_stream(const std::vector<int64_t>& ids,
                                    const std::string& article_id, int64_t n) {
  if (n < 1) throw std::invalid_argument("segment_stream: n must be >= 1");
  std::vector<Segment> out;
  const int64_t len = static_cast<int64_t>(ids.size());
  for (int64_t start = 0, idx = 0; start < len; start += n, ++idx) {
    const int64_t end = std::min(start + n, len);
    Segment s;
    s.ids.assign(ids.begin() + start, ids.begin() + end);
    s.article_id = article_id;
    s.index = idx;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace relmem::corpus
