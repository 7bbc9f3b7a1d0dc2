#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace relmem::corpus {

struct Article {
  std::string id;    // stable, unique within a corpus
  std::string text;  // raw UTF-8
};

// One article per *.txt file, ordered by filename.
std::vector<Article> load_dir(const std::string& path);
// Single file, articles separated by a line containing only "<|article|>".
std::vector<Article> load_delimited(const std::string& path);
// Dispatches on whether path is a directory or a file.
std::vector<Article> load(const std::string& path);

bool valid_utf8(const std::string& text);

enum class VocabMode { kChar, kWord };

// Word tokenizer used by word-mode vocabularies and by all entity matching:
// alphanumeric runs are words, punctuation characters are single tokens.
std::vector<std::string> word_tokenize(const std::string& text);
// Same split plus each token's [begin,end) byte range in text.
struct TokenSpan {
  std::string token;
  size_t begin, end;
};
std::vector<TokenSpan> word_tokenize_spans(const std::string& text);

// token <-> id bijection with start / unknown / padding specials at the
// first ids, then corpus tokens by (descending frequency, lexicographic)
class Vocabulary {
 public:
  static constexpr int64_t kStart = 0;
  static constexpr int64_t kUnk = 1;
  static constexpr int64_t kPad = 2;

  static Vocabulary build(const std::vector<Article>& corpus, VocabMode mode);

  VocabMode mode() const { return mode_; }
  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
  int64_t id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token(int64_t id) const;

  std::vector<int64_t> encode(const std::string& text) const;
  std::string decode(const std::vector<int64_t>& ids) const;
  // decode plus each token's [begin,end) byte range in the decoded text
  std::string decode_spans(const std::vector<int64_t>& ids,
                           std::vector<std::pair<size_t, size_t>>* spans) const;

  // line-oriented "token<TAB>id" dump (escaped); first line records the mode
  void dump(const std::string& path) const;
  static Vocabulary load_dump(const std::string& path);

 private:
  VocabMode mode_ = VocabMode::kChar;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int64_t> ids_;
  void reindex();
};

struct Segment {
  std::vector<int64_t> ids;
  std::string article_id;
  int64_t index = 0;  // position within the article
};

// Chunks an article's token stream into segments of length n (the final
// segment may be shorter). Empty input yields no segments.
std::vector<Segment> segment_stream(const std::vector<int64_t>& ids,
                                    const std::string& article_id, int64_t n);

}  // namespace relmem::corpus
