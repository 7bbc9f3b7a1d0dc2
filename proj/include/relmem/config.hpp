#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace relmem::cfg {

using KvList = std::vector<std::pair<std::string, std::string>>;

// "key = value" lines; '#' starts a comment; blank lines ignored.
KvList parse_kv_text(const std::string& text);
KvList parse_kv_file(const std::string& path);
std::string render_kv(const KvList& kv);

uint64_t fnv1a(const void* data, size_t n);
uint64_t fnv1a(const std::string& s);
uint64_t file_hash(const std::string& path);
std::string hash_hex(uint64_t h);

// Ordered "key<TAB>value" record written next to every CLI artifact;
// includes content hashes for all inputs and outputs.
class Manifest {
 public:
  void add(const std::string& key, const std::string& value);
  void add_file_hash(const std::string& key, const std::string& path);
  void write(const std::string& path) const;
  const KvList& entries() const { return entries_; }

 private:
  KvList entries_;
};

}  // namespace relmem::cfg
