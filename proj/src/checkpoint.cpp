#include "relmem/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace relmem::checkpoint {

namespace {

constexpr char kMagic[] = "RELMEMLM1";
constexpr size_t kMagicLen = 9;

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_i64(std::ostream& out, int64_t v) {
  const auto u = static_cast<uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double v) {
  put_i64(out, static_cast<int64_t>(std::bit_cast<uint64_t>(v)));
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

int64_t get_i64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return static_cast<int64_t>(v);
}

double get_f64(std::istream& in) {
  return std::bit_cast<double>(static_cast<uint64_t>(get_i64(in)));
}

}  // namespace

void save(const std::string& path, const model::Parameters& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, kMagicLen);
  std::ostringstream cfg;
  for (const auto& [k, v] : params.cfg.echo()) cfg << k << " = " << v << "\n";
  const std::string cfg_text = cfg.str();
  put_u32(out, static_cast<uint32_t>(cfg_text.size()));
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  const auto named = params.named();
  put_u32(out, static_cast<uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<uint32_t>(t.shape().size()));
    for (int64_t dim : t.shape()) put_i64(out, dim);
    for (double x : t.v()) put_f64(out, x);
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

model::Parameters load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const uint32_t cfg_len = get_u32(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw std::runtime_error("checkpoint: truncated config in " + path);
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream cfg_ss(cfg_text);
  std::string line;
  while (std::getline(cfg_ss, line)) {
    const size_t eq = line.find(" = ");
    if (eq == std::string::npos) {
      throw std::runtime_error("checkpoint: malformed config line: " + line);
    }
    kv.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  model::ModelConfig cfg = model::ModelConfig::from_echo(kv);
  model::Parameters params = model::Parameters::init(cfg);

  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : params.named()) by_name.emplace(name, t);

  const uint32_t n_records = get_u32(in);
  if (n_records != by_name.size()) {
    throw std::runtime_error("checkpoint: record count mismatch in " + path);
  }
  for (uint32_t r = 0; r < n_records; ++r) {
    const uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("checkpoint: truncated name in " + path);
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint: unknown parameter " + name);
    }
    const uint32_t ndim = get_u32(in);
    Shape shape;
    for (uint32_t i = 0; i < ndim; ++i) shape.push_back(get_i64(in));
    if (shape != it->second.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    for (double& x : it->second.v()) x = get_f64(in);
  }
  return params;
}

}  // namespace relmem::checkpoint
