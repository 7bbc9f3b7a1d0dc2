#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace relmem::cli {

struct CommonOpts {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;  // overrides the config seed
};

// Subcommand bodies; each writes its artifacts plus a manifest into the
// output directory and returns a process exit code. Errors print a message
// naming the missing artifact or bad input.
int cmd_extract(const std::string& corpus_path, const std::string& gazetteer,
                const std::string& out_dir);
int cmd_build_index(const CommonOpts& opts);
int cmd_train(const CommonOpts& opts);
int cmd_eval(const CommonOpts& opts, const std::string& checkpoint);
int cmd_generate(const CommonOpts& opts, const std::string& checkpoint,
                 const std::string& prompt, const std::string& memory_path,
                 const std::string& mode, double temperature, int64_t length);
int cmd_intervene(const CommonOpts& opts, const std::string& checkpoint,
                  const std::string& probe_path);
int cmd_gates(const CommonOpts& opts, const std::string& checkpoint);
int cmd_ablate(const CommonOpts& opts);

}  // namespace relmem::cli
