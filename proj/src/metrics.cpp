#include "relmem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace relmem::metrics {

namespace {

double mean_nll(const std::vector<TokenRecord>& records,
                const std::function<bool(const TokenRecord&)>& keep,
                const char* what) {
  double total = 0.0;
  int64_t count = 0;
  for (const TokenRecord& r : records) {
    if (keep(r)) {
      total += r.nll;
      ++count;
    }
  }
  if (count == 0) {
    throw std::invalid_argument(std::string(what) + ": no qualifying tokens");
  }
  return total / static_cast<double>(count);
}

std::set<std::string> entity_set(const std::vector<std::string>& words,
                                 const kgraph::Gazetteer& gaz) {
  std::set<std::string> out;
  for (const auto& m : gaz.find_mentions(words)) {
    out.insert(kgraph::fold_case(gaz.canonical(m.entity)));
  }
  return out;
}

double f1_of_sets(const std::set<std::string>& gen,
                  const std::set<std::string>& ref) {
  int64_t overlap = 0;
  for (const std::string& e : gen) overlap += ref.count(e);
  const double p = gen.empty() ? 0.0
                               : static_cast<double>(overlap) /
                                     static_cast<double>(gen.size());
  const double r = ref.empty() ? 0.0
                               : static_cast<double>(overlap) /
                                     static_cast<double>(ref.size());
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

}  // namespace

double perplexity(const std::vector<TokenRecord>& records) {
  return std::exp(
      mean_nll(records, [](const TokenRecord&) { return true; }, "perplexity"));
}

double bits_per_token(const std::vector<TokenRecord>& records) {
  return mean_nll(records, [](const TokenRecord&) { return true; },
                  "bits_per_token") /
         std::log(2.0);
}

double knowledge_perplexity(const std::vector<TokenRecord>& records) {
  return std::exp(mean_nll(records,
                           [](const TokenRecord& r) { return r.entity; },
                           "knowledge_perplexity"));
}

double non_entity_perplexity(const std::vector<TokenRecord>& records) {
  return std::exp(mean_nll(records,
                           [](const TokenRecord& r) { return !r.entity; },
                           "non_entity_perplexity"));
}

GateStats gate_stats(const std::vector<TokenRecord>& records) {
  GateStats s;
  double entity_sum = 0.0, other_sum = 0.0;
  for (const TokenRecord& r : records) {
    if (r.bypass) continue;
    const int bin = std::min(19, std::max(0, static_cast<int>(r.gate * 20.0)));
    s.histogram[bin]++;
    if (r.entity) {
      entity_sum += r.gate;
      s.entity_count++;
    } else {
      other_sum += r.gate;
      s.non_entity_count++;
    }
  }
  if (s.entity_count > 0) {
    s.entity_mean = entity_sum / static_cast<double>(s.entity_count);
  }
  if (s.non_entity_count > 0) {
    s.non_entity_mean = other_sum / static_cast<double>(s.non_entity_count);
  }
  return s;
}

double knowledge_f1_sets(const std::vector<std::string>& generated_words,
                         const std::vector<std::string>& reference_words,
                         const kgraph::Gazetteer& gaz) {
  return f1_of_sets(entity_set(generated_words, gaz),
                    entity_set(reference_words, gaz));
}

double knowledge_f1(
    const std::function<std::vector<std::string>(int64_t)>& sample_words,
    const std::vector<std::string>& reference_words,
    const kgraph::Gazetteer& gaz, int64_t n_samples, F1Reduce reduce) {
  if (n_samples < 1) {
    throw std::invalid_argument("knowledge_f1: n_samples must be >= 1");
  }
  const auto ref = entity_set(reference_words, gaz);
  double total = 0.0, best = 0.0;
  std::set<std::string> pooled;
  for (int64_t i = 0; i < n_samples; ++i) {
    const auto gen = entity_set(sample_words(i), gaz);
    const double f1 = f1_of_sets(gen, ref);
    total += f1;
    best = std::max(best, f1);
    pooled.insert(gen.begin(), gen.end());
  }
  switch (reduce) {
    case F1Reduce::kMean: return total / static_cast<double>(n_samples);
    case F1Reduce::kMax: return best;
    case F1Reduce::kPooled: return f1_of_sets(pooled, ref);
  }
  throw std::logic_error("bad F1Reduce");
}

InterventionResult causal_intervene(
    const InterventionProbe& probe,
    const std::function<std::string(
        const std::vector<kgraph::RelationTriple>&)>& decode,
    const std::function<std::vector<double>(
        const std::vector<kgraph::RelationTriple>&)>& next_dist,
    const corpus::Vocabulary& vocab) {
  InterventionResult result;
  result.before = decode(probe.memory);
  for (const TripleEdit& edit : probe.edits) {
    if (edit.index < 0 ||
        edit.index >= static_cast<int64_t>(probe.memory.size())) {
      throw std::invalid_argument("causal_intervene: edit index out of range");
    }
    std::vector<kgraph::RelationTriple> edited = probe.memory;
    edited[edit.index] = edit.replacement;

    InterventionResult::PerEdit pe;
    pe.after = decode(edited);
    pe.changed = pe.after != result.before;

    // rank of the edited tail's first token in the next-token distribution
    const std::vector<int64_t> tail_ids = vocab.encode(edit.replacement.tail);
    if (tail_ids.empty() || tail_ids[0] == corpus::Vocabulary::kUnk) {
      throw std::runtime_error("causal_intervene: unencodable edit tail: " +
                               edit.replacement.tail);
    }
    const std::vector<double> dist = next_dist(edited);
    const int64_t target = tail_ids[0];
    int64_t rank = 1;
    for (int64_t j = 0; j < static_cast<int64_t>(dist.size()); ++j) {
      if (j == target) continue;
      if (dist[j] > dist[target] || (dist[j] == dist[target] && j < target)) {
        ++rank;
      }
    }
    pe.tail_first_token_rank = rank;
    result.per_edit.push_back(std::move(pe));
  }
  return result;
}

std::string InterventionResult::text() const {
  std::ostringstream ss;
  ss << "before\t" << before << "\n";
  for (size_t i = 0; i < per_edit.size(); ++i) {
    ss << "after[" << i << "]\t" << per_edit[i].after << "\n"
       << "changed[" << i << "]\t" << (per_edit[i].changed ? "yes" : "no")
       << "\n"
       << "tail_rank[" << i << "]\t" << per_edit[i].tail_first_token_rank
       << "\n";
  }
  return ss.str();
}

std::string metrics_tsv(
    const std::vector<std::tuple<std::string, std::string, double>>& rows) {
  std::ostringstream ss;
  ss.precision(12);
  for (const auto& [metric, split, value] : rows) {
    ss << metric << '\t' << split << '\t' << value << '\n';
  }
  return ss.str();
}

std::string histogram_tsv(const GateStats& stats) {
  std::ostringstream ss;
  for (size_t i = 0; i < stats.histogram.size(); ++i) {
    ss << (static_cast<double>(i) / 20.0) << '\t' << stats.histogram[i]
       << '\n';
  }
  return ss.str();
}

}  // namespace relmem::metrics
