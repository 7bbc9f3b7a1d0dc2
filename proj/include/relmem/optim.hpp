#pragma once

#include <cstdint>
#include <vector>

#include "relmem/tensor.hpp"

namespace relmem {

// Bias-corrected Adam over an ordered parameter list. Moment buffers are
// shape-matched to the parameters they track.
class Adam {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Config cfg) : cfg_(cfg) {}

  void init(const std::vector<Tensor>& params);
  // applies one update from each parameter's grad buffer and bumps the step
  void step(std::vector<Tensor>& params, double lr);

  int64_t step_count() const { return step_; }
  const Config& config() const { return cfg_; }
  const std::vector<std::vector<double>>& m() const { return m_; }
  const std::vector<std::vector<double>>& v() const { return v_; }

 private:
  Config cfg_;
  int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Linear warmup 0 -> peak over `warmup` steps, then cosine decay to 0 at
// `total`. Throws on steps outside [0, total].
double lr_schedule(int64_t step, int64_t warmup, int64_t total, double peak);

// Scales all grads so their global L2 norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(std::vector<Tensor>& params, double max_norm);

}  // namespace relmem
