#include "relmem/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace relmem {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void Adam::init(const std::vector<Tensor>& params) {
  step_ = 0;
  m_.clear();
  v_.clear();
  for (const Tensor& p : params) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void Adam::step(std::vector<Tensor>& params, double lr) {
  if (lr < 0) throw std::invalid_argument("adam: lr must be nonnegative");
  if (params.size() != m_.size()) {
    throw std::invalid_argument("adam: parameter list changed since init");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    if (static_cast<int64_t>(m_[pi].size()) != p.numel()) {
      throw std::invalid_argument("adam: moment/parameter shape mismatch");
    }
    auto& grad = p.g();
    auto& m = m_[pi];
    auto& v = v_[pi];
    auto& val = p.v();
    for (size_t i = 0; i < val.size(); ++i) {
      const double g = grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double lr_schedule(int64_t step, int64_t warmup, int64_t total, double peak) {
  if (!(0 < warmup && warmup < total)) {
    throw std::invalid_argument("lr_schedule: need 0 < warmup < total");
  }
  if (step < 0 || step > total) {
    throw std::invalid_argument("lr_schedule: step outside [0, total]");
  }
  if (step <= warmup) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total - warmup);
  return peak * 0.5 * (1.0 + std::cos(kPi * progress));
}

double clip_global_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (Tensor& p : params) {
    for (double g : p.g()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Tensor& p : params) {
      for (double& g : p.g()) g *= s;
    }
  }
  return norm;
}

}  // namespace relmem
