#pragma once

// AdamW with decoupled weight decay, per-group learning-rate scaling, global
// gradient-norm clipping and the linear warmup/decay schedule.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tabeae/autograd.hpp"
#include "tabeae/model.hpp"

namespace tabeae {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double cross_attention_lr_scale = 1.5;
};

class AdamW {
 public:
  AdamW(std::vector<Parameter>* params, AdamWOptions opt) : params_(params), opt_(opt) {
    for (const auto& p : *params_) {
      m_.push_back(ag::Matrix::Zero(p.var.rows(), p.var.cols()));
      v_.push_back(ag::Matrix::Zero(p.var.rows(), p.var.cols()));
    }
  }

  // Learning rate applied to a parameter for base rate `lr`.
  double group_lr(const Parameter& p, double lr) const {
    return p.group == ParamGroup::kCrossAttention ? lr * opt_.cross_attention_lr_scale : lr;
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_->size(); ++i) {
      auto& p = (*params_)[i];
      if (p.var.grad().size() == 0) continue;
      const double plr = group_lr(p, lr);
      auto& w = p.var.mutable_value();
      const auto& g = p.var.grad();
      if (decays(p.name)) w *= 1.0 - plr * opt_.weight_decay;
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
      v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
      w.array() -= plr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + opt_.eps);
    }
  }

  long steps_taken() const { return t_; }

 private:
  // Biases and layer-norm gains are not decayed.
  static bool decays(const std::string& name) {
    auto ends_with = [&](const char* suffix) {
      const std::string s(suffix);
      return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return !ends_with(".bias") && !ends_with(".gain");
  }

  std::vector<Parameter>* params_;
  AdamWOptions opt_;
  std::vector<ag::Matrix> m_;
  std::vector<ag::Matrix> v_;
  long t_ = 0;
};

// Global L2 norm of all gradients before clipping.
inline double clip_grad_norm(std::vector<Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.var.grad().size() != 0) sq += p.var.grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& p : params) {
      if (p.var.grad().size() != 0) p.var.node()->grad *= s;
    }
  }
  return norm;
}

// Multiplier at optimizer step `step` (0-based): linear ramp over the warmup
// steps, then linear decay to zero at `total`.
inline double linear_schedule(long step, long total, long warmup) {
  if (step < warmup) return static_cast<double>(step) / static_cast<double>(std::max(1L, warmup));
  return std::max(0.0, static_cast<double>(total - step) / static_cast<double>(std::max(1L, total - warmup)));
}

}  // namespace tabeae
