#include "yoloe/optim.hpp"

#include <cmath>
#include <numbers>

namespace yoloe {

std::int64_t LrSchedule::warmup_steps() const {
  return std::max<std::int64_t>(1, std::llround(warmup_fraction * static_cast<double>(total_steps)));
}

double LrSchedule::at(std::int64_t step) const {
  const auto w = warmup_steps();
  if (step < w) return base_lr * static_cast<double>(step + 1) / static_cast<double>(w);
  const double span = static_cast<double>(std::max<std::int64_t>(1, total_steps - w));
  const double t = std::min(1.0, static_cast<double>(step - w) / span);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double Optimizer::grad_norm() const {
  double ss = 0;
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (real g : p.tensor.grad()) ss += double(g) * g;
  }
  return std::sqrt(ss);
}

namespace {

std::vector<std::vector<real>> zero_buffers(const std::vector<NamedTensor>& params) {
  std::vector<std::vector<real>> out;
  for (const auto& p : params) out.emplace_back(static_cast<std::size_t>(p.tensor.numel()), real(0));
  return out;
}

void load_buffers(const std::vector<NamedTensor>& params, const std::vector<NamedTensor>& tensors,
                  const std::string& prefix, std::vector<std::vector<real>>& bufs) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = prefix + params[i].name;
    const Tensor* found = nullptr;
    for (const auto& t : tensors) {
      if (t.name == name) found = &t.tensor;
    }
    if (!found) throw LookupError("optimizer state has no tensor '" + name + "'");
    if (found->numel() != static_cast<std::int64_t>(bufs[i].size())) {
      throw DimensionError("optimizer state '" + name + "' has the wrong size");
    }
    std::copy(found->data().begin(), found->data().end(), bufs[i].begin());
  }
}

std::vector<NamedTensor> dump_buffers(const std::vector<NamedTensor>& params, const std::string& prefix,
                                      const std::vector<std::vector<real>>& bufs) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({prefix + params[i].name, Tensor(params[i].tensor.shape(), bufs[i])});
  }
  return out;
}

}  // namespace

SgdMomentum::SgdMomentum(std::vector<NamedTensor> params, double momentum, double weight_decay)
    : Optimizer(std::move(params)), momentum_(momentum), weight_decay_(weight_decay), velocity_(zero_buffers(params_)) {}

void SgdMomentum::step(double lr, double grad_scale) {
  const auto mu = static_cast<real>(momentum_), wd = static_cast<real>(weight_decay_), rate = static_cast<real>(lr),
             gs = static_cast<real>(grad_scale);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    auto theta = p.mutable_data();
    auto g = p.grad();
    auto& v = velocity_[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      v[k] = mu * v[k] + gs * g[k] + wd * theta[k];
      theta[k] -= rate * v[k];
    }
  }
  ++steps_;
}

std::vector<NamedTensor> SgdMomentum::state() const { return dump_buffers(params_, "opt/momentum/", velocity_); }

void SgdMomentum::load_state(const std::vector<NamedTensor>& tensors) {
  load_buffers(params_, tensors, "opt/momentum/", velocity_);
}

AdamW::AdamW(std::vector<NamedTensor> params, double weight_decay, double beta1, double beta2, double eps)
    : Optimizer(std::move(params)),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(zero_buffers(params_)),
      v_(zero_buffers(params_)) {}

void AdamW::step(double lr, double grad_scale) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const auto b1 = static_cast<real>(beta1_), b2 = static_cast<real>(beta2_), gs = static_cast<real>(grad_scale);
  const auto decay = static_cast<real>(lr * weight_decay_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    auto theta = p.mutable_data();
    auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const real gk = gs * g[k];
      theta[k] -= decay * theta[k];
      m[k] = b1 * m[k] + (real(1) - b1) * gk;
      v[k] = b2 * v[k] + (real(1) - b2) * gk * gk;
      const double mhat = m[k] / bc1, vhat = v[k] / bc2;
      theta[k] -= static_cast<real>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

std::vector<NamedTensor> AdamW::state() const {
  auto out = dump_buffers(params_, "opt/adam_m/", m_);
  auto v = dump_buffers(params_, "opt/adam_v/", v_);
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

void AdamW::load_state(const std::vector<NamedTensor>& tensors) {
  load_buffers(params_, tensors, "opt/adam_m/", m_);
  load_buffers(params_, tensors, "opt/adam_v/", v_);
}

double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm) {
  double ss = 0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (real g : p.tensor.grad()) ss += double(g) * g;
  }
  const double norm = std::sqrt(ss);
  if (max_norm > 0 && norm > max_norm) {
    const auto s = static_cast<real>(max_norm / norm);
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      Tensor t = p.tensor;
      for (auto& g : t.mutable_grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace yoloe
