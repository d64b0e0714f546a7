#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "yoloe/model.hpp"

namespace yoloe {

/// Linear warmup over the first `warmup_fraction` of steps, then cosine decay
/// to zero at `total_steps`.
struct LrSchedule {
  double base_lr = 0.01;
  std::int64_t total_steps = 1;
  double warmup_fraction = 0.05;

  std::int64_t warmup_steps() const;
  double at(std::int64_t step) const;
};

/// Updates parameters in place from their accumulated gradients.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// grad_scale multiplies every gradient first (e.g. 1 / batch size).
  virtual void step(double lr, double grad_scale) = 0;
  /// Buffers needed to resume bit-exactly, named "opt/<kind>/<param>".
  virtual std::vector<NamedTensor> state() const = 0;
  virtual void load_state(const std::vector<NamedTensor>& tensors) = 0;
  std::int64_t steps_taken() const { return steps_; }
  void set_steps_taken(std::int64_t n) { steps_ = n; }
  void zero_grad();
  /// L2 norm of the (unscaled) accumulated gradient over all parameters.
  double grad_norm() const;

 protected:
  explicit Optimizer(std::vector<NamedTensor> params) : params_(std::move(params)) {}
  std::vector<NamedTensor> params_;
  std::int64_t steps_ = 0;
};

/// theta -= lr * v with v = momentum * v + g + weight_decay * theta.
class SgdMomentum : public Optimizer {
 public:
  SgdMomentum(std::vector<NamedTensor> params, double momentum = 0.9, double weight_decay = 0.0);
  void step(double lr, double grad_scale) override;
  std::vector<NamedTensor> state() const override;
  void load_state(const std::vector<NamedTensor>& tensors) override;

 private:
  double momentum_, weight_decay_;
  std::vector<std::vector<real>> velocity_;
};

/// Adam moments with decoupled weight decay:
///   theta -= lr * wd * theta
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
///   theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
class AdamW : public Optimizer {
 public:
  AdamW(std::vector<NamedTensor> params, double weight_decay = 0.01, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);
  void step(double lr, double grad_scale) override;
  std::vector<NamedTensor> state() const override;
  void load_state(const std::vector<NamedTensor>& tensors) override;

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  std::vector<std::vector<real>> m_, v_;
};

/// Scales all gradients so their joint L2 norm is at most max_norm; returns
/// the norm before clipping.
double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm);

}  // namespace yoloe
