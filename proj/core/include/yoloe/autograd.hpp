#pragma once

#include <functional>
#include <string>
#include <vector>

#include "yoloe/tensor.hpp"

namespace yoloe::inline YOLOE_PRECISION_NS {

/// Receives the gradient of the node's output; accumulates into its inputs.
using BackwardFn = std::function<void(std::span<const real> grad_out)>;

/// Tape-based reverse-mode autodiff. Constructing a GradTape makes it the
/// active tape of the calling thread; ops whose inputs require gradients are
/// recorded on it in execution order (which is a topological order), and
/// backward() replays the records in reverse. Tapes nest: destroying one
/// reactivates its predecessor. One tape belongs to one thread.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active();

  /// Records an op producing `output`. Marks the output as requiring grad.
  void record(const char* op, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = seed and propagates to every reachable tensor.
  /// Leaf gradients accumulate across calls; intermediate gradients are
  /// released as soon as their node has been processed.
  void backward(const Tensor& loss, real seed = real(1));

  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> op_names() const;

 private:
  struct Node {
    const char* op;
    std::vector<Tensor> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  GradTape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Temporarily disables recording on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradTape* saved_;
};

/// True if any input requires grad and a tape is active.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Adds `g` into the gradient buffer of `t` (allocating it on first use).
void accumulate_grad(const Tensor& t, std::span<const real> g);

}  // namespace yoloe::inline YOLOE_PRECISION_NS
