#include "yoloe/autograd.hpp"

namespace yoloe::inline YOLOE_PRECISION_NS {

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

GradTape::GradTape() : previous_(g_active_tape) { g_active_tape = this; }

GradTape::~GradTape() {
  if (g_active_tape == this) g_active_tape = previous_;
  // Outputs must not point at a dead tape.
  for (auto& n : nodes_) {
    if (n.output) {
      n.output->tape = nullptr;
      n.output->node = -1;
      n.output->requires_grad = false;
    }
  }
}

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(const char* op, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn) {
  auto* impl = output.impl();
  impl->requires_grad = true;
  impl->tape = this;
  impl->node = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(Node{op, std::move(inputs), output.impl_ptr(), std::move(fn)});
}

void GradTape::backward(const Tensor& loss, real seed) {
  if (!loss.defined()) throw UsageError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  auto* impl = loss.impl();
  if (impl->tape != this || impl->node < 0) {
    throw UsageError("backward on a tensor that was not recorded on this tape (detached?)");
  }
  if (consumed_) throw UsageError("backward called twice on the same tape");
  consumed_ = true;

  impl->grad_buffer()[0] += seed;
  for (auto i = impl->node; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.output->grad.empty()) continue;  // nothing flowed here
    n.fn(n.output->grad);
    if (!n.output->is_leaf()) std::vector<real>().swap(n.output->grad);
  }
  // The graph is no longer needed; release saved activations.
  for (auto& n : nodes_) {
    n.fn = nullptr;
    n.inputs.clear();
  }
}

std::vector<std::string> GradTape::op_names() const {
  std::vector<std::string> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) out.emplace_back(n.op);
  return out;
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  for (const auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void accumulate_grad(const Tensor& t, std::span<const real> g) {
  if (!t.defined() || !t.requires_grad()) return;
  auto& buf = t.impl()->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

}  // namespace yoloe::inline YOLOE_PRECISION_NS
