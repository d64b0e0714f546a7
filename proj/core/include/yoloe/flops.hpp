#pragma once

#include <cstdint>

namespace yoloe {

/// Per-thread count of floating point operations issued by the numeric core.
/// A multiply-add counts as two; elementwise ops count one per element.
std::uint64_t flop_count();
void add_flops(std::uint64_t n);

/// Reports the operations issued between construction and flops().
class FlopScope {
 public:
  FlopScope() : start_(flop_count()) {}
  std::uint64_t flops() const { return flop_count() - start_; }

 private:
  std::uint64_t start_;
};

}  // namespace yoloe
