#include "yoloe/flops.hpp"

namespace yoloe {

namespace {
thread_local std::uint64_t g_flops = 0;
}

std::uint64_t flop_count() { return g_flops; }
void add_flops(std::uint64_t n) { g_flops += n; }

}  // namespace yoloe
