#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Property suites shared by `yoloe check` and the acceptance tests. Results
// use plain types so the double-precision gradient suite can report to
// single-precision callers.

namespace yoloe::verify {

struct CheckItem {
  std::string name;
  bool passed = false;
  std::string detail;
};

bool all_passed(const std::vector<CheckItem>& items);

struct GradSummary {
  std::string target;  // "loss_cls", "loss_box", "loss_mask_bce", "loss_mask_dice", "refine_theta"
  int instances = 0;
  double worst_rel_error = 0;
};

/// Central-difference checks in double precision on `instances` seeded random
/// small problems per target (N <= 20, C <= 4, masks <= 16x16).
std::vector<GradSummary> gradient_suite(int instances = 20, std::uint64_t seed = 1);
std::vector<CheckItem> check_grads(int instances = 20, std::uint64_t seed = 1, double tolerance = 1e-3);

struct FoldSummary {
  int triples = 0;
  double max_diff_stacked = 0;   // vs the refine-path logits
  double max_diff_fused = 0;
  double argmax_agree_stacked = 0;  // fraction of anchor rows
  double argmax_agree_fused = 0;
  std::uint64_t flops_stacked = 0;  // classification from pre-projection features
  std::uint64_t flops_fused = 0;
  bool fused_cheaper_every_triple = true;
};

/// Seeded random (model, prompts, aligner) triples, one random 64x64 image
/// each, comparing folded classification with tau * O * refine(P)^T.
FoldSummary fold_suite(int triples = 100, std::uint64_t seed = 1);
std::vector<CheckItem> check_fold(int triples = 100, std::uint64_t seed = 1, double tolerance = 1e-5);

/// Kernel and pipeline oracles: matmul and conv2d against naive loops,
/// classification against a double loop, threshold-0 decoding, LRPC at
/// delta = -inf against brute force, RLE round trips.
std::vector<CheckItem> check_oracle(std::uint64_t seed = 1);

}  // namespace yoloe::verify
