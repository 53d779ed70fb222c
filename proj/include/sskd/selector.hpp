#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace sskd::selector {

struct TransferMask {
  std::vector<bool> selected;
  // 1-based rank of the positive column in each row; 1 = correct prediction.
  std::vector<std::int64_t> error_level;

  std::size_t size() const { return selected.size(); }
  std::size_t count() const;
};

// For every row i, the 1-based position of column i when the row is sorted
// in descending order; equal scores are ordered by ascending column index.
// Throws DimensionError for a non-square matrix.
std::vector<std::int64_t> error_levels(const torch::Tensor& scores);

// Keeps every rank-1 row plus the floor(k/100 * #incorrect) incorrect rows
// with the smallest ranks (ties by row index). Throws ConfigError unless
// 0 <= k <= 100.
TransferMask build_mask(std::span<const std::int64_t> ranks, double k_percent);

}  // namespace sskd::selector
