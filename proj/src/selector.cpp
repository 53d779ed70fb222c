#include "sskd/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sskd/errors.hpp"

namespace sskd::selector {

std::size_t TransferMask::count() const {
  return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true));
}

std::vector<std::int64_t> error_levels(const torch::Tensor& scores) {
  if (scores.dim() != 2 || scores.size(0) != scores.size(1)) {
    throw DimensionError("error_levels: expected a square score matrix");
  }
  const auto s = scores.detach().to(torch::kCPU, torch::kDouble).contiguous();
  const std::int64_t n = s.size(0);
  const double* p = s.data_ptr<double>();
  std::vector<std::int64_t> ranks(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = p + i * n;
    const double positive = row[i];
    // Columns ranked ahead of i: strictly larger scores, or equal scores with
    // a smaller column index.
    std::int64_t ahead = 0;
    for (std::int64_t j = 0; j < n; ++j) {
      if (row[j] > positive || (row[j] == positive && j < i)) ++ahead;
    }
    ranks[i] = ahead + 1;
  }
  return ranks;
}

TransferMask build_mask(std::span<const std::int64_t> ranks, double k_percent) {
  if (!(k_percent >= 0.0 && k_percent <= 100.0)) {
    throw ConfigError("select_k_percent must lie in [0, 100], got " + std::to_string(k_percent));
  }
  const std::size_t n = ranks.size();
  TransferMask mask{std::vector<bool>(n, false), std::vector<std::int64_t>(ranks.begin(), ranks.end())};
  std::vector<std::size_t> incorrect;
  for (std::size_t i = 0; i < n; ++i) {
    if (ranks[i] < 1) {
      throw DomainError("error level " + std::to_string(ranks[i]) + " must be >= 1");
    }
    if (ranks[i] == 1) {
      mask.selected[i] = true;
    } else {
      incorrect.push_back(i);
    }
  }
  std::stable_sort(incorrect.begin(), incorrect.end(),
                   [&](std::size_t a, std::size_t b) { return ranks[a] < ranks[b]; });
  // k * count is exact in long double; correct the quotient so the floor is exact too
  const long double scaled = static_cast<long double>(k_percent) * static_cast<long double>(incorrect.size());
  auto keep = static_cast<std::size_t>(std::floor(scaled / 100.0L));
  while (static_cast<long double>(keep + 1) * 100.0L <= scaled) ++keep;
  while (keep > 0 && static_cast<long double>(keep) * 100.0L > scaled) --keep;
  for (std::size_t i = 0; i < keep; ++i) mask.selected[incorrect[i]] = true;
  return mask;
}

}  // namespace sskd::selector
