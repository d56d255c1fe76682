// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <thread>
#include <vector>

namespace gaslens {

/// Fixed-shape pairwise summation: split at n/2, sum halves recursively.
/// The tree depends only on n, so results are reproducible across platforms
/// and thread counts.
template <typename Scalar>
Scalar pairwise_sum(std::span<const Scalar> values) {
  switch (values.size()) {
    case 0:
      return Scalar(0);
    case 1:
      return values[0];
    case 2:
      return values[0] + values[1];
    default: {
      const auto half = values.size() / 2;
      return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
    }
  }
}

template <typename Scalar>
Scalar pairwise_mean(std::span<const Scalar> values) {
  return values.empty() ? Scalar(0) : pairwise_sum(values) / static_cast<Scalar>(values.size());
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; fn must only write state owned by index i.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, 256));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  const auto count = std::min(workers, n);
  for (std::size_t w = 0; w < count; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += count) fn(i);
    });
  }
}

}  // namespace gaslens
