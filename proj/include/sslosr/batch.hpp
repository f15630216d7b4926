#pragma once

#include <cstdint>
#include <vector>

#include "sslosr/error.hpp"
#include "sslosr/rng.hpp"

namespace sslosr {

// Index batches over a pool of n samples: a fresh deterministic permutation
// per (seed, epoch), split into batch_size chunks, final short batch kept.
inline std::vector<std::vector<std::size_t>> batch_indices(
    std::size_t n, std::size_t batch_size, std::uint64_t seed,
    std::uint64_t epoch) {
  if (batch_size < 1) throw argument_error("batch_indices: batch_size >= 1");
  std::vector<std::vector<std::size_t>> batches;
  if (n == 0) return batches;

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(perm);

  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

// Endless batch stream over one pool; advances epochs as the pool drains.
// Stream position is a pure function of how many batches were consumed, so
// a restored trainer can fast-forward to its step counter.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_size_(batch_size), seed_(seed) {}

  bool empty() const { return n_ == 0; }

  std::size_t batches_per_epoch() const {
    return n_ == 0 ? 0 : (n_ + batch_size_ - 1) / batch_size_;
  }

  std::vector<std::size_t> next() {
    if (n_ == 0) return {};
    const std::size_t bpe = batches_per_epoch();
    const std::uint64_t epoch = consumed_ / bpe;
    const std::size_t pos = static_cast<std::size_t>(consumed_ % bpe);
    if (cached_epoch_ != epoch || current_.empty()) {
      current_ = batch_indices(n_, batch_size_, seed_, epoch);
      cached_epoch_ = epoch;
    }
    ++consumed_;
    return current_[pos];
  }

  void advance_to(std::uint64_t consumed) { consumed_ = consumed; }

 private:
  std::size_t n_, batch_size_;
  std::uint64_t seed_;
  std::uint64_t consumed_ = 0;
  std::uint64_t cached_epoch_ = static_cast<std::uint64_t>(-1);
  std::vector<std::vector<std::size_t>> current_;
};

}  // namespace sslosr
