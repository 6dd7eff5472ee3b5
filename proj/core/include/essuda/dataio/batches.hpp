#pragma once

#include <cstdint>
#include <vector>

#include "essuda/dataio/dataset.hpp"

namespace essuda::data {

using Batch = std::vector<std::size_t>;

/// One epoch of sample indices, shuffled by (seed, epoch). The final partial
/// batch is emitted.
std::vector<Batch> iterate_batches(std::size_t split_size, std::size_t batch_size,
                                   std::uint64_t seed, std::uint64_t epoch = 0);
std::vector<Batch> iterate_batches(const DatasetSplit& split, std::size_t batch_size,
                                   std::uint64_t seed, std::uint64_t epoch = 0);

/// Endless batch stream addressed by global iteration number. Stateless, so
/// a resumed run only needs the iteration counter.
class BatchSampler {
 public:
  BatchSampler(std::size_t split_size, std::size_t batch_size, std::uint64_t seed);

  Batch batch(std::uint64_t iteration) const;
  std::size_t batches_per_epoch() const noexcept { return per_epoch_; }

 private:
  std::size_t size_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t per_epoch_;
};

}  // namespace essuda::data
