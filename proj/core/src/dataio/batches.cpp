#include "essuda/dataio/batches.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "essuda/rng.hpp"

namespace essuda::data {

std::vector<Batch> iterate_batches(std::size_t split_size, std::size_t batch_size,
                                   std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 1) throw DataError("batch_size must be >= 1");
  std::vector<std::size_t> order(split_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, {epoch}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < split_size; start += batch_size) {
    const std::size_t end = std::min(split_size, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<Batch> iterate_batches(const DatasetSplit& split, std::size_t batch_size,
                                   std::uint64_t seed, std::uint64_t epoch) {
  return iterate_batches(split.size(), batch_size, seed, epoch);
}

BatchSampler::BatchSampler(std::size_t split_size, std::size_t batch_size, std::uint64_t seed)
    : size_(split_size), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 1) throw DataError("batch_size must be >= 1");
  if (split_size < 1) throw DataError("cannot sample batches from an empty split");
  per_epoch_ = (split_size + batch_size - 1) / batch_size;
}

Batch BatchSampler::batch(std::uint64_t iteration) const {
  const std::uint64_t epoch = iteration / per_epoch_;
  const std::size_t slot = static_cast<std::size_t>(iteration % per_epoch_);
  return iterate_batches(size_, batch_size_, seed_, epoch)[slot];
}

}  // namespace essuda::data
