#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace pvot {

/// Splittable pseudo-random stream.
///
/// A stream is identified by a 64-bit key derived from (master seed, task id);
/// `derive` hashes the key with a sub-id to produce an independent child, so a
/// tree of streams (experiment -> replication -> bootstrap draw) is fully
/// determined by the master seed and never depends on scheduling order.
/// Normals use Boost's ziggurat sampler, whose output is identical across
/// standard library implementations.
class RandomStream {
 public:
  RandomStream(std::uint64_t master_seed, std::uint64_t task_id);

  RandomStream derive(std::uint64_t sub_id) const;

  double normal();
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on {0, ..., count - 1}; count must be positive.
  std::size_t uniform_index(std::size_t count);

  std::uint64_t key() const { return key_; }

 private:
  explicit RandomStream(std::uint64_t key);

  std::uint64_t key_;
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
};

RandomStream make_stream(std::uint64_t master_seed, std::uint64_t task_id);

/// SplitMix64 finalizer; also used to build task ids from structured labels.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t combine_ids(std::uint64_t a, std::uint64_t b);

}  // namespace pvot
