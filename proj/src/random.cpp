#include "pvot/random.hpp"

#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include "pvot/error.hpp"

namespace pvot {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t combine_ids(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (b * 0xd6e8feb86659fd93ULL + 0x632be59bd9b4e019ULL));
}

RandomStream::RandomStream(std::uint64_t key) : key_(key), engine_(key) {}

RandomStream::RandomStream(std::uint64_t master_seed, std::uint64_t task_id)
    : RandomStream(combine_ids(master_seed, task_id)) {}

RandomStream RandomStream::derive(std::uint64_t sub_id) const { return RandomStream(combine_ids(key_, sub_id)); }

double RandomStream::normal() { return normal_(engine_); }

double RandomStream::uniform() {
  boost::random::uniform_01<double> dist;
  return dist(engine_);
}

std::size_t RandomStream::uniform_index(std::size_t count) {
  if (count == 0) throw Error(ErrorKind::InvalidArgument, "uniform_index over an empty range");
  boost::random::uniform_int_distribution<std::size_t> dist(0, count - 1);
  return dist(engine_);
}

RandomStream make_stream(std::uint64_t master_seed, std::uint64_t task_id) {
  return RandomStream(master_seed, task_id);
}

}  // namespace pvot
