#include "ddunet/data/split.hpp"

#include <cmath>
#include <set>

#include "ddunet/engine/error.hpp"
#include "ddunet/engine/rng.hpp"

namespace ddunet::data {

Split split_dataset(const std::vector<std::string>& ids, double ratio, std::uint64_t seed) {
  if (ids.empty()) throw DataError("split_dataset: empty subject list");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ShapeError("split_dataset: ratio must lie in (0, 1]");
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw DataError("split_dataset: duplicate subject ids");
  }
  std::vector<std::string> order = ids;
  Rng rng(seed, Stream::kSplit);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  const auto n_train = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(order.size())));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

}  // namespace ddunet::data
