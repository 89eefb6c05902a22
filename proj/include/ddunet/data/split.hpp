#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ddunet::data {

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Seeded Fisher-Yates shuffle; the first ceil(ratio * n) ids train, the rest test.
Split split_dataset(const std::vector<std::string>& ids, double ratio, std::uint64_t seed);

}  // namespace ddunet::data
