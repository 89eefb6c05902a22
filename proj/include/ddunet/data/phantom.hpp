#pragma once

#include <cstdint>
#include <vector>

#include "ddunet/data/subject.hpp"

namespace ddunet::data {

inline constexpr std::size_t kMinPhantomSize = 16;

// A cube of extent `size` holding one random ellipsoid with nested shells
// 3 (inner), 1, 2 (outer) on background 0. Labels use the remapped convention.
// Deterministic in (seed, index).
std::string phantom_id(std::size_t index);

Subject phantom_subject(std::uint64_t seed, std::size_t size, std::size_t index);

std::vector<Subject> generate_phantom(std::uint64_t seed, std::size_t size, std::size_t count);

}  // namespace ddunet::data
