#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ddunet::app {

struct GradcheckReport {
  std::string scope;
  std::size_t instances = 0;
  std::size_t passed = 0;
  double max_rel_error = 0.0;
  std::size_t elements = 0;
  double seconds = 0.0;
  std::string worst;  // description of the worst element

  bool ok() const { return instances > 0 && passed == instances; }
};

const std::vector<std::string>& gradcheck_scopes();

bool is_gradcheck_scope(const std::string& scope);

// Runs `instances` seeded finite-difference checks for one scope in float64.
// Throws ShapeError for an unknown scope.
GradcheckReport run_gradcheck(const std::string& scope, std::size_t instances = 10, std::uint64_t seed = 0,
                              double tol = 1e-4);

}  // namespace ddunet::app
