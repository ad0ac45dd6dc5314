#pragma once

#include <string>

#include "dinf/common.hpp"
#include "dinf/rng.hpp"

namespace dinf {

// Toy dataset generators. "gmm2" is the desk default: a balanced two-component
// Gaussian mixture with +-1.5/-+1.0 centers (first two coordinates) and 0.5
// component spread. "gaussian" is a standard normal cloud.
Dataset generate_dataset(const std::string& kind, int n, int dim, std::uint64_t seed);

}  // namespace dinf
