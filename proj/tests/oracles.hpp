// SPDX-License-Identifier: Apache-2.0
//
// Test-side reference implementations, kept independent of the library code
// paths they check: raw-moment correlation formulas, O(n^2) average ranks,
// and a central-difference helper for plain vector functions.
#pragma once

#include <functional>
#include <span>
#include <vector>

namespace oracle {

double pearson(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> v);
double spearman(std::span<const double> x, std::span<const double> y);
double r_squared(std::span<const double> pred, std::span<const double> target);

// Slope/intercept of the least-squares fit y ~ a + b*x.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
};
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

// Central differences d f / d x_i for a scalar function of a vector.
std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::vector<double> x, double eps);

}  // namespace oracle
