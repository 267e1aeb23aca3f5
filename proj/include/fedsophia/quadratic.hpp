#pragma once

// Two-parameter quadratic f(t) = t1^2 + 2 t1 t2 + 3 t2^2 with Hessian
// [[2, 2], [2, 6]], used to compare uniform, diagonally preconditioned and
// full Newton steps.

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

namespace fedsophia {

enum class QuadraticMethod { kGradient, kDiagNewton, kFullNewton };

/// Throws ConfigError for anything other than gradient, diag-newton, full-newton.
QuadraticMethod parse_quadratic_method(std::string_view name);

using Point2 = std::array<double, 2>;

double quadratic_value(const Point2& t);
Point2 quadratic_gradient(const Point2& t);

struct QuadraticIterate {
  std::size_t step = 0;
  Point2 theta{};
  double value = 0.0;
};

/// Iterates t <- t - eta * P g with P = I, diag(1/2, 1/6) or H^-1 depending
/// on the method. The first row is the start point. Stops after max_steps
/// steps or once |grad|_inf <= stop_tol.
std::vector<QuadraticIterate> quadratic_demo(const Point2& start, QuadraticMethod method,
                                             double eta, std::size_t max_steps,
                                             double stop_tol = 1e-12);

}  // namespace fedsophia
