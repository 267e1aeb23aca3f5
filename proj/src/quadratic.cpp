#include "fedsophia/quadratic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsophia/errors.hpp"

namespace fedsophia {

QuadraticMethod parse_quadratic_method(std::string_view name) {
  if (name == "gradient") return QuadraticMethod::kGradient;
  if (name == "diag-newton") return QuadraticMethod::kDiagNewton;
  if (name == "full-newton") return QuadraticMethod::kFullNewton;
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected gradient, diag-newton or full-newton)");
}

double quadratic_value(const Point2& t) {
  return t[0] * t[0] + 2.0 * t[0] * t[1] + 3.0 * t[1] * t[1];
}

Point2 quadratic_gradient(const Point2& t) {
  return {2.0 * t[0] + 2.0 * t[1], 2.0 * t[0] + 6.0 * t[1]};
}

std::vector<QuadraticIterate> quadratic_demo(const Point2& start, QuadraticMethod method,
                                             double eta, std::size_t max_steps,
                                             double stop_tol) {
  if (!(eta > 0.0)) throw DomainError("quadratic_demo: step size must be > 0");
  std::vector<QuadraticIterate> out;
  Point2 t = start;
  out.push_back({0, t, quadratic_value(t)});
  for (std::size_t k = 1; k <= max_steps; ++k) {
    const Point2 g = quadratic_gradient(t);
    if (std::max(std::abs(g[0]), std::abs(g[1])) <= stop_tol) break;
    Point2 dir{};
    switch (method) {
      case QuadraticMethod::kGradient:
        dir = g;
        break;
      case QuadraticMethod::kDiagNewton:
        dir = {g[0] / 2.0, g[1] / 6.0};
        break;
      case QuadraticMethod::kFullNewton:
        // H^-1 = [[6, -2], [-2, 2]] / 8
        dir = {(6.0 * g[0] - 2.0 * g[1]) / 8.0, (-2.0 * g[0] + 2.0 * g[1]) / 8.0};
        break;
    }
    t = {t[0] - eta * dir[0], t[1] - eta * dir[1]};
    out.push_back({k, t, quadratic_value(t)});
  }
  return out;
}

}  // namespace fedsophia
