#pragma once

// Univariate orthogonal polynomial families of the Wiener-Askey scheme used
// for the expansions: Legendre on [-1, 1] (unit weight) for the physical axes
// and probabilists' Hermite (standard normal weight) for the random germ.

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "chaosop/error.hpp"

namespace chaosop {

enum class Family { Legendre, HermiteProbabilist };

inline std::string_view to_string(Family family) {
  return family == Family::Legendre ? "legendre" : "hermite";
}

/// Squared norm of the degree-n member under the family's weight:
/// 2/(2n+1) for Legendre, n! for probabilists' Hermite.
inline double norm_sq(Family family, int degree) {
  if (degree < 0) throw ParameterError("norm_sq: negative degree");
  if (family == Family::Legendre) return 2.0 / (2.0 * degree + 1.0);
  return std::tgamma(static_cast<double>(degree) + 1.0);
}

/// Fills table[k * (max_degree + 1) + n] with the order-k derivative of the
/// degree-n polynomial at x, for n <= max_degree and k <= max_order.
///
/// Derivatives come from differentiating the three-term recurrence k times:
///   Legendre  (n+1) P'_{n+1} = (2n+1) (x P_n^(k) + k P_n^(k-1)) - n P_{n-1}^(k)
///   Hermite       He_{n+1}^(k) = x He_n^(k) + k He_n^(k-1) - n He_{n-1}^(k)
inline void eval_table(Family family, int max_degree, int max_order, double x,
                       std::span<double> table) {
  if (!std::isfinite(x)) throw DomainError("orthopoly: non-finite abscissa");
  if (max_degree < 0 || max_order < 0) throw ParameterError("orthopoly: negative degree or order");
  const std::size_t stride = static_cast<std::size_t>(max_degree) + 1;
  if (table.size() < stride * (static_cast<std::size_t>(max_order) + 1))
    throw ShapeError("orthopoly: table too small");

  for (int k = 0; k <= max_order; ++k) {
    double* row = table.data() + k * stride;
    const double* below = k > 0 ? table.data() + (k - 1) * stride : nullptr;
    row[0] = k == 0 ? 1.0 : 0.0;
    if (max_degree == 0) continue;
    row[1] = k == 0 ? x : (k == 1 ? 1.0 : 0.0);
    for (int n = 1; n < max_degree; ++n) {
      const double lower = below ? k * below[n] : 0.0;
      if (family == Family::Legendre) {
        row[n + 1] = ((2.0 * n + 1.0) * (x * row[n] + lower) - n * row[n - 1]) / (n + 1.0);
      } else {
        row[n + 1] = x * row[n] + lower - n * row[n - 1];
      }
    }
  }
}

inline double eval_deriv(Family family, int degree, double x, int order) {
  if (degree < 0 || order < 0) throw ParameterError("orthopoly: negative degree or order");
  std::vector<double> table((degree + 1) * (order + 1));
  eval_table(family, degree, order, x, table);
  return table[order * (degree + 1) + degree];
}

inline double eval(Family family, int degree, double x) { return eval_deriv(family, degree, x, 0); }

/// Orthonormal variant of eval_table: every entry divided by sqrt(norm_sq(n)).
inline void eval_table_orthonormal(Family family, int max_degree, int max_order, double x,
                                   std::span<double> table) {
  eval_table(family, max_degree, max_order, x, table);
  const std::size_t stride = static_cast<std::size_t>(max_degree) + 1;
  for (int n = 0; n <= max_degree; ++n) {
    const double scale = 1.0 / std::sqrt(norm_sq(family, n));
    for (int k = 0; k <= max_order; ++k) table[k * stride + n] *= scale;
  }
}

}  // namespace chaosop
