#pragma once

#include <cmath>
#include <stdexcept>

namespace memosched {

// digamma(x) for x > 0: upward recurrence until x >= 6, then the asymptotic
// series through the x^-12 term. Absolute error below 1e-10 on (0, inf).
inline double digamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("digamma: requires x > 0");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

// trigamma(x) for x > 0: same recurrence/series scheme, through x^-13.
inline double trigamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("trigamma: requires x > 0");
  double acc = 0.0;
  while (x < 6.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * inv2 *
      (1.0 / 6.0 -
       inv2 * (1.0 / 30.0 -
               inv2 * (1.0 / 42.0 -
                       inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0))))));
  return acc + inv + 0.5 * inv2 + series;
}

}  // namespace memosched
