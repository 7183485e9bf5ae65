#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include "memosched/special_functions.hpp"
#include "oracles.hpp"

using memosched::digamma;
using memosched::trigamma;

TEST_CASE("digamma matches known constants") {
  CHECK(std::abs(digamma(1.0) - (-0.5772156649015329)) < 1e-10);
  CHECK(std::abs(digamma(2.0) - (1.0 - 0.5772156649015329)) < 1e-10);
  CHECK(std::abs(digamma(0.5) - (-1.9635100260214235)) < 1e-10);  // -gamma - 2 ln 2
}

TEST_CASE("trigamma matches known constants") {
  const double pi = 3.14159265358979323846;
  CHECK(std::abs(trigamma(1.0) - pi * pi / 6.0) < 1e-10);
  CHECK(std::abs(trigamma(0.5) - pi * pi / 2.0) < 1e-9);
}

TEST_CASE("recurrence identities hold tightly") {
  for (double x : {0.5, 1.0, 10.0}) {
    CHECK(std::abs(digamma(x + 1.0) - digamma(x) - 1.0 / x) < 1e-12);
    CHECK(std::abs(trigamma(x + 1.0) - trigamma(x) + 1.0 / (x * x)) < 1e-12);
  }
}

TEST_CASE("series oracle agreement over a wide argument range") {
  for (double x : {1e-3, 0.02, 0.3, 0.77, 1.5, 3.0, 5.99, 6.0, 6.01, 12.5, 100.0, 1000.0}) {
    CHECK(std::abs(digamma(x) - oracles::digamma_ref(x)) < 1e-10);
    CHECK(std::abs(trigamma(x) - oracles::trigamma_ref(x)) < 1e-9 * std::max(1.0, trigamma(x)));
  }
}

TEST_CASE("non-positive arguments are rejected") {
  CHECK_THROWS_AS(digamma(0.0), std::invalid_argument);
  CHECK_THROWS_AS(digamma(-1.5), std::invalid_argument);
  CHECK_THROWS_AS(trigamma(0.0), std::invalid_argument);
  CHECK_THROWS_AS(trigamma(-0.1), std::invalid_argument);
}
