#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "memosched/distributions.hpp"
#include "oracles.hpp"

using namespace memosched;

namespace {

ThetaParams random_theta(Rng& rng, Eigen::Index k = kBasisCount, Eigen::Index p = kShapeCount,
                         double lo = 0.3, double hi = 30.0) {
  // log-uniform keeps finite differences of the log-density well conditioned
  auto draw = [&] { return lo * std::exp(rng.uniform() * std::log(hi / lo)); };
  ThetaParams theta;
  theta.dirichlet_conc.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) theta.dirichlet_conc(i) = draw();
  theta.beta_a.resize(k, p);
  theta.beta_b.resize(k, p);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      theta.beta_a(i, j) = draw();
      theta.beta_b(i, j) = draw();
    }
  }
  return theta;
}

}  // namespace

TEST_CASE("sampling matches first moments") {
  const ThetaParams theta = ThetaParams::uniform();
  Rng rng(42);
  const int draws = 100000;
  oracles::MeanAccumulator alpha_acc(kBasisCount);
  oracles::MeanAccumulator beta_acc(1);
  for (int i = 0; i < draws; ++i) {
    const ScheduleParams x = sample(theta, rng);
    alpha_acc.add(x.alpha);
    beta_acc.add(Eigen::VectorXd::Constant(1, x.beta(0, 0)));
  }
  const Eigen::VectorXd mean = alpha_acc.mean();
  const Eigen::VectorXd se = alpha_acc.standard_error();
  for (Eigen::Index i = 0; i < kBasisCount; ++i) {
    CHECK(std::abs(mean(i) - 0.25) <= 3.0 * se(i));
  }
  CHECK(std::abs(beta_acc.mean()(0) - 0.5) <= 3.0 * beta_acc.standard_error()(0));
}

TEST_CASE("sampling is deterministic per seed") {
  const ThetaParams theta = ThetaParams::uniform();
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) {
    const ScheduleParams xa = sample(theta, a);
    const ScheduleParams xb = sample(theta, b);
    CHECK((xa.alpha - xb.alpha).norm() == 0.0);
    CHECK((xa.beta - xb.beta).norm() == 0.0);
  }
}

TEST_CASE("samples satisfy the point invariants") {
  Rng meta(3);
  for (int trial = 0; trial < 20; ++trial) {
    ThetaParams theta = random_theta(meta, kBasisCount, kShapeCount, 1e-3, 1e3);
    Rng rng(trial);
    for (int i = 0; i < 200; ++i) {
      const ScheduleParams x = sample(theta, rng);
      REQUIRE(x.valid());
      REQUIRE((x.alpha.array() > 0.0).all());
      REQUIRE((x.beta.array() > 0.0).all());
      REQUIRE((x.beta.array() < 1.0).all());
    }
  }
}

TEST_CASE("log density closed forms") {
  const ThetaParams theta = ThetaParams::uniform();
  Rng rng(11);
  const ScheduleParams x = sample(theta, rng);
  // uniform Dirichlet over the 3-simplex has constant density Gamma(4) = 6,
  // and every Beta(1,1) term vanishes
  CHECK(log_density(theta, x) == Catch::Approx(std::log(6.0)).margin(1e-12));

  const Eigen::VectorXd conc2 = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd point2(2);
  point2 << 0.3, 0.7;
  CHECK(dirichlet_log_density(conc2, point2) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("one-dimensional beta density integrates to one") {
  const double total = oracles::integrate_unit_interval(
      [](double x) { return std::exp(beta_log_density(2.0, 3.0, x)); });
  CHECK(std::abs(total - 1.0) < 0.01);
}

TEST_CASE("score matches finite differences of the log density") {
  Rng meta(123);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ThetaParams theta = random_theta(meta);
    Rng rng(1000 + trial);
    const ScheduleParams x = sample(theta, rng);
    const Eigen::VectorXd analytic = score(theta, x);
    const auto k = theta.basis_count();
    const auto p = theta.shape_count();
    const Eigen::VectorXd fd = oracles::fd_gradient(
        [&](const Eigen::VectorXd& flat) {
          return log_density(ThetaParams::unflatten(flat, k, p), x);
        },
        theta.flatten(), 1e-5);
    worst = std::max(worst, (fd - analytic).norm() / analytic.norm());
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("score closed form for the flat beta") {
  CHECK(beta_score(1.0, 1.0, 0.5)(0) == Catch::Approx(1.0 - std::log(2.0)).epsilon(1e-10));
  CHECK(beta_score(1.0, 1.0, 0.5)(1) == Catch::Approx(1.0 - std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("score has zero mean under the distribution") {
  Rng meta(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const ThetaParams theta = random_theta(meta, kBasisCount, kShapeCount, 0.5, 10.0);
    Rng rng(30 + trial);
    oracles::MeanAccumulator acc(theta.dim());
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) acc.add(score(theta, sample(theta, rng)));
    const Eigen::VectorXd mean = acc.mean();
    const Eigen::VectorXd se = acc.standard_error();
    for (Eigen::Index d = 0; d < theta.dim(); ++d) {
      REQUIRE(std::abs(mean(d)) <= 3.0 * se(d));
    }
  }
}

TEST_CASE("log density hessian matches finite differences of the score") {
  Rng meta(55);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ThetaParams theta = random_theta(meta);
    Rng rng(5000 + trial);
    const ScheduleParams x = sample(theta, rng);
    const Eigen::MatrixXd analytic = log_density_hessian(theta, x);
    const auto k = theta.basis_count();
    const auto p = theta.shape_count();
    const Eigen::MatrixXd fd = oracles::fd_jacobian(
        [&](const Eigen::VectorXd& flat) {
          return score(ThetaParams::unflatten(flat, k, p), x);
        },
        theta.flatten(), 1e-5);
    worst = std::max(worst, (fd - analytic).norm() / analytic.norm());
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("hessian blocks have the expected closed form") {
  const ThetaParams theta = ThetaParams::uniform();
  Rng rng(9);
  const ScheduleParams x = sample(theta, rng);
  const Eigen::MatrixXd h = log_density_hessian(theta, x);

  const double tri4 = oracles::trigamma_ref(4.0);
  const double tri1 = oracles::trigamma_ref(1.0);
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double expected = i == j ? tri4 - tri1 : tri4;
      CHECK(h(i, j) == Catch::Approx(expected).margin(1e-9));
    }
  }
  CHECK((h - h.transpose()).norm() == 0.0);
  // independent of the point
  const ScheduleParams y = sample(theta, rng);
  CHECK((log_density_hessian(theta, y) - h).norm() == 0.0);
}

TEST_CASE("sample fisher is positive semidefinite and matches the negated hessian") {
  Rng meta(77);
  const ThetaParams theta = random_theta(meta, 2, 1, 0.8, 5.0);
  Rng rng(4);
  const int draws = 30000;
  const auto d = theta.dim();
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd mean_sq = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd neg_hessian;
  for (int i = 0; i < draws; ++i) {
    const ScheduleParams x = sample(theta, rng);
    const Eigen::VectorXd s = score(theta, x);
    const Eigen::MatrixXd outer = s * s.transpose();
    mean += outer;
    mean_sq += outer.cwiseProduct(outer);
    if (i == 0) neg_hessian = -log_density_hessian(theta, x);
  }
  mean /= draws;
  mean_sq /= draws;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(mean);
  REQUIRE(solver.info() == Eigen::Success);
  CHECK(solver.eigenvalues().minCoeff() >= -1e-8);

  // information identity, entrywise within three standard errors
  for (Eigen::Index r = 0; r < d; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const double var = std::max(0.0, mean_sq(r, c) - mean(r, c) * mean(r, c));
      const double se = std::sqrt(var / draws);
      REQUIRE(std::abs(mean(r, c) - neg_hessian(r, c)) <= 3.0 * se);
    }
  }
}

TEST_CASE("boundary points are rejected") {
  const ThetaParams theta = ThetaParams::uniform();
  ScheduleParams x;
  x.alpha = Eigen::Vector4d(0.0, 0.5, 0.25, 0.25);
  x.beta = Eigen::MatrixXd::Constant(4, 4, 0.5);
  CHECK_THROWS_AS(log_density(theta, x), std::domain_error);
  x.alpha = Eigen::Vector4d::Constant(0.25);
  x.beta(1, 2) = 1.0;
  CHECK_THROWS_AS(score(theta, x), std::domain_error);
  CHECK_THROWS_AS(log_density_hessian(theta, x), std::domain_error);
}

TEST_CASE("theta box is enforced") {
  ThetaParams theta = ThetaParams::uniform();
  theta.dirichlet_conc(0) = 1e-4;
  CHECK_THROWS_AS(theta.require_valid(), std::invalid_argument);
  theta = ThetaParams::uniform();
  theta.beta_b(2, 2) = 2e3;
  CHECK_THROWS_AS(theta.require_valid(), std::invalid_argument);
}

TEST_CASE("theta serializes to flat json") {
  Rng meta(8);
  const ThetaParams theta = random_theta(meta);
  nlohmann::json j = theta;
  CHECK(j.at("dirichlet").size() == 4);
  CHECK(j.at("beta").size() == 16);
  const auto back = j.get<ThetaParams>();
  CHECK((back.flatten() - theta.flatten()).norm() == 0.0);
}
