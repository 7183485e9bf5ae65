#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "memosched/rng.hpp"
#include "memosched/schedule.hpp"
#include "memosched/special_functions.hpp"

namespace memosched {

// Sampled points are nudged this far into the interior before any density or
// score evaluation; the log terms diverge on the boundary itself.
inline constexpr double kInteriorEps = 1e-12;

struct ThetaBox {
  double lo = 1e-3;
  double hi = 1e3;
};

// Distribution parameters over the search space: one Dirichlet concentration
// per mixture weight and one Beta shape pair per raw shape value.
struct ThetaParams {
  Eigen::VectorXd dirichlet_conc;  // k concentrations
  Eigen::MatrixXd beta_a;          // k x p first shapes
  Eigen::MatrixXd beta_b;          // k x p second shapes

  static ThetaParams uniform(Eigen::Index k = kBasisCount, Eigen::Index p = kShapeCount) {
    ThetaParams theta;
    theta.dirichlet_conc = Eigen::VectorXd::Ones(k);
    theta.beta_a = Eigen::MatrixXd::Ones(k, p);
    theta.beta_b = Eigen::MatrixXd::Ones(k, p);
    return theta;
  }

  Eigen::Index basis_count() const { return dirichlet_conc.size(); }
  Eigen::Index shape_count() const { return beta_a.cols(); }
  Eigen::Index dim() const { return basis_count() + 2 * basis_count() * shape_count(); }

  void require_valid(const ThetaBox& box = {}) const {
    const auto k = basis_count();
    if (k < 1 || beta_a.rows() != k || beta_b.rows() != k || beta_a.cols() != beta_b.cols() ||
        beta_a.cols() < 1) {
      throw std::invalid_argument("ThetaParams: inconsistent shapes");
    }
    auto in_box = [&](double v) { return v >= box.lo && v <= box.hi; };
    for (Eigen::Index i = 0; i < k; ++i) {
      if (!in_box(dirichlet_conc(i))) throw std::invalid_argument("ThetaParams: concentration outside box");
      for (Eigen::Index j = 0; j < shape_count(); ++j) {
        if (!in_box(beta_a(i, j)) || !in_box(beta_b(i, j))) {
          throw std::invalid_argument("ThetaParams: Beta shape outside box");
        }
      }
    }
  }

  // Flat layout: concentrations first, then (a, b) pairs in row-major basis
  // by shape order. Score vectors and Hessians use the same layout.
  Eigen::VectorXd flatten() const {
    const auto k = basis_count();
    const auto p = shape_count();
    Eigen::VectorXd v(dim());
    v.head(k) = dirichlet_conc;
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        const Eigen::Index base = k + 2 * (i * p + j);
        v(base) = beta_a(i, j);
        v(base + 1) = beta_b(i, j);
      }
    }
    return v;
  }

  static ThetaParams unflatten(const Eigen::VectorXd& v, Eigen::Index k, Eigen::Index p) {
    if (v.size() != k + 2 * k * p) throw std::invalid_argument("ThetaParams: flat size mismatch");
    ThetaParams theta;
    theta.dirichlet_conc = v.head(k);
    theta.beta_a.resize(k, p);
    theta.beta_b.resize(k, p);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        const Eigen::Index base = k + 2 * (i * p + j);
        theta.beta_a(i, j) = v(base);
        theta.beta_b(i, j) = v(base + 1);
      }
    }
    return theta;
  }
};

inline void to_json(nlohmann::json& j, const ThetaParams& theta) {
  std::vector<double> conc(theta.dirichlet_conc.data(),
                           theta.dirichlet_conc.data() + theta.dirichlet_conc.size());
  std::vector<std::vector<double>> beta;
  for (Eigen::Index i = 0; i < theta.basis_count(); ++i) {
    for (Eigen::Index s = 0; s < theta.shape_count(); ++s) {
      beta.push_back({theta.beta_a(i, s), theta.beta_b(i, s)});
    }
  }
  j = nlohmann::json{{"dirichlet", conc},
                     {"beta", beta},
                     {"shape_count", theta.shape_count()}};
}

inline void from_json(const nlohmann::json& j, ThetaParams& theta) {
  const auto conc = j.at("dirichlet").get<std::vector<double>>();
  const auto beta = j.at("beta").get<std::vector<std::vector<double>>>();
  const auto k = static_cast<Eigen::Index>(conc.size());
  const auto p = j.value("shape_count", k == 0 ? 0 : static_cast<Eigen::Index>(beta.size()) / k);
  if (k < 1 || static_cast<Eigen::Index>(beta.size()) != k * p) {
    throw std::invalid_argument("ThetaParams: bad serialized sizes");
  }
  theta.dirichlet_conc = Eigen::Map<const Eigen::VectorXd>(conc.data(), k);
  theta.beta_a.resize(k, p);
  theta.beta_b.resize(k, p);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index s = 0; s < p; ++s) {
      const auto& pair = beta[static_cast<std::size_t>(i * p + s)];
      if (pair.size() != 2) throw std::invalid_argument("ThetaParams: beta entries must be pairs");
      theta.beta_a(i, s) = pair[0];
      theta.beta_b(i, s) = pair[1];
    }
  }
}

// --- single-distribution building blocks -----------------------------------

inline double beta_log_density(double a, double b, double x) {
  if (!(x > 0.0 && x < 1.0)) throw std::domain_error("beta_log_density: x on the boundary");
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
         (b - 1.0) * std::log1p(-x);
}

inline Eigen::Vector2d beta_score(double a, double b, double x) {
  if (!(x > 0.0 && x < 1.0)) throw std::domain_error("beta_score: x on the boundary");
  const double pab = digamma(a + b);
  return {pab - digamma(a) + std::log(x), pab - digamma(b) + std::log1p(-x)};
}

inline Eigen::Matrix2d beta_log_density_hessian(double a, double b) {
  const double tab = trigamma(a + b);
  Eigen::Matrix2d h;
  h << tab - trigamma(a), tab, tab, tab - trigamma(b);
  return h;
}

inline double dirichlet_log_density(const Eigen::VectorXd& conc, const Eigen::VectorXd& alpha) {
  if (conc.size() != alpha.size()) throw std::invalid_argument("dirichlet_log_density: size mismatch");
  if ((alpha.array() <= 0.0).any()) throw std::domain_error("dirichlet_log_density: alpha on the boundary");
  double out = std::lgamma(conc.sum());
  for (Eigen::Index i = 0; i < conc.size(); ++i) {
    out -= std::lgamma(conc(i));
    out += (conc(i) - 1.0) * std::log(alpha(i));
  }
  return out;
}

inline Eigen::VectorXd dirichlet_score(const Eigen::VectorXd& conc, const Eigen::VectorXd& alpha) {
  if ((alpha.array() <= 0.0).any()) throw std::domain_error("dirichlet_score: alpha on the boundary");
  const double psi_total = digamma(conc.sum());
  Eigen::VectorXd s(conc.size());
  for (Eigen::Index i = 0; i < conc.size(); ++i) {
    s(i) = psi_total - digamma(conc(i)) + std::log(alpha(i));
  }
  return s;
}

inline Eigen::MatrixXd dirichlet_log_density_hessian(const Eigen::VectorXd& conc) {
  const double tri_total = trigamma(conc.sum());
  Eigen::MatrixXd h = Eigen::MatrixXd::Constant(conc.size(), conc.size(), tri_total);
  for (Eigen::Index i = 0; i < conc.size(); ++i) h(i, i) -= trigamma(conc(i));
  return h;
}

// --- product distribution over ScheduleParams ------------------------------

// Draws x ~ p_theta: alpha from the Dirichlet via normalized gamma draws,
// each raw shape value from its Beta. Results are nudged strictly inside the
// domain so later density evaluations are finite.
inline ScheduleParams sample(const ThetaParams& theta, Rng& rng) {
  theta.require_valid();
  const auto k = theta.basis_count();
  const auto p = theta.shape_count();
  Eigen::VectorXd lg(k);
  for (Eigen::Index i = 0; i < k; ++i) lg(i) = rng.log_gamma(theta.dirichlet_conc(i));
  const double shift = lg.maxCoeff();
  Eigen::VectorXd alpha = (lg.array() - shift).exp();
  alpha = alpha.cwiseMax(kInteriorEps);
  alpha /= alpha.sum();

  Eigen::MatrixXd beta(k, p);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double v = rng.beta(theta.beta_a(i, j), theta.beta_b(i, j));
      beta(i, j) = std::clamp(v, kInteriorEps, 1.0 - kInteriorEps);
    }
  }
  return ScheduleParams{std::move(alpha), std::move(beta)};
}

namespace detail {
inline void require_matching_point(const ThetaParams& theta, const ScheduleParams& x) {
  if (x.alpha.size() != theta.basis_count() || x.beta.rows() != theta.basis_count() ||
      x.beta.cols() != theta.shape_count()) {
    throw std::invalid_argument("distribution point does not match theta layout");
  }
  if ((x.alpha.array() <= 0.0).any() || (x.beta.array() <= 0.0).any() ||
      (x.beta.array() >= 1.0).any()) {
    throw std::domain_error("distribution point on the boundary");
  }
}
}  // namespace detail

inline double log_density(const ThetaParams& theta, const ScheduleParams& x) {
  theta.require_valid();
  detail::require_matching_point(theta, x);
  double out = dirichlet_log_density(theta.dirichlet_conc, x.alpha);
  for (Eigen::Index i = 0; i < theta.basis_count(); ++i) {
    for (Eigen::Index j = 0; j < theta.shape_count(); ++j) {
      out += beta_log_density(theta.beta_a(i, j), theta.beta_b(i, j), x.beta(i, j));
    }
  }
  return out;
}

// Gradient of log p_theta(x) with respect to theta, in flat layout.
inline Eigen::VectorXd score(const ThetaParams& theta, const ScheduleParams& x) {
  theta.require_valid();
  detail::require_matching_point(theta, x);
  const auto k = theta.basis_count();
  const auto p = theta.shape_count();
  Eigen::VectorXd s(theta.dim());
  s.head(k) = dirichlet_score(theta.dirichlet_conc, x.alpha);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::Index base = k + 2 * (i * p + j);
      s.segment<2>(base) = beta_score(theta.beta_a(i, j), theta.beta_b(i, j), x.beta(i, j));
    }
  }
  return s;
}

// Hessian of log p_theta(x): block diagonal across the Dirichlet and the
// independent Beta pairs, and free of x.
inline Eigen::MatrixXd log_density_hessian(const ThetaParams& theta, const ScheduleParams& x) {
  theta.require_valid();
  detail::require_matching_point(theta, x);
  const auto k = theta.basis_count();
  const auto p = theta.shape_count();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(theta.dim(), theta.dim());
  h.topLeftCorner(k, k) = dirichlet_log_density_hessian(theta.dirichlet_conc);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::Index base = k + 2 * (i * p + j);
      h.block<2, 2>(base, base) = beta_log_density_hessian(theta.beta_a(i, j), theta.beta_b(i, j));
    }
  }
  return h;
}

}  // namespace memosched
