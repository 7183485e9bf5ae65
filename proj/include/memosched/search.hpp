#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "memosched/distributions.hpp"
#include "memosched/io.hpp"
#include "memosched/rng.hpp"
#include "memosched/schedule.hpp"

namespace memosched {

enum class UpdateRule { newton, gd, ng, random };

inline std::string to_string(UpdateRule rule) {
  switch (rule) {
    case UpdateRule::newton: return "newton";
    case UpdateRule::gd: return "gd";
    case UpdateRule::ng: return "ng";
    case UpdateRule::random: return "random";
  }
  throw std::invalid_argument("unknown update rule");
}

inline UpdateRule parse_update_rule(const std::string& name) {
  if (name == "newton") return UpdateRule::newton;
  if (name == "gd") return UpdateRule::gd;
  if (name == "ng") return UpdateRule::ng;
  if (name == "random") return UpdateRule::random;
  throw std::invalid_argument("unknown update rule: " + name);
}

// One evaluated candidate: the point, its objective value, and the score and
// log-density Hessian at the sampling distribution.
struct EstimatorSample {
  ScheduleParams x;
  double f_value = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd logp_hessian;
};

using EstimatorBatch = std::vector<EstimatorSample>;

namespace detail {
inline void require_batch(const EstimatorBatch& batch) {
  if (batch.size() < 2) throw std::invalid_argument("estimator batch needs at least 2 samples");
  const auto d = batch.front().score.size();
  for (const auto& s : batch) {
    if (!std::isfinite(s.f_value)) throw std::invalid_argument("estimator batch has non-finite f");
    if (s.score.size() != d) throw std::invalid_argument("estimator batch has mixed dimensions");
  }
}
}  // namespace detail

// Score-function gradient estimate of the relaxed objective. The baseline
// subtracts the batch mean from f, which leaves the estimate unbiased
// because the score itself has zero mean.
inline Eigen::VectorXd estimate_gradient(const EstimatorBatch& batch, bool baseline_enabled) {
  detail::require_batch(batch);
  double baseline = 0.0;
  if (baseline_enabled) {
    for (const auto& s : batch) baseline += s.f_value;
    baseline /= static_cast<double>(batch.size());
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(batch.front().score.size());
  for (const auto& s : batch) g += (s.f_value - baseline) * s.score;
  return g / static_cast<double>(batch.size());
}

// Monte-Carlo Hessian of the relaxed objective: mean of
// f * (hessian of log p + score outer product). No baseline here; shifting f
// would bias the log-density-Hessian term.
inline Eigen::MatrixXd estimate_hessian(const EstimatorBatch& batch) {
  detail::require_batch(batch);
  const auto d = batch.front().score.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (const auto& s : batch) {
    if (s.logp_hessian.rows() != d || s.logp_hessian.cols() != d) {
      throw std::invalid_argument("estimator batch has mixed Hessian dimensions");
    }
    h += s.f_value * (s.logp_hessian + s.score * s.score.transpose());
  }
  h /= static_cast<double>(batch.size());
  return 0.5 * (h + h.transpose());
}

// Clamps every eigenvalue magnitude into [eig_floor, eig_cap] and rebuilds
// the matrix, which is then symmetric positive definite. Flipping negative
// curvature keeps Newton steps pointed downhill.
inline Eigen::MatrixXd clamp_hessian(const Eigen::MatrixXd& h, double eig_floor, double eig_cap) {
  if (h.rows() != h.cols()) throw std::invalid_argument("clamp_hessian: matrix not square");
  if (!(eig_floor > 0.0) || !(eig_floor <= eig_cap)) {
    throw std::invalid_argument("clamp_hessian: requires 0 < eig_floor <= eig_cap");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
  if (solver.info() != Eigen::Success) {
    return eig_floor * Eigen::MatrixXd::Identity(h.rows(), h.cols());
  }
  Eigen::VectorXd lambda = solver.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    lambda(i) = std::clamp(std::abs(lambda(i)), eig_floor, eig_cap);
  }
  const Eigen::MatrixXd out =
      solver.eigenvectors() * lambda.asDiagonal() * solver.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

// One outer update of theta. newton preconditions with the clamped objective
// Hessian, ng with the clamped sample Fisher, gd with the identity; every
// result is clipped back into the theta box.
inline ThetaParams update_theta(const ThetaParams& theta, const Eigen::VectorXd& grad,
                                const Eigen::MatrixXd& delta, double stepsize, UpdateRule rule,
                                const Eigen::MatrixXd& fisher = {}, double eig_floor = 0.1,
                                double eig_cap = 100.0, const ThetaBox& box = {}) {
  theta.require_valid(box);
  if (grad.size() != theta.dim()) throw std::invalid_argument("update_theta: gradient size mismatch");
  if (!(stepsize > 0.0)) throw std::invalid_argument("update_theta: requires stepsize > 0");

  Eigen::VectorXd step(theta.dim());
  switch (rule) {
    case UpdateRule::gd:
      step = stepsize * grad;
      break;
    case UpdateRule::newton: {
      if (delta.rows() != theta.dim() || delta.cols() != theta.dim()) {
        throw std::invalid_argument("update_theta: precondition matrix size mismatch");
      }
      Eigen::LLT<Eigen::MatrixXd> llt(delta);
      if (llt.info() != Eigen::Success) {
        throw std::invalid_argument("update_theta: newton requires a positive-definite matrix");
      }
      step = stepsize * llt.solve(grad);
      break;
    }
    case UpdateRule::ng: {
      if (fisher.rows() != theta.dim() || fisher.cols() != theta.dim()) {
        throw std::invalid_argument("update_theta: fisher matrix size mismatch");
      }
      const Eigen::MatrixXd clamped = clamp_hessian(fisher, eig_floor, eig_cap);
      step = stepsize * clamped.llt().solve(grad);
      break;
    }
    case UpdateRule::random:
      throw std::invalid_argument("update_theta: random search does not update theta");
  }

  Eigen::VectorXd next = theta.flatten() - step;
  next = next.cwiseMax(box.lo).cwiseMin(box.hi);
  return ThetaParams::unflatten(next, theta.basis_count(), theta.shape_count());
}

struct SearchConfig {
  int outer_iterations = 20;      // M
  int samples_per_iteration = 8;  // K
  double stepsize = 0.0;          // rho; <= 0 picks the rule default
  double eig_floor = 0.1;         // eta
  double eig_cap = 100.0;         // L
  UpdateRule rule = UpdateRule::newton;
  bool baseline = true;
  std::uint64_t seed = 0;
  Eigen::Index basis_count = kBasisCount;
  Eigen::Index shape_count = kShapeCount;
  std::uint64_t eval_budget = 0;  // 0 means uncapped
  int workers = 1;
  ThetaBox theta_box{};

  double resolved_stepsize() const {
    if (stepsize > 0.0) return stepsize;
    return rule == UpdateRule::newton ? 1.0 : 0.05;
  }

  void require_valid() const {
    if (outer_iterations < 1) throw std::invalid_argument("SearchConfig: requires M >= 1");
    if (samples_per_iteration < 2) throw std::invalid_argument("SearchConfig: requires K >= 2");
    if (!(eig_floor > 0.0) || !(eig_floor <= eig_cap)) {
      throw std::invalid_argument("SearchConfig: requires 0 < eig_floor <= eig_cap");
    }
    if (workers < 1) throw std::invalid_argument("SearchConfig: requires workers >= 1");
    if (basis_count < 1 || shape_count < 1) throw std::invalid_argument("SearchConfig: bad space size");
  }
};

struct SearchIteration {
  ThetaParams theta;  // distribution the candidates were drawn from
  std::vector<ScheduleParams> samples;
  std::vector<double> f_values;  // NaN marks a dropped candidate
  double grad_norm = 0.0;
  double step_norm = 0.0;
  double best_f = std::numeric_limits<double>::infinity();
  std::uint64_t calls = 0;
};

struct SearchTrace {
  std::vector<SearchIteration> iterations;
  ThetaParams final_theta;
};

struct SearchResult {
  ScheduleParams best_x;
  double best_f = std::numeric_limits<double>::infinity();
  SearchTrace trace;
};

namespace detail {

// Evaluates candidates by index across a small thread pool; order of results
// does not depend on scheduling since each slot is written exactly once.
// Any throw or non-finite value marks the slot NaN.
template <class Evaluator>
void evaluate_candidates(const std::vector<ScheduleParams>& xs, Evaluator& objective, int workers,
                         std::vector<double>& out) {
  const int n = static_cast<int>(xs.size());
  out.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
  auto eval_range = [&](int begin, int stride) {
    for (int i = begin; i < n; i += stride) {
      try {
        const double v = objective(xs[static_cast<std::size_t>(i)]);
        out[static_cast<std::size_t>(i)] = std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN();
      } catch (...) {
        // dropped candidate
      }
    }
  };
  const int threads = std::min(workers, n);
  if (threads <= 1) {
    eval_range(0, 1);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) pool.emplace_back(eval_range, w, threads);
  for (auto& t : pool) t.join();
}

template <class Evaluator>
SearchResult search_impl(const SearchConfig& cfg, Evaluator&& objective, bool update_theta_each_iter) {
  cfg.require_valid();
  const double rho = cfg.resolved_stepsize();
  ThetaParams theta = ThetaParams::uniform(cfg.basis_count, cfg.shape_count);
  Rng sampler = Rng::derived(cfg.seed, {0x5a3cu});

  SearchResult result;
  std::uint64_t calls = 0;
  for (int m = 0; m < cfg.outer_iterations; ++m) {
    int k_iter = cfg.samples_per_iteration;
    if (cfg.eval_budget > 0) {
      const std::uint64_t left = cfg.eval_budget - std::min<std::uint64_t>(cfg.eval_budget, calls);
      k_iter = static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(k_iter), left));
      if (k_iter < 1) break;
    }

    SearchIteration iter;
    iter.theta = theta;
    iter.samples.reserve(static_cast<std::size_t>(k_iter));
    for (int i = 0; i < k_iter; ++i) iter.samples.push_back(sample(theta, sampler));

    evaluate_candidates(iter.samples, objective, cfg.workers, iter.f_values);
    calls += static_cast<std::uint64_t>(k_iter);
    iter.calls = calls;

    EstimatorBatch batch;
    for (std::size_t i = 0; i < iter.samples.size(); ++i) {
      const double f = iter.f_values[i];
      if (!std::isfinite(f)) continue;
      if (f < result.best_f) {
        result.best_f = f;
        result.best_x = iter.samples[i];
      }
      if (update_theta_each_iter) {
        batch.push_back(EstimatorSample{iter.samples[i], f, score(theta, iter.samples[i]),
                                        log_density_hessian(theta, iter.samples[i])});
      }
    }

    if (update_theta_each_iter && batch.size() >= 2) {
      const Eigen::VectorXd g = estimate_gradient(batch, cfg.baseline);
      iter.grad_norm = g.norm();
      ThetaParams next = theta;
      switch (cfg.rule) {
        case UpdateRule::newton: {
          const Eigen::MatrixXd delta =
              clamp_hessian(estimate_hessian(batch), cfg.eig_floor, cfg.eig_cap);
          next = update_theta(theta, g, delta, rho, UpdateRule::newton, {}, cfg.eig_floor,
                              cfg.eig_cap, cfg.theta_box);
          break;
        }
        case UpdateRule::gd:
          next = update_theta(theta, g, {}, rho, UpdateRule::gd, {}, cfg.eig_floor, cfg.eig_cap,
                              cfg.theta_box);
          break;
        case UpdateRule::ng: {
          Eigen::MatrixXd fisher = Eigen::MatrixXd::Zero(theta.dim(), theta.dim());
          for (const auto& s : batch) fisher += s.score * s.score.transpose();
          fisher /= static_cast<double>(batch.size());
          next = update_theta(theta, g, {}, rho, UpdateRule::ng, fisher, cfg.eig_floor,
                              cfg.eig_cap, cfg.theta_box);
          break;
        }
        case UpdateRule::random:
          break;  // unreachable; random searches never update
      }
      iter.step_norm = (next.flatten() - theta.flatten()).norm();
      theta = std::move(next);
    }

    iter.best_f = result.best_f;
    result.trace.iterations.push_back(std::move(iter));
    if (cfg.eval_budget > 0 && calls >= cfg.eval_budget) break;
  }
  result.trace.final_theta = theta;
  return result;
}

}  // namespace detail

// Runs the full outer loop from the uniform initialization: sample K
// candidates, evaluate the black-box objective on each, estimate gradient
// and curvature, update theta, and keep the best observed point.
template <class Evaluator>
SearchResult run_search(const SearchConfig& cfg, Evaluator&& objective) {
  if (cfg.rule == UpdateRule::random) {
    return detail::search_impl(cfg, std::forward<Evaluator>(objective), false);
  }
  return detail::search_impl(cfg, std::forward<Evaluator>(objective), true);
}

// Equal-budget baseline: every candidate is drawn from the fixed uniform
// distribution and theta never moves.
template <class Evaluator>
SearchResult random_search(const SearchConfig& cfg, Evaluator&& objective) {
  return detail::search_impl(cfg, std::forward<Evaluator>(objective), false);
}

// --- trace export -----------------------------------------------------------

inline std::string trace_to_csv(const SearchTrace& trace) {
  std::string out = "iteration,calls,best_f,grad_norm,step_norm\n";
  for (std::size_t m = 0; m < trace.iterations.size(); ++m) {
    const auto& it = trace.iterations[m];
    out += std::to_string(m + 1) + ',' + std::to_string(it.calls) + ',' +
           format_double(it.best_f) + ',' + format_double(it.grad_norm) + ',' +
           format_double(it.step_norm) + '\n';
  }
  return out;
}

inline nlohmann::json trace_to_json(const SearchTrace& trace) {
  nlohmann::json iters = nlohmann::json::array();
  for (std::size_t m = 0; m < trace.iterations.size(); ++m) {
    const auto& it = trace.iterations[m];
    nlohmann::json f_values = nlohmann::json::array();
    for (double f : it.f_values) {
      if (std::isfinite(f)) {
        f_values.push_back(f);
      } else {
        f_values.push_back(nullptr);
      }
    }
    iters.push_back({{"iteration", m + 1},
                     {"theta", it.theta},
                     {"f_values", f_values},
                     {"grad_norm", it.grad_norm},
                     {"step_norm", it.step_norm},
                     {"best_f", it.best_f},
                     {"calls", it.calls}});
  }
  return nlohmann::json{{"iterations", iters}, {"final_theta", trace.final_theta}};
}

}  // namespace memosched
