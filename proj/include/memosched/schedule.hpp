#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "memosched/rng.hpp"

namespace memosched {

// Registered basis functions for keep-rate schedules. Each basis is a decay
// term plus a weighted growth term and equals one at t = 0:
//   0: exp(-a2*t^a1)      + a3*(t/T)^a4
//   1: exp(-a2*t^a1)      + a3*log(1+t^a4)/log(1+T^a4)
//   2: (1+a2*t)^-a1       + a3*(t/T)^a4
//   3: (1+a2*t)^-a1       + a3*log(1+t^a4)/log(1+T^a4)
inline constexpr int kBasisCount = 4;
inline constexpr int kShapeCount = 4;  // shape parameters a1..a4 per basis

struct ShapeRange {
  double lo = 0.0;
  double hi = 1.0;
};

// Affine map from raw unit-interval shape values to effective ones,
// one range per shape slot.
struct ShapeMap {
  std::vector<ShapeRange> ranges;

  static ShapeMap defaults() {
    return ShapeMap{{{0.5, 2.0}, {0.0, 1.0}, {0.0, 1.0}, {0.5, 2.0}}};
  }

  void require_valid() const {
    if (ranges.empty()) throw std::invalid_argument("ShapeMap: no ranges");
    for (const auto& r : ranges) {
      if (!(r.lo < r.hi)) throw std::invalid_argument("ShapeMap: requires lo < hi");
    }
  }

  double apply(std::size_t slot, double raw) const {
    if (slot >= ranges.size()) throw std::invalid_argument("ShapeMap: slot out of range");
    return ranges[slot].lo + raw * (ranges[slot].hi - ranges[slot].lo);
  }
};

// One point x = {alpha, beta} of the schedule search space: simplex weights
// over the bases plus one raw shape row per basis.
struct ScheduleParams {
  Eigen::VectorXd alpha;  // mixture weights, non-negative, sum to one
  Eigen::MatrixXd beta;   // raw shape values in [0,1], one row per basis

  bool valid(double simplex_tol = 1e-9) const {
    if (alpha.size() < 1 || beta.rows() != alpha.size() || beta.cols() < 1) return false;
    if ((alpha.array() < 0.0).any()) return false;
    if (std::abs(alpha.sum() - 1.0) > simplex_tol) return false;
    if ((beta.array() < 0.0).any() || (beta.array() > 1.0).any()) return false;
    return true;
  }

  void require_valid() const {
    if (!valid()) throw std::invalid_argument("ScheduleParams: invalid mixture point");
  }

  // Schedule identically one: zero decay rate, zero growth weight.
  static ScheduleParams constant_one(Eigen::Index k = kBasisCount,
                                     Eigen::Index p = kShapeCount) {
    ScheduleParams x;
    x.alpha = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    x.beta = Eigen::MatrixXd::Constant(k, p, 0.5);
    if (p > 1) x.beta.col(1).setZero();
    if (p > 2) x.beta.col(2).setZero();
    return x;
  }
};

inline void to_json(nlohmann::json& j, const ScheduleParams& x) {
  std::vector<double> alpha(x.alpha.data(), x.alpha.data() + x.alpha.size());
  std::vector<std::vector<double>> beta;
  for (Eigen::Index i = 0; i < x.beta.rows(); ++i) {
    beta.emplace_back(x.beta.row(i).begin(), x.beta.row(i).end());
  }
  j = nlohmann::json{{"alpha", alpha}, {"beta", beta}};
}

inline void from_json(const nlohmann::json& j, ScheduleParams& x) {
  const auto alpha = j.at("alpha").get<std::vector<double>>();
  const auto beta = j.at("beta").get<std::vector<std::vector<double>>>();
  x.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  x.beta.resize(static_cast<Eigen::Index>(beta.size()),
                beta.empty() ? 0 : static_cast<Eigen::Index>(beta.front().size()));
  for (Eigen::Index i = 0; i < x.beta.rows(); ++i) {
    if (static_cast<Eigen::Index>(beta[i].size()) != x.beta.cols()) {
      throw std::invalid_argument("ScheduleParams: ragged beta rows");
    }
    for (Eigen::Index c = 0; c < x.beta.cols(); ++c) x.beta(i, c) = beta[i][c];
  }
}

namespace detail {

// Basis value from effective shape parameters a = (a1, a2, a3, a4).
inline double basis_value(int basis, double t, double horizon, const double* a) {
  const double decay = basis < 2 ? std::exp(-a[1] * std::pow(t, a[0]))
                                 : std::pow(1.0 + a[1] * t, -a[0]);
  const double growth = (basis % 2 == 0)
                            ? a[2] * std::pow(t / horizon, a[3])
                            : a[2] * std::log1p(std::pow(t, a[3])) /
                                  std::log1p(std::pow(horizon, a[3]));
  return decay + growth;
}

}  // namespace detail

// Evaluates basis i (0-based) at epoch t of a horizon-epoch run, mapping the
// raw shape row through the given ShapeMap first.
inline double eval_basis(int basis, double t, double horizon,
                         const Eigen::RowVectorXd& beta_row, const ShapeMap& map) {
  if (basis < 0 || basis >= kBasisCount) {
    throw std::invalid_argument("eval_basis: basis index out of range");
  }
  if (!(horizon >= 1.0)) throw std::invalid_argument("eval_basis: requires horizon >= 1");
  if (!(t >= 0.0) || t > horizon) throw std::invalid_argument("eval_basis: t outside [0, horizon]");
  if (beta_row.size() < kShapeCount) throw std::invalid_argument("eval_basis: short shape row");
  map.require_valid();
  double a[kShapeCount];
  for (int s = 0; s < kShapeCount; ++s) {
    const double raw = beta_row(s);
    if (!(raw >= 0.0 && raw <= 1.0)) {
      throw std::invalid_argument("eval_basis: raw shape outside [0,1]");
    }
    a[s] = map.apply(static_cast<std::size_t>(s), raw);
  }
  return detail::basis_value(basis, t, horizon, a);
}

// Mixture keep rate R(t), clamped into [0,1]. R(0) is exactly one: every
// basis equals one there and the weights sum to one.
inline double eval_schedule(const ScheduleParams& x, double t, double horizon,
                            const ShapeMap& map) {
  x.require_valid();
  if (x.alpha.size() != kBasisCount) {
    throw std::invalid_argument("eval_schedule: mixture arity does not match basis count");
  }
  if (t == 0.0) {
    if (!(horizon >= 1.0)) throw std::invalid_argument("eval_schedule: requires horizon >= 1");
    return 1.0;
  }
  double sum = 0.0;
  for (int i = 0; i < kBasisCount; ++i) {
    sum += x.alpha(i) * eval_basis(i, t, horizon, x.beta.row(i), map);
  }
  return std::clamp(sum, 0.0, 1.0);
}

// Number of samples kept from a mini-batch at keep rate R; at least one so
// every step updates on something.
inline int keep_count(double keep_rate, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("keep_count: requires batch_size >= 1");
  const double r = std::clamp(keep_rate, 0.0, 1.0);
  const int n = static_cast<int>(std::lround(r * batch_size));
  return std::clamp(n, 1, batch_size);
}

// The hand-designed reference schedule 1 - tau * min((t/t_k)^c, 1).
inline double coteaching_schedule(double tau, double c, double t_k, double t) {
  if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("coteaching_schedule: requires 0 <= tau < 1");
  if (!(c > 0.0)) throw std::invalid_argument("coteaching_schedule: requires c > 0");
  if (!(t_k > 0.0)) throw std::invalid_argument("coteaching_schedule: requires t_k > 0");
  if (!(t >= 0.0)) throw std::invalid_argument("coteaching_schedule: requires t >= 0");
  return 1.0 - tau * std::min(std::pow(t / t_k, c), 1.0);
}

struct FitResult {
  ScheduleParams params;
  double residual = 0.0;  // max deviation from the reference on the epoch grid
};

namespace detail {

// Working state for the mixture fit: caches one value column per basis so a
// single-coordinate move only recomputes what it touches.
class MixtureFitter {
 public:
  MixtureFitter(std::vector<double> target, const ShapeMap& map)
      : target_(std::move(target)), map_(map) {
    horizon_ = static_cast<double>(target_.size() - 1);
    columns_.resize(static_cast<Eigen::Index>(target_.size()), kBasisCount);
    deviation_.resize(target_.size());
  }

  void load(const ScheduleParams& x) {
    alpha_ = x.alpha;
    beta_ = x.beta;
    for (int i = 0; i < kBasisCount; ++i) refresh_column(i);
  }

  ScheduleParams point() const { return ScheduleParams{alpha_, beta_}; }

  // 0 selects the true max norm; a finite power-of-two exponent smooths it,
  // which lets the coordinate moves ride valleys the max norm turns into
  // kinks
  void set_norm_exponent(int p) { p_exponent_ = p; }

  double objective() const { return objective_for(columns_, alpha_); }

  // One scan + golden-section pass over every coordinate, preceded by an
  // exhaustive mixture-weight solve on a simplex grid (the weights couple,
  // so single-coordinate moves alone stall on them). Returns the objective
  // after the pass.
  double coordinate_pass(double current) {
    current = solve_alpha_on_grid(current);
    for (int i = 0; i < kBasisCount; ++i) {
      current = improve_alpha(i, current);
    }
    for (int i = 0; i < kBasisCount; ++i) {
      for (int s = 0; s < kShapeCount; ++s) {
        current = improve_beta(i, s, current);
      }
    }
    return current;
  }

  // Joint random-direction probes with a shrinking radius; escapes the kinks
  // of the max-deviation objective where single-coordinate moves stall.
  double pattern_polish(double current, Rng& rng, int probes) {
    double radius = 0.05;
    int rejected = 0;
    for (int probe = 0; probe < probes && radius > 1e-10; ++probe) {
      Eigen::VectorXd alpha = alpha_;
      for (Eigen::Index i = 0; i < alpha.size(); ++i) {
        alpha(i) = std::max(0.0, alpha(i) + radius * rng.normal());
      }
      const double total = alpha.sum();
      if (total <= 1e-12) continue;
      alpha /= total;
      Eigen::MatrixXd beta = beta_;
      for (Eigen::Index i = 0; i < beta.rows(); ++i) {
        for (Eigen::Index s = 0; s < beta.cols(); ++s) {
          beta(i, s) = std::clamp(beta(i, s) + radius * rng.normal(), 0.0, 1.0);
        }
      }
      Eigen::MatrixXd cols(columns_.rows(), columns_.cols());
      for (int i = 0; i < kBasisCount; ++i) cols.col(i) = column_for(i, beta.row(i));
      const double obj = objective_for(cols, alpha);
      if (obj < current - 1e-15) {
        current = obj;
        alpha_ = std::move(alpha);
        beta_ = std::move(beta);
        columns_ = std::move(cols);
        rejected = 0;
      } else if (++rejected >= 30) {
        radius *= 0.5;
        rejected = 0;
      }
    }
    return current;
  }

 private:
  static constexpr int kScanPoints = 33;

  double objective_for(const Eigen::MatrixXd& cols, const Eigen::VectorXd& alpha) const {
    const Eigen::Index rows = cols.rows();
    double worst = 0.0;
    for (Eigen::Index t = 0; t < rows; ++t) {
      const double mix = t == 0 ? 1.0 : std::clamp(cols.row(t).dot(alpha), 0.0, 1.0);
      deviation_[static_cast<std::size_t>(t)] = std::abs(mix - target_[static_cast<std::size_t>(t)]);
      worst = std::max(worst, deviation_[static_cast<std::size_t>(t)]);
    }
    if (p_exponent_ <= 0 || worst == 0.0) return worst;
    double mean_pow = 0.0;
    for (double d : deviation_) {
      double value = d / worst;
      for (int squarings = p_exponent_; squarings > 1; squarings /= 2) value *= value;
      mean_pow += value;
    }
    mean_pow /= static_cast<double>(rows);
    return worst * std::pow(mean_pow, 1.0 / p_exponent_);
  }

  void refresh_column(int basis) { columns_.col(basis) = column_for(basis, beta_.row(basis)); }

  Eigen::VectorXd column_for(int basis, const Eigen::RowVectorXd& raw_row) const {
    double a[kShapeCount];
    for (int s = 0; s < kShapeCount; ++s) a[s] = map_.apply(static_cast<std::size_t>(s), raw_row(s));
    Eigen::VectorXd col(columns_.rows());
    for (Eigen::Index t = 0; t < col.size(); ++t) {
      col(t) = basis_value(basis, static_cast<double>(t), horizon_, a);
    }
    return col;
  }

  // Rescales the other weights so the simplex constraint survives the move.
  static Eigen::VectorXd with_weight(const Eigen::VectorXd& alpha, int i, double value) {
    Eigen::VectorXd out = alpha;
    const double rest = 1.0 - alpha(i);
    if (rest > 1e-15) {
      const double scale = (1.0 - value) / rest;
      out *= scale;
    } else {
      out.setConstant((1.0 - value) / static_cast<double>(alpha.size() - 1));
    }
    out(i) = value;
    return out;
  }

  template <class F>
  static std::pair<double, double> line_search(F&& objective_at, double best_v, double best_obj) {
    for (int s = 0; s < kScanPoints; ++s) {
      const double v = static_cast<double>(s) / (kScanPoints - 1);
      const double obj = objective_at(v);
      if (obj < best_obj) {
        best_obj = obj;
        best_v = v;
      }
    }
    const double span = 1.0 / (kScanPoints - 1);
    double lo = std::max(0.0, best_v - span);
    double hi = std::min(1.0, best_v + span);
    constexpr double kInvPhi = 0.6180339887498949;
    double m1 = hi - kInvPhi * (hi - lo);
    double m2 = lo + kInvPhi * (hi - lo);
    double f1 = objective_at(m1);
    double f2 = objective_at(m2);
    for (int iter = 0; iter < 32; ++iter) {
      if (f1 <= f2) {
        hi = m2;
        m2 = m1;
        f2 = f1;
        m1 = hi - kInvPhi * (hi - lo);
        f1 = objective_at(m1);
      } else {
        lo = m1;
        m1 = m2;
        f1 = f2;
        m2 = lo + kInvPhi * (hi - lo);
        f2 = objective_at(m2);
      }
    }
    const double mid = 0.5 * (lo + hi);
    const double fmid = objective_at(mid);
    if (fmid < best_obj) return {mid, fmid};
    return {best_v, best_obj};
  }

  double improve_alpha(int i, double current) {
    auto objective_at = [&](double v) { return objective_for(columns_, with_weight(alpha_, i, v)); };
    const auto [v, obj] = line_search(objective_at, alpha_(i), current);
    if (obj < current) {
      alpha_ = with_weight(alpha_, i, v);
      return obj;
    }
    return current;
  }

  // enumerate the weight simplex at resolution 1/20 for the current columns
  double solve_alpha_on_grid(double current) {
    static_assert(kBasisCount == 4);
    constexpr int kTicks = 20;
    Eigen::VectorXd candidate(4);
    bool improved = false;
    Eigen::VectorXd best_alpha = alpha_;
    for (int i = 0; i <= kTicks; ++i) {
      for (int j = 0; i + j <= kTicks; ++j) {
        for (int l = 0; i + j + l <= kTicks; ++l) {
          candidate << i, j, l, kTicks - i - j - l;
          candidate /= kTicks;
          const double obj = objective_for(columns_, candidate);
          if (obj < current) {
            current = obj;
            best_alpha = candidate;
            improved = true;
          }
        }
      }
    }
    if (improved) alpha_ = best_alpha;
    return current;
  }

  double improve_beta(int basis, int slot, double current) {
    Eigen::RowVectorXd row = beta_.row(basis);
    Eigen::MatrixXd cols = columns_;
    auto objective_at = [&](double v) {
      row(slot) = v;
      cols.col(basis) = column_for(basis, row);
      return objective_for(cols, alpha_);
    };
    const auto [v, obj] = line_search(objective_at, beta_(basis, slot), current);
    if (obj < current) {
      beta_(basis, slot) = v;
      refresh_column(basis);
      return obj;
    }
    return current;
  }

  std::vector<double> target_;
  ShapeMap map_;
  double horizon_ = 1.0;
  int p_exponent_ = 0;
  Eigen::MatrixXd columns_;  // (horizon+1) x k basis values
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd beta_;
  mutable std::vector<double> deviation_;
};

}  // namespace detail

// Fits a mixture to a reference curve on the epoch grid {0,...,horizon} by
// multi-start coordinate descent, minimizing the maximum absolute deviation.
// Never aborts: returns the best point found and its residual.
template <class Ref>
FitResult fit_to_reference(Ref&& ref, int horizon, const ShapeMap& map,
                           int restarts = 50, std::uint64_t seed = 0x5ceaf17ull) {
  if (horizon < 1) throw std::invalid_argument("fit_to_reference: requires horizon >= 1");
  map.require_valid();
  std::vector<double> target(static_cast<std::size_t>(horizon) + 1);
  for (int t = 0; t <= horizon; ++t) target[static_cast<std::size_t>(t)] = ref(t);

  detail::MixtureFitter fitter(target, map);
  Rng rng(seed);

  auto random_start = [&] {
    ScheduleParams x;
    x.alpha.resize(kBasisCount);
    for (int i = 0; i < kBasisCount; ++i) x.alpha(i) = -std::log(rng.uniform_pos());
    x.alpha /= x.alpha.sum();
    x.beta.resize(kBasisCount, kShapeCount);
    const bool decay_only = rng.uniform() < 0.5;
    for (int i = 0; i < kBasisCount; ++i) {
      for (int s = 0; s < kShapeCount; ++s) x.beta(i, s) = rng.uniform();
      if (decay_only) x.beta(i, 2) = 0.0;
    }
    return x;
  };

  std::vector<ScheduleParams> starts;
  starts.push_back(ScheduleParams::constant_one());
  for (int i = 0; i < kBasisCount; ++i) {
    ScheduleParams x;
    x.alpha = Eigen::VectorXd::Zero(kBasisCount);
    x.alpha(i) = 1.0;
    x.beta = Eigen::MatrixXd::Constant(kBasisCount, kShapeCount, 0.5);
    x.beta.col(2).setZero();
    starts.push_back(std::move(x));
  }
  // decay-plus-plateau family: one row decays toward zero, another stays
  // constant, weights set the plateau level
  for (double plateau : {0.0, 0.25, 0.5, 0.75}) {
    for (double rate : {0.02, 0.05, 0.12, 0.3, 0.7}) {
      for (int decay_basis : {0, 2}) {
        ScheduleParams x;
        x.alpha = Eigen::VectorXd::Zero(kBasisCount);
        x.alpha(decay_basis) = 1.0 - plateau;
        x.alpha(decay_basis + 1) = plateau;
        x.beta = Eigen::MatrixXd::Constant(kBasisCount, kShapeCount, 0.5);
        x.beta.col(2).setZero();
        x.beta(decay_basis, 0) = 1.0;  // steepest decay exponent
        x.beta(decay_basis, 1) = rate;
        x.beta(decay_basis + 1, 1) = 0.0;  // plateau row never decays
        starts.push_back(std::move(x));
      }
    }
  }
  const std::size_t fixed_starts = starts.size();
  while (starts.size() < fixed_starts + static_cast<std::size_t>(std::max(restarts, 1))) {
    starts.push_back(random_start());
  }

  constexpr int kLadder[] = {2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
  auto anneal_cycle = [&](int max_passes) {
    for (int p : kLadder) {
      fitter.set_norm_exponent(p);
      double obj = fitter.objective();
      for (int pass = 0; pass < max_passes; ++pass) {
        const double next = fitter.coordinate_pass(obj);
        if (obj - next < 1e-15) break;
        obj = next;
      }
    }
    fitter.set_norm_exponent(0);
    return fitter.objective();
  };

  // exploration: a short smooth-norm descent from every start, keeping the
  // few best leads under the true max norm
  std::vector<std::pair<double, ScheduleParams>> leaders;
  for (const auto& start : starts) {
    fitter.load(start);
    fitter.set_norm_exponent(2);
    double obj = fitter.objective();
    for (int pass = 0; pass < 3; ++pass) {
      const double next = fitter.coordinate_pass(obj);
      if (obj - next < 1e-12) break;
      obj = next;
    }
    fitter.set_norm_exponent(0);
    leaders.emplace_back(fitter.objective(), fitter.point());
    std::sort(leaders.begin(), leaders.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (leaders.size() > 3) leaders.pop_back();
  }

  // the centre of the space rides along as a leader unconditionally; smooth
  // in-space targets are often reached best from there
  {
    ScheduleParams centre;
    centre.alpha = Eigen::VectorXd::Constant(kBasisCount, 1.0 / kBasisCount);
    centre.beta = Eigen::MatrixXd::Constant(kBasisCount, kShapeCount, 0.5);
    fitter.load(centre);
    fitter.set_norm_exponent(0);
    leaders.emplace_back(fitter.objective(), std::move(centre));
  }

  // refinement: one anneal cycle up the ladder per leader
  ScheduleParams best = leaders.front().second;
  double best_obj = leaders.front().first;
  for (const auto& [explored_obj, candidate] : leaders) {
    fitter.load(candidate);
    const double obj = anneal_cycle(10);
    if (obj < best_obj) {
      best_obj = obj;
      best = fitter.point();
    }
  }

  // winner: alternate deeper cycles with max-norm polish, where joint probes
  // work on the remaining kinks
  fitter.load(best);
  double obj = best_obj;
  for (int round = 0; round < 2; ++round) {
    obj = anneal_cycle(15);
    obj = fitter.pattern_polish(obj, rng, 5000);
    for (int pass = 0; pass < 25; ++pass) {
      const double next = fitter.coordinate_pass(obj);
      if (obj - next < 1e-14) {
        obj = next;
        break;
      }
      obj = next;
    }
  }
  if (obj < best_obj) {
    best_obj = obj;
    best = fitter.point();
  }
  return FitResult{best, best_obj};
}

}  // namespace memosched
