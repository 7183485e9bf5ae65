#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "memosched/data.hpp"
#include "memosched/io.hpp"
#include "memosched/rng.hpp"
#include "memosched/schedule.hpp"

namespace memosched {

// Feed-forward classifier: rectified hidden layers, softmax read-out.
struct MlpModel {
  std::vector<Eigen::MatrixXd> weights;  // layer l: in x out
  std::vector<Eigen::VectorXd> biases;

  static MlpModel init(const std::vector<int>& layer_sizes, Rng& rng) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("MlpModel: needs input and output layers");
    MlpModel model;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      const int fan_in = layer_sizes[l];
      const int fan_out = layer_sizes[l + 1];
      if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("MlpModel: bad layer size");
      Eigen::MatrixXd w(fan_in, fan_out);
      const double scale = std::sqrt(2.0 / fan_in);
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = scale * rng.normal();
      }
      model.weights.push_back(std::move(w));
      model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return model;
  }

  Eigen::Index input_dim() const { return weights.front().rows(); }
  Eigen::Index class_count() const { return weights.back().cols(); }

  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      h = (h * weights[l]).rowwise() + biases[l].transpose();
      if (l + 1 < weights.size()) h = h.cwiseMax(0.0);
    }
    return h;
  }

  // Row-stochastic class probabilities.
  Eigen::MatrixXd probabilities(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd z = logits(x);
    const Eigen::VectorXd row_max = z.rowwise().maxCoeff();
    z.colwise() -= row_max;
    Eigen::MatrixXd p = z.array().exp();
    const Eigen::VectorXd row_sum = p.rowwise().sum();
    p.array().colwise() /= row_sum.array();
    return p;
  }
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static MlpGradients zeros_like(const MlpModel& model) {
    MlpGradients g;
    for (const auto& w : model.weights) g.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    for (const auto& b : model.biases) g.biases.push_back(Eigen::VectorXd::Zero(b.size()));
    return g;
  }
};

// Per-sample softmax cross-entropy and the batch mean.
inline std::pair<Eigen::VectorXd, double> forward_loss(const MlpModel& model,
                                                       const Eigen::MatrixXd& features,
                                                       const Eigen::VectorXi& labels) {
  if (features.cols() != model.input_dim()) throw std::invalid_argument("forward_loss: feature dim mismatch");
  if (features.rows() != labels.size()) throw std::invalid_argument("forward_loss: label count mismatch");
  const Eigen::MatrixXd z = model.logits(features);
  Eigen::VectorXd losses(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double zmax = z.row(i).maxCoeff();
    const double lse = zmax + std::log((z.row(i).array() - zmax).exp().sum());
    losses(i) = lse - z(i, labels(i));
  }
  return {losses, losses.mean()};
}

// Exact gradients of the mean cross-entropy by backpropagation.
inline MlpGradients backward(const MlpModel& model, const Eigen::MatrixXd& features,
                             const Eigen::VectorXi& labels) {
  if (features.cols() != model.input_dim()) throw std::invalid_argument("backward: feature dim mismatch");
  if (features.rows() != labels.size()) throw std::invalid_argument("backward: label count mismatch");
  const std::size_t depth = model.weights.size();
  std::vector<Eigen::MatrixXd> activations(depth + 1);
  activations[0] = features;
  for (std::size_t l = 0; l < depth; ++l) {
    Eigen::MatrixXd h = (activations[l] * model.weights[l]).rowwise() + model.biases[l].transpose();
    if (l + 1 < depth) h = h.cwiseMax(0.0);
    activations[l + 1] = std::move(h);
  }

  // softmax minus one-hot, averaged over the batch
  Eigen::MatrixXd z = activations[depth];
  const Eigen::VectorXd row_max = z.rowwise().maxCoeff();
  z.colwise() -= row_max;
  Eigen::MatrixXd delta = z.array().exp();
  const Eigen::VectorXd row_sum = delta.rowwise().sum();
  delta.array().colwise() /= row_sum.array();
  for (Eigen::Index i = 0; i < features.rows(); ++i) delta(i, labels(i)) -= 1.0;
  delta /= static_cast<double>(features.rows());

  MlpGradients grads = MlpGradients::zeros_like(model);
  for (std::size_t l = depth; l-- > 0;) {
    grads.weights[l] = activations[l].transpose() * delta;
    grads.biases[l] = delta.colwise().sum();
    if (l > 0) {
      delta = (delta * model.weights[l].transpose())
                  .cwiseProduct((activations[l].array() > 0.0).cast<double>().matrix());
    }
  }
  return grads;
}

// Indices of the n_keep smallest losses, ascending, ties resolved toward the
// smaller original index.
inline std::vector<int> select_small_loss(const Eigen::VectorXd& losses, int n_keep) {
  const int n = static_cast<int>(losses.size());
  if (n_keep < 1 || n_keep > n) throw std::invalid_argument("select_small_loss: n_keep outside 1..n");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return losses(a) < losses(b); });
  order.resize(static_cast<std::size_t>(n_keep));
  std::sort(order.begin(), order.end());
  return order;
}

// Plain SGD with momentum.
struct SgdOptimizer {
  double learning_rate;
  double momentum;
  MlpGradients velocity;

  SgdOptimizer(const MlpModel& model, double lr, double mu)
      : learning_rate(lr), momentum(mu), velocity(MlpGradients::zeros_like(model)) {}

  void step(MlpModel& model, const MlpGradients& grads) {
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
      velocity.weights[l] = momentum * velocity.weights[l] - learning_rate * grads.weights[l];
      velocity.biases[l] = momentum * velocity.biases[l] - learning_rate * grads.biases[l];
      model.weights[l] += velocity.weights[l];
      model.biases[l] += velocity.biases[l];
    }
  }
};

enum class SelectionMode { none, single, coteaching };

inline std::string to_string(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::none: return "none";
    case SelectionMode::single: return "single";
    case SelectionMode::coteaching: return "coteaching";
  }
  throw std::invalid_argument("unknown selection mode");
}

inline SelectionMode parse_selection_mode(const std::string& name) {
  if (name == "none") return SelectionMode::none;
  if (name == "single") return SelectionMode::single;
  if (name == "coteaching") return SelectionMode::coteaching;
  throw std::invalid_argument("unknown selection mode: " + name);
}

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.1;
  double lr_decay = 1.0;  // multiplicative per-epoch decay, 1 = constant
  double momentum = 0.9;
  SelectionMode selection = SelectionMode::coteaching;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {32};
  bool record_curves = true;       // per-epoch accuracy curves cost full-set passes
  bool objective_error_rate = false;  // objective reads validation error instead of loss

  void require_valid() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: requires epochs >= 1");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: requires batch_size >= 2");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: requires learning_rate > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("TrainConfig: requires 0 < lr_decay <= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("TrainConfig: requires 0 <= momentum < 1");
  }
};

struct TrainReport {
  std::vector<double> train_accuracy;   // against the labels the trainer sees
  std::vector<double> val_accuracy;
  std::vector<double> test_accuracy;
  std::vector<double> label_precision;  // clean fraction of the updates' samples
  std::vector<double> peer_test_accuracy;  // second network, co-teaching only
  std::vector<int> keep_counts;         // per-epoch keep count at full batch size
  double final_val_loss = 0.0;          // the black-box objective value
  double final_val_error = 0.0;
  double wall_time_seconds = 0.0;
};

struct TrainOutcome {
  TrainReport report;
  MlpModel model;        // reported network
  MlpModel peer_model;   // empty unless co-teaching
};

inline std::string report_to_csv(const TrainReport& report) {
  std::string out = "epoch,train_acc,val_acc,test_acc,label_precision\n";
  for (std::size_t t = 0; t < report.train_accuracy.size(); ++t) {
    out += std::to_string(t) + ',' + format_double(report.train_accuracy[t]) + ',' +
           format_double(report.val_accuracy[t]) + ',' + format_double(report.test_accuracy[t]) +
           ',' + format_double(report.label_precision[t]) + '\n';
  }
  return out;
}

namespace detail {

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& src, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(rows[i]);
  return out;
}

inline Eigen::VectorXi gather_labels(const Eigen::VectorXi& src, const std::vector<int>& rows) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = src(rows[i]);
  return out;
}

inline double accuracy(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXi& y) {
  if (x.rows() == 0) return 1.0;
  const Eigen::MatrixXd z = model.logits(x);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index argmax = 0;
    z.row(i).maxCoeff(&argmax);
    if (static_cast<int>(argmax) == y(i)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

struct SplitTensors {
  Eigen::MatrixXd x_train, x_val, x_test;
  Eigen::VectorXi y_train, y_val, y_test;
  std::vector<int> train_rows;            // dataset row ids, batch order domain
  std::vector<bool> train_clean;          // clean mask aligned with train_rows

  explicit SplitTensors(const NoisyDataset& data) {
    train_rows = data.indices_of(Split::train);
    const auto val_rows = data.indices_of(Split::val);
    const auto test_rows = data.indices_of(Split::test);
    x_train = gather_rows(data.features(), train_rows);
    x_val = gather_rows(data.features(), val_rows);
    x_test = gather_rows(data.features(), test_rows);
    y_train = gather_labels(data.noisy_labels(), train_rows);
    y_val = gather_labels(data.noisy_labels(), val_rows);
    y_test = gather_labels(data.noisy_labels(), test_rows);
    const auto metrics = data.metrics();
    train_clean.reserve(train_rows.size());
    for (int row : train_rows) train_clean.push_back(metrics.is_clean(row));
  }
};

// Shared mini-batch loop for the one- and two-network variants. The second
// model is engaged only in co-teaching mode, where each network updates on
// the peer's small-loss picks.
inline TrainOutcome train_impl(const NoisyDataset& data, const ScheduleParams& schedule,
                               const TrainConfig& cfg, const ShapeMap& map, bool coteach,
                               const MlpModel* init_a, const MlpModel* init_b) {
  cfg.require_valid();
  const auto started = std::chrono::steady_clock::now();
  const SplitTensors split(data);
  if (split.train_rows.size() < 2) throw std::invalid_argument("train: needs at least 2 training rows");

  std::vector<int> layers;
  layers.push_back(static_cast<int>(data.dim()));
  for (int h : cfg.hidden) layers.push_back(h);
  layers.push_back(data.classes());

  Rng init_rng_a = Rng::derived(cfg.seed, {0x10deull, 1});
  Rng init_rng_b = Rng::derived(cfg.seed, {0x10deull, 2});
  MlpModel model_a = init_a ? *init_a : MlpModel::init(layers, init_rng_a);
  MlpModel model_b;
  if (coteach) model_b = init_b ? *init_b : MlpModel::init(layers, init_rng_b);

  SgdOptimizer opt_a(model_a, cfg.learning_rate, cfg.momentum);
  SgdOptimizer opt_b = coteach ? SgdOptimizer(model_b, cfg.learning_rate, cfg.momentum)
                               : SgdOptimizer(model_a, 0.0, 0.0);

  Rng order_rng = Rng::derived(cfg.seed, {0x0edeull});
  std::vector<int> order(split.train_rows.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  const int horizon = cfg.epochs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double keep_rate = cfg.selection == SelectionMode::none
                                 ? 1.0
                                 : eval_schedule(schedule, epoch, horizon, map);
    report.keep_counts.push_back(keep_count(keep_rate, cfg.batch_size));
    opt_a.learning_rate = cfg.learning_rate * std::pow(cfg.lr_decay, epoch);
    if (coteach) opt_b.learning_rate = opt_a.learning_rate;

    order_rng.shuffle(order);
    double precision_sum = 0.0;
    int precision_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
      const Eigen::MatrixXd xb = gather_rows(split.x_train, batch);
      const Eigen::VectorXi yb = gather_labels(split.y_train, batch);
      const int n_keep = keep_count(keep_rate, static_cast<int>(batch.size()));

      std::vector<int> keep_for_a;
      std::vector<int> keep_for_b;
      if (coteach) {
        // peer selection: a's picks train b and vice versa
        keep_for_b = select_small_loss(forward_loss(model_a, xb, yb).first, n_keep);
        keep_for_a = select_small_loss(forward_loss(model_b, xb, yb).first, n_keep);
      } else if (cfg.selection == SelectionMode::none) {
        keep_for_a.resize(batch.size());
        std::iota(keep_for_a.begin(), keep_for_a.end(), 0);
      } else {
        keep_for_a = select_small_loss(forward_loss(model_a, xb, yb).first, n_keep);
      }

      std::vector<bool> clean_mask;
      clean_mask.reserve(batch.size());
      for (int local : batch) clean_mask.push_back(split.train_clean[static_cast<std::size_t>(local)]);
      precision_sum += label_precision(keep_for_a, clean_mask);
      ++precision_batches;

      const Eigen::MatrixXd xa = gather_rows(xb, keep_for_a);
      const Eigen::VectorXi ya = gather_labels(yb, keep_for_a);
      opt_a.step(model_a, backward(model_a, xa, ya));
      if (coteach) {
        const Eigen::MatrixXd xsel = gather_rows(xb, keep_for_b);
        const Eigen::VectorXi ysel = gather_labels(yb, keep_for_b);
        opt_b.step(model_b, backward(model_b, xsel, ysel));
      }
    }

    report.label_precision.push_back(precision_sum / std::max(precision_batches, 1));
    if (cfg.record_curves) {
      report.train_accuracy.push_back(accuracy(model_a, split.x_train, split.y_train));
      report.val_accuracy.push_back(accuracy(model_a, split.x_val, split.y_val));
      report.test_accuracy.push_back(accuracy(model_a, split.x_test, split.y_test));
      if (coteach) report.peer_test_accuracy.push_back(accuracy(model_b, split.x_test, split.y_test));
    }
  }

  report.final_val_loss = forward_loss(model_a, split.x_val, split.y_val).second;
  report.final_val_error = 1.0 - accuracy(model_a, split.x_val, split.y_val);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  TrainOutcome outcome;
  outcome.report = std::move(report);
  outcome.model = std::move(model_a);
  if (coteach) outcome.peer_model = std::move(model_b);
  return outcome;
}

}  // namespace detail

// One network trained with small-loss selection under the given schedule.
inline TrainOutcome train_single(const NoisyDataset& data, const ScheduleParams& schedule,
                                 const TrainConfig& cfg, const ShapeMap& map = ShapeMap::defaults(),
                                 const MlpModel* initial = nullptr) {
  return detail::train_impl(data, schedule, cfg, map, false, initial, nullptr);
}

// Two peer networks; each updates on the samples the other selected. The
// report follows network a, the peer's test curve rides along.
inline TrainOutcome train_coteaching(const NoisyDataset& data, const ScheduleParams& schedule,
                                     const TrainConfig& cfg,
                                     const ShapeMap& map = ShapeMap::defaults(),
                                     const MlpModel* initial_a = nullptr,
                                     const MlpModel* initial_b = nullptr) {
  return detail::train_impl(data, schedule, cfg, map, true, initial_a, initial_b);
}

struct ObjectiveEnv {
  const NoisyDataset& data;
  TrainConfig train;
  ShapeMap map = ShapeMap::defaults();
};

inline constexpr double kDivergenceSentinel = 1e6;

// The black-box objective: train under schedule x and read the final
// validation loss (or error rate). Divergence maps to a large sentinel so a
// search survives bad candidates.
inline double evaluate_objective(const ScheduleParams& x, const ObjectiveEnv& env) {
  TrainConfig cfg = env.train;
  cfg.record_curves = false;
  TrainOutcome outcome;
  try {
    outcome = cfg.selection == SelectionMode::coteaching
                  ? train_coteaching(env.data, x, cfg, env.map)
                  : train_single(env.data, x, cfg, env.map);
  } catch (const std::domain_error&) {
    return kDivergenceSentinel;
  }
  const double value =
      cfg.objective_error_rate ? outcome.report.final_val_error : outcome.report.final_val_loss;
  return std::isfinite(value) ? value : kDivergenceSentinel;
}

// Flat binary weight dump with a JSON shape header alongside.
inline void dump_weights(const MlpModel& model, const std::string& bin_path,
                         const std::string& header_path) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("dump_weights: cannot open " + bin_path);
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const auto& w = model.weights[l];
    layers.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"bias", model.biases[l].size()}});
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const double v = w(i, j);
        bin.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
    for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) {
      const double v = model.biases[l](i);
      bin.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  std::ofstream header(header_path);
  if (!header) throw std::runtime_error("dump_weights: cannot open " + header_path);
  header << nlohmann::json{{"format", "float64-le"}, {"order", "weights-then-bias-per-layer"},
                           {"layers", layers}}
                .dump(2)
         << "\n";
}

}  // namespace memosched
