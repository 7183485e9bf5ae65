#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "memosched/data.hpp"
#include "memosched/io.hpp"
#include "memosched/schedule.hpp"
#include "memosched/search.hpp"
#include "memosched/trainer.hpp"

namespace memosched {

struct DatasetSpec {
  std::string kind = "gaussian";  // gaussian | idx
  int classes = 3;
  int dim = 8;
  int n_per_class = 400;
  double spread = 0.5;
  std::string images_path;
  std::string labels_path;
  Eigen::Index subsample = 0;
};

struct NoiseSpec {
  std::string type = "symmetric";  // none | symmetric | pair
  double rate = 0.4;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out_dir = "out";
  std::string objective = "trainer";  // trainer | surrogate
  DatasetSpec dataset;
  NoiseSpec noise;
  TrainConfig train;
  SearchConfig search;

  void require_valid() const {
    if (workers < 1) throw std::invalid_argument("ExperimentConfig: requires workers >= 1");
    if (objective != "trainer" && objective != "surrogate") {
      throw std::invalid_argument("ExperimentConfig: objective must be trainer or surrogate");
    }
    if (dataset.kind != "gaussian" && dataset.kind != "idx") {
      throw std::invalid_argument("ExperimentConfig: dataset kind must be gaussian or idx");
    }
    if (noise.type != "none" && noise.type != "symmetric" && noise.type != "pair") {
      throw std::invalid_argument("ExperimentConfig: noise type must be none, symmetric or pair");
    }
    train.require_valid();
    search.require_valid();
  }
};

inline void to_json(nlohmann::json& j, const DatasetSpec& d) {
  j = nlohmann::json{{"kind", d.kind},           {"classes", d.classes},
                     {"dim", d.dim},             {"n_per_class", d.n_per_class},
                     {"spread", d.spread},       {"images", d.images_path},
                     {"labels", d.labels_path},  {"subsample", d.subsample}};
}

inline void from_json(const nlohmann::json& j, DatasetSpec& d) {
  d.kind = j.value("kind", d.kind);
  d.classes = j.value("classes", d.classes);
  d.dim = j.value("dim", d.dim);
  d.n_per_class = j.value("n_per_class", d.n_per_class);
  d.spread = j.value("spread", d.spread);
  d.images_path = j.value("images", d.images_path);
  d.labels_path = j.value("labels", d.labels_path);
  d.subsample = j.value("subsample", d.subsample);
}

inline void to_json(nlohmann::json& j, const NoiseSpec& n) {
  j = nlohmann::json{{"type", n.type}, {"rate", n.rate}};
}

inline void from_json(const nlohmann::json& j, NoiseSpec& n) {
  n.type = j.value("type", n.type);
  n.rate = j.value("rate", n.rate);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"lr_decay", c.lr_decay},
                     {"momentum", c.momentum},
                     {"selection", to_string(c.selection)},
                     {"hidden", c.hidden},
                     {"objective_error_rate", c.objective_error_rate}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.momentum = j.value("momentum", c.momentum);
  c.selection = parse_selection_mode(j.value("selection", to_string(c.selection)));
  c.hidden = j.value("hidden", c.hidden);
  c.objective_error_rate = j.value("objective_error_rate", c.objective_error_rate);
}

inline void to_json(nlohmann::json& j, const SearchConfig& c) {
  j = nlohmann::json{{"iterations", c.outer_iterations},
                     {"samples", c.samples_per_iteration},
                     {"stepsize", c.resolved_stepsize()},
                     {"eig_floor", c.eig_floor},
                     {"eig_cap", c.eig_cap},
                     {"rule", to_string(c.rule)},
                     {"baseline", c.baseline},
                     {"budget", c.eval_budget}};
}

inline void from_json(const nlohmann::json& j, SearchConfig& c) {
  c.outer_iterations = j.value("iterations", c.outer_iterations);
  c.samples_per_iteration = j.value("samples", c.samples_per_iteration);
  c.stepsize = j.value("stepsize", c.stepsize);
  c.eig_floor = j.value("eig_floor", c.eig_floor);
  c.eig_cap = j.value("eig_cap", c.eig_cap);
  c.rule = parse_update_rule(j.value("rule", to_string(c.rule)));
  c.baseline = j.value("baseline", c.baseline);
  c.eval_budget = j.value("budget", c.eval_budget);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"seed", c.seed},       {"workers", c.workers},
                     {"out", c.out_dir},     {"objective", c.objective},
                     {"dataset", c.dataset}, {"noise", c.noise},
                     {"train", c.train},     {"search", c.search}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  c.out_dir = j.value("out", c.out_dir);
  c.objective = j.value("objective", c.objective);
  if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
  if (j.contains("noise")) j.at("noise").get_to(c.noise);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("search")) j.at("search").get_to(c.search);
}

// Smooth fixed-target surrogate objective over the raw search point; lets the
// outer loop be exercised and benchmarked without any model training.
struct SurrogateObjective {
  Eigen::VectorXd alpha_target;
  Eigen::MatrixXd beta_target;

  static SurrogateObjective defaults(Eigen::Index k = kBasisCount,
                                     Eigen::Index p = kShapeCount) {
    SurrogateObjective s;
    s.alpha_target.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      s.alpha_target(i) = 2.0 * static_cast<double>(k - i) / (static_cast<double>(k) * (k + 1));
    }
    s.beta_target.resize(k, p);
    const double count = static_cast<double>(k * p);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        s.beta_target(i, j) = 0.25 + 0.5 * static_cast<double>(i * p + j) / (count - 1.0);
      }
    }
    return s;
  }

  double operator()(const ScheduleParams& x) const {
    const double beta_term = (x.beta - beta_target).squaredNorm() /
                             static_cast<double>(beta_target.size());
    const double alpha_term =
        (x.alpha - alpha_target).squaredNorm() / static_cast<double>(alpha_target.size());
    return beta_term + alpha_term;
  }
};

inline NoisyDataset build_dataset(const ExperimentConfig& cfg) {
  const std::uint64_t data_seed = derive_seed(cfg.seed, {0xd5ull});
  NoisyDataset clean = cfg.dataset.kind == "idx"
                           ? load_idx(cfg.dataset.images_path, cfg.dataset.labels_path,
                                      cfg.dataset.subsample)
                           : make_gaussian_mixture(cfg.dataset.classes, cfg.dataset.dim,
                                                   cfg.dataset.n_per_class, cfg.dataset.spread,
                                                   data_seed);
  const std::uint64_t noise_seed = derive_seed(cfg.seed, {0x99ull});
  if (cfg.noise.type == "symmetric") return inject_symmetric_noise(clean, cfg.noise.rate, noise_seed);
  if (cfg.noise.type == "pair") return inject_pair_noise(clean, cfg.noise.rate, noise_seed);
  return clean;
}

// T+1 rows (t, R) on the epoch grid.
inline std::string schedule_plot_csv(const ScheduleParams& x, int horizon,
                                     const ShapeMap& map = ShapeMap::defaults()) {
  if (horizon < 1) throw std::invalid_argument("schedule_plot_csv: requires horizon >= 1");
  std::string out = "t,R\n";
  for (int t = 0; t <= horizon; ++t) {
    out += std::to_string(t) + ',' + format_double(eval_schedule(x, t, horizon, map)) + '\n';
  }
  return out;
}

inline void emit_schedule_plot_data(const ScheduleParams& x, int horizon, const std::string& path,
                                    const ShapeMap& map = ShapeMap::defaults()) {
  write_file(path, schedule_plot_csv(x, horizon, map));
}

namespace detail {

template <class Evaluator>
SearchResult dispatch_search(const SearchConfig& cfg, Evaluator&& objective) {
  if (cfg.rule == UpdateRule::random) return random_search(cfg, objective);
  return run_search(cfg, objective);
}

inline SearchResult run_configured_search(const ExperimentConfig& cfg, const NoisyDataset* data) {
  SearchConfig scfg = cfg.search;
  scfg.seed = derive_seed(cfg.seed, {0x5eull});
  scfg.workers = cfg.workers;
  if (cfg.objective == "surrogate") {
    return dispatch_search(scfg, SurrogateObjective::defaults());
  }
  TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed(cfg.seed, {0x7eull});
  const ObjectiveEnv env{*data, tcfg, ShapeMap::defaults()};
  return dispatch_search(scfg, [env](const ScheduleParams& x) { return evaluate_objective(x, env); });
}

}  // namespace detail

// End-to-end run: search for a schedule, retrain the best one with full
// diagnostics, and drop every artifact under out_dir. Returns a process exit
// status and prints a single-line diagnostic on failure.
inline int run_experiment(const ExperimentConfig& cfg) {
  try {
    cfg.require_valid();
    std::filesystem::create_directories(cfg.out_dir);
    const auto artifact = [&](const std::string& name) {
      return (std::filesystem::path(cfg.out_dir) / name).string();
    };

    nlohmann::json manifest = cfg;
    write_file(artifact("run_manifest.json"), manifest.dump(2) + "\n");

    NoisyDataset* data_ptr = nullptr;
    std::optional<NoisyDataset> data;
    if (cfg.objective == "trainer") {
      data.emplace(build_dataset(cfg));
      data_ptr = &*data;
    }

    const SearchResult result = detail::run_configured_search(cfg, data_ptr);
    write_file(artifact("search_trace.csv"), trace_to_csv(result.trace));
    write_file(artifact("search_trace.json"), trace_to_json(result.trace).dump(2) + "\n");

    nlohmann::json best = result.best_x;
    best["best_f"] = result.best_f;
    write_file(artifact("best_schedule.json"), best.dump(2) + "\n");
    emit_schedule_plot_data(result.best_x, std::max(cfg.train.epochs, 1),
                            artifact("best_schedule_curve.csv"));

    std::string report_csv = "epoch,train_acc,val_acc,test_acc,label_precision\n";
    if (cfg.objective == "trainer") {
      TrainConfig tcfg = cfg.train;
      tcfg.seed = derive_seed(cfg.seed, {0x7eull});
      tcfg.record_curves = true;
      const TrainOutcome outcome =
          tcfg.selection == SelectionMode::coteaching
              ? train_coteaching(*data_ptr, result.best_x, tcfg)
              : train_single(*data_ptr, result.best_x, tcfg);
      report_csv = report_to_csv(outcome.report);
    }
    write_file(artifact("final_report.csv"), report_csv);
    return 0;
  } catch (const std::exception& err) {
    std::cerr << "run_experiment failed: " << err.what() << "\n";
    return 1;
  }
}

// Same budget and seed for every rule; rows are (rule, calls, best_f) per
// outer iteration so efficiency curves can be plotted directly.
inline std::string compare_search_algorithms(const ExperimentConfig& cfg,
                                             const std::vector<UpdateRule>& rules) {
  cfg.require_valid();
  std::optional<NoisyDataset> data;
  if (cfg.objective == "trainer") data.emplace(build_dataset(cfg));

  std::string csv = "rule,calls,best_f\n";
  for (UpdateRule rule : rules) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.search.rule = rule;
    run_cfg.search.stepsize = cfg.search.stepsize;  // <= 0 resolves per rule
    const SearchResult result =
        detail::run_configured_search(run_cfg, data ? &*data : nullptr);
    for (const auto& iter : result.trace.iterations) {
      csv += to_string(rule) + ',' + std::to_string(iter.calls) + ',' +
             format_double(iter.best_f) + '\n';
    }
  }
  return csv;
}

inline int default_worker_count() {
  if (const char* env = std::getenv("MEMOSCHED_WORKERS")) {
    const int parsed = std::atoi(env);
    if (parsed >= 1) return parsed;
  }
  return 1;
}

}  // namespace memosched
