// Command-line front end: wires datasets, the trainer and the schedule search
// together and drops CSV/JSON artifacts for tables and plots.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memosched/harness.hpp"

namespace {

using namespace memosched;

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return nlohmann::json::parse(in).get<ExperimentConfig>();
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::uint64_t> budget;
  std::optional<std::string> out;

  void apply(ExperimentConfig& cfg) const {
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    if (budget) cfg.search.eval_budget = *budget;
    if (out) cfg.out_dir = *out;
  }
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "experiment seed override");
  cmd->add_option("--workers", ov.workers, "worker count override")
      ->envname("MEMOSCHED_WORKERS");
  cmd->add_option("--budget", ov.budget, "evaluator call cap override");
  cmd->add_option("--out", ov.out, "output directory override");
}

int cmd_search(const std::string& config_path, const Overrides& ov) {
  ExperimentConfig cfg = load_config(config_path);
  cfg.workers = default_worker_count();
  ov.apply(cfg);
  return run_experiment(cfg);
}

int cmd_compare(const std::string& config_path, const Overrides& ov,
                const std::vector<std::string>& rule_names) {
  ExperimentConfig cfg = load_config(config_path);
  cfg.workers = default_worker_count();
  ov.apply(cfg);
  std::vector<UpdateRule> rules;
  for (const auto& name : rule_names) rules.push_back(parse_update_rule(name));
  if (rules.empty()) {
    rules = {UpdateRule::newton, UpdateRule::gd, UpdateRule::ng, UpdateRule::random};
  }
  try {
    cfg.require_valid();
    std::filesystem::create_directories(cfg.out_dir);
    const std::string csv = compare_search_algorithms(cfg, rules);
    write_file((std::filesystem::path(cfg.out_dir) / "comparison.csv").string(), csv);
    return 0;
  } catch (const std::exception& err) {
    std::cerr << "compare failed: " << err.what() << "\n";
    return 1;
  }
}

int cmd_fit_coteaching(double tau, double c, double t_k, int horizon, const std::string& out_dir) {
  try {
    std::filesystem::create_directories(out_dir);
    const auto fit = fit_to_reference(
        [&](int t) { return coteaching_schedule(tau, c, t_k, t); }, horizon,
        ShapeMap::defaults());
    nlohmann::json j = fit.params;
    j["residual"] = fit.residual;
    const std::filesystem::path dir(out_dir);
    write_file((dir / "fitted_schedule.json").string(), j.dump(2) + "\n");
    emit_schedule_plot_data(fit.params, horizon, (dir / "fitted_schedule_curve.csv").string());
    std::cout << "residual " << fit.residual << "\n";
    return 0;
  } catch (const std::exception& err) {
    std::cerr << "fit-coteaching failed: " << err.what() << "\n";
    return 1;
  }
}

int cmd_train_once(const std::string& config_path, const Overrides& ov,
                   const std::string& schedule_path, const std::string& dump_prefix) {
  try {
    ExperimentConfig cfg = load_config(config_path);
    ov.apply(cfg);
    cfg.require_valid();
    std::filesystem::create_directories(cfg.out_dir);

    ScheduleParams x = ScheduleParams::constant_one();
    if (!schedule_path.empty()) {
      std::ifstream in(schedule_path);
      if (!in) throw std::runtime_error("cannot open schedule: " + schedule_path);
      x = nlohmann::json::parse(in).get<ScheduleParams>();
    }

    const NoisyDataset data = build_dataset(cfg);
    TrainConfig tcfg = cfg.train;
    tcfg.seed = derive_seed(cfg.seed, {0x7eull});
    tcfg.record_curves = true;
    const TrainOutcome outcome = tcfg.selection == SelectionMode::coteaching
                                     ? train_coteaching(data, x, tcfg)
                                     : train_single(data, x, tcfg);

    const std::filesystem::path dir(cfg.out_dir);
    write_file((dir / "final_report.csv").string(), report_to_csv(outcome.report));
    if (!dump_prefix.empty()) {
      dump_weights(outcome.model, dump_prefix + ".bin", dump_prefix + ".json");
    }
    std::cout << "final validation loss " << outcome.report.final_val_loss << "\n";
    return 0;
  } catch (const std::exception& err) {
    std::cerr << "train-once failed: " << err.what() << "\n";
    return 1;
  }
}

int cmd_emit_plot(const std::string& schedule_path, int horizon, const std::string& out_path) {
  try {
    std::ifstream in(schedule_path);
    if (!in) throw std::runtime_error("cannot open schedule: " + schedule_path);
    const ScheduleParams x = nlohmann::json::parse(in).get<ScheduleParams>();
    emit_schedule_plot_data(x, horizon, out_path);
    return 0;
  } catch (const std::exception& err) {
    std::cerr << "emit-plot failed: " << err.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keep-rate schedule search for training with noisy labels"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  std::vector<std::string> rule_names;
  double tau = 0.5, c = 1.0, t_k = 10.0;
  int horizon = 200;
  std::string out_dir = "out";
  std::string schedule_path;
  std::string dump_prefix;
  std::string plot_out = "schedule_curve.csv";

  auto* search = app.add_subcommand("search", "run the schedule search end to end");
  search->add_option("--config", config_path, "experiment config JSON")->required();
  add_override_flags(search, ov);

  auto* compare = app.add_subcommand("compare", "run several update rules at equal budget");
  compare->add_option("--config", config_path, "experiment config JSON")->required();
  compare->add_option("--rules", rule_names, "subset of newton,gd,ng,random")->delimiter(',');
  add_override_flags(compare, ov);

  auto* fit = app.add_subcommand("fit-coteaching", "fit the mixture space to the reference schedule");
  fit->add_option("--tau", tau, "final drop fraction");
  fit->add_option("--c", c, "ramp exponent");
  fit->add_option("--tk", t_k, "ramp length in epochs");
  fit->add_option("--horizon", horizon, "epoch horizon");
  fit->add_option("--out", out_dir, "output directory");

  auto* train = app.add_subcommand("train-once", "train a single run under a fixed schedule");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--schedule", schedule_path, "schedule JSON (defaults to keep everything)");
  train->add_option("--dump-weights", dump_prefix, "write <prefix>.bin / <prefix>.json weights");
  add_override_flags(train, ov);

  auto* plot = app.add_subcommand("emit-plot", "tabulate R(t) for a schedule JSON");
  plot->add_option("--schedule", schedule_path, "schedule JSON")->required();
  plot->add_option("--horizon", horizon, "epoch horizon");
  plot->add_option("--out", plot_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (search->parsed()) return cmd_search(config_path, ov);
    if (compare->parsed()) return cmd_compare(config_path, ov, rule_names);
    if (fit->parsed()) return cmd_fit_coteaching(tau, c, t_k, horizon, out_dir);
    if (train->parsed()) return cmd_train_once(config_path, ov, schedule_path, dump_prefix);
    if (plot->parsed()) return cmd_emit_plot(schedule_path, horizon, plot_out);
  } catch (const std::exception& err) {
    std::cerr << err.what() << "\n";
    return 1;
  }
  return 0;
}
