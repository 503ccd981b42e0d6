// Command-line front end: synthetic data generation, federated/naive
// experiment runs, scaling and update benchmarks, and the per-party
// entry points the experiment runner spawns as separate processes.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <flake.hpp>

namespace {

// Every ExperimentConfig field as a flag; --config loads a JSON file first
// and explicitly passed flags override its values.
struct ConfigArgs {
  std::string config_path;
  flake::ExperimentConfig flags;
  std::string kernel_kind = "linear";

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file; flags override its fields");
    cmd->add_option("--parties", flags.parties, "number of input parties");
    cmd->add_option("--samples-per-party", flags.samples_per_party, "samples per input party");
    cmd->add_option("--features", flags.features, "feature count f");
    cmd->add_option("--classes", flags.classes, "number of classes");
    cmd->add_option("--k", flags.k, "mask width k (must exceed features)");
    cmd->add_option("--kernel", kernel_kind, "kernel kind: linear | polynomial | rbf");
    cmd->add_option("--kernel-v", flags.kernel.v, "polynomial kernel offset v");
    cmd->add_option("--kernel-p", flags.kernel.p, "polynomial kernel degree p");
    cmd->add_option("--kernel-sigma", flags.kernel.sigma, "rbf kernel width sigma");
    cmd->add_option("--c-grid", flags.c_grid, "SVM C grid (comma separated)")->delimiter(',');
    cmd->add_option("--degree-grid", flags.degree_grid, "polynomial degree grid (comma separated)")
        ->delimiter(',');
    cmd->add_option("--seed", flags.seed, "master seed (data, mask, folds)");
    cmd->add_option("--separation", flags.separation, "class separation of synthetic blobs");
    cmd->add_option("--mode", flags.mode, "federated | naive | both");
    cmd->add_option("--out", flags.output_path, "report output path (.csv or .jsonl)");
    cmd->add_option("--folds", flags.folds, "cross-validation folds");
    cmd->add_option("--chunk-rows", flags.chunk_rows, "rows per masked chunk frame");
    cmd->add_option("--timeout", flags.timeout_s, "network timeout in seconds");
  }

  flake::ExperimentConfig resolve(const CLI::App* cmd) const {
    flake::ExperimentConfig cfg =
        config_path.empty() ? flake::ExperimentConfig{} : flake::load_experiment_config(config_path);
    const auto passed = [cmd](const std::string& name) { return cmd->count(name) > 0; };
    if (passed("--parties")) cfg.parties = flags.parties;
    if (passed("--samples-per-party")) cfg.samples_per_party = flags.samples_per_party;
    if (passed("--features")) cfg.features = flags.features;
    if (passed("--classes")) cfg.classes = flags.classes;
    if (passed("--k")) cfg.k = flags.k;
    if (passed("--kernel")) {
      nlohmann::json j{{"kind", kernel_kind}, {"v", flags.kernel.v},
                       {"p", flags.kernel.p}, {"sigma", flags.kernel.sigma}};
      cfg.kernel = j.get<flake::KernelSpec>();
    }
    if (passed("--kernel-v")) cfg.kernel.v = flags.kernel.v;
    if (passed("--kernel-p")) cfg.kernel.p = flags.kernel.p;
    if (passed("--kernel-sigma")) cfg.kernel.sigma = flags.kernel.sigma;
    if (passed("--c-grid")) cfg.c_grid = flags.c_grid;
    if (passed("--degree-grid")) cfg.degree_grid = flags.degree_grid;
    if (passed("--seed")) cfg.seed = flags.seed;
    if (passed("--separation")) cfg.separation = flags.separation;
    if (passed("--mode")) cfg.mode = flags.mode;
    if (passed("--out")) cfg.output_path = flags.output_path;
    if (passed("--folds")) cfg.folds = flags.folds;
    if (passed("--chunk-rows")) cfg.chunk_rows = flags.chunk_rows;
    if (passed("--timeout")) cfg.timeout_s = flags.timeout_s;
    return cfg;
  }
};

void print_cv_report(const std::string& label, const flake::CvReport& r) {
  std::printf("%s: mean_auc=%.6f std_auc=%.6f best_c=%g best_p=%d\n", label.c_str(), r.mean_auc,
              r.std_auc, r.best_c, r.best_p);
}

void print_timing(const flake::TimingReport& t) {
  for (const auto& stage : t.stages) {
    std::printf("  [%s] %s: mean %.6fs over %zu sample(s)\n", t.label.c_str(),
                stage.stage.c_str(), stage.mean(), stage.seconds.size());
  }
}

void emit_timing_if_requested(const std::vector<flake::TimingReport>& reports,
                              const std::string& path) {
  if (path.empty()) return;
  flake::emit_timing_reports(reports, path, flake::report_format_from_path(path));
  std::printf("timing report written to %s\n", path.c_str());
}

int cmd_gen_data(std::size_t samples, std::size_t features, std::size_t classes,
                 std::uint64_t seed, double separation, const std::string& out) {
  const flake::Dataset data = flake::gen_synthetic(samples, features, classes, seed, separation);
  flake::save_csv(data, out);
  std::printf("wrote %zu samples x %zu features to %s\n", data.features.rows(),
              data.features.cols(), out.c_str());
  return 0;
}

int cmd_run(const flake::ExperimentConfig& cfg, const std::string& timing_out) {
  const flake::ExperimentResult result = flake::run_experiment(cfg);
  std::vector<flake::CvReport> reports;
  if (result.federated) {
    print_cv_report("federated", *result.federated);
    reports.push_back(*result.federated);
  }
  if (result.naive) {
    print_cv_report("naive", *result.naive);
    reports.push_back(*result.naive);
  }
  if (result.auc_difference) {
    std::printf("mean_auc difference: %.3e\n", *result.auc_difference);
  }
  print_timing(result.timing);
  if (!cfg.output_path.empty()) {
    flake::emit_cv_reports(reports, cfg.output_path,
                           flake::report_format_from_path(cfg.output_path));
    std::printf("cv report written to %s\n", cfg.output_path.c_str());
  }
  emit_timing_if_requested({result.timing}, timing_out);
  return 0;
}

int cmd_bench_scaling(const flake::ExperimentConfig& cfg, const std::vector<std::size_t>& sizes,
                      std::size_t repeats) {
  const std::vector<flake::TimingReport> series = flake::run_scaling_benchmark(sizes, repeats, cfg);
  for (const auto& report : series) print_timing(report);
  emit_timing_if_requested(series, cfg.output_path);
  return 0;
}

int cmd_bench_update(const flake::ExperimentConfig& cfg, std::size_t start_n,
                     std::size_t increment, std::size_t rounds) {
  const flake::UpdateRunResult result =
      flake::run_update_iterations(start_n, increment, rounds, cfg);
  for (std::size_t r = 0; r < result.recompute_errors.size(); ++r) {
    std::printf("round %zu: recompute error %.3e\n", r, result.recompute_errors[r]);
  }
  print_timing(result.timing);
  emit_timing_if_requested({result.timing}, cfg.output_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flake: federated kernel-method experiments"};
  app.require_subcommand(1);

  // gen-data
  std::size_t gd_samples = 900, gd_features = 20, gd_classes = 2;
  std::uint64_t gd_seed = 1;
  double gd_separation = 2.0;
  std::string gd_out;
  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic labeled dataset as CSV");
  gen->add_option("--samples", gd_samples, "total sample count");
  gen->add_option("--features", gd_features, "feature count");
  gen->add_option("--classes", gd_classes, "number of classes");
  gen->add_option("--seed", gd_seed, "generator seed");
  gen->add_option("--separation", gd_separation, "class separation");
  gen->add_option("--out", gd_out, "output CSV path")->required();

  // run
  ConfigArgs run_args;
  std::string run_timing_out;
  CLI::App* run = app.add_subcommand("run", "run a federated and/or naive experiment");
  run_args.attach(run);
  run->add_option("--timing-out", run_timing_out, "also write stage timings (.csv or .jsonl)");

  // bench-scaling
  ConfigArgs scaling_args;
  std::vector<std::size_t> sizes;
  std::size_t repeats = 3;
  CLI::App* scaling = app.add_subcommand("bench-scaling", "time masking/gram/training per size");
  scaling_args.attach(scaling);
  scaling->add_option("--sizes", sizes, "ascending total sample counts (comma separated)")
      ->delimiter(',')
      ->required();
  scaling->add_option("--repeats", repeats, "timing samples per stage");

  // bench-update
  ConfigArgs update_args;
  std::size_t start_n = 100, increment = 50, rounds = 3;
  CLI::App* update = app.add_subcommand("bench-update", "grow the gram matrix round by round");
  update_args.attach(update);
  update->add_option("--start-n", start_n, "initial samples per party");
  update->add_option("--increment", increment, "new samples per party per round");
  update->add_option("--rounds", rounds, "number of rounds (>= 2)");

  // Internal subcommands used by the experiment runner to spawn parties.
  std::string input_config, function_config;
  CLI::App* input_party =
      app.add_subcommand("input-party", "run one input party process (internal)");
  input_party->add_option("--config", input_config, "JSON process config")->required();
  CLI::App* function_party =
      app.add_subcommand("function-party", "run the function party process (internal)");
  function_party->add_option("--config", function_config, "JSON process config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gd_samples, gd_features, gd_classes, gd_seed, gd_separation, gd_out);
    }
    if (run->parsed()) return cmd_run(run_args.resolve(run), run_timing_out);
    if (scaling->parsed()) return cmd_bench_scaling(scaling_args.resolve(scaling), sizes, repeats);
    if (update->parsed()) {
      return cmd_bench_update(update_args.resolve(update), start_n, increment, rounds);
    }
    if (input_party->parsed()) {
      flake::input_party_process(
          flake::load_json_config<flake::InputPartyProcessConfig>(input_config));
      return 0;
    }
    if (function_party->parsed()) {
      flake::function_party_process(
          flake::load_json_config<flake::FunctionPartyProcessConfig>(function_config));
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
