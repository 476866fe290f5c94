#include "hbm/io/commands.hpp"
#include "hbm/parallel.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

hbm::io::ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed) {
  hbm::io::ExperimentConfig cfg = hbm::io::ExperimentConfig::load(path);
  if (seed) cfg.override_seed(*seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Bayesian model updating and reliability"};
  app.require_subcommand(1);
  int threads = 1;
  std::optional<std::uint64_t> seed;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Replace every seed in the config by one derived from this root");
  app.set_version_flag("--version", hbm::io::kToolVersion);

  std::string config, out;
  bool quiet = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Run directory")->required();
  };
  CLI::App* generate = app.add_subcommand("generate", "Simulate datasets and ground truth");
  add_common(generate);
  CLI::App* fit = app.add_subcommand("fit", "Hierarchical and pooled posteriors with summary tables");
  add_common(fit);
  fit->add_flag("--quiet", quiet, "No progress messages");
  CLI::App* reliability = app.add_subcommand("reliability", "Failure-probability curves per method");
  add_common(reliability);
  CLI::App* report = app.add_subcommand("report", "Merge completed runs into report.json");
  std::vector<std::string> runs;
  report->add_option("--config", config, "Report config: {\"runs\": [run directories]}")->check(CLI::ExistingFile);
  report->add_option("--run", runs, "Run directory (repeatable)");
  report->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  hbm::set_num_threads(threads);
  try {
    if (*generate) {
      hbm::io::cmd_generate(load(config, seed), out);
    } else if (*fit) {
      hbm::io::cmd_fit(load(config, seed), out, {!quiet});
    } else if (*reliability) {
      hbm::io::cmd_reliability(load(config, seed), out);
    } else if (*report) {
      std::vector<std::filesystem::path> dirs;
      if (!config.empty()) dirs = hbm::io::load_report_config(config);
      for (const auto& r : runs) dirs.emplace_back(r);
      hbm::io::cmd_report(dirs, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
