#include <CLI11.hpp>

#include <algorithm>
#include <iostream>

#include "consql/cli.hpp"
#include "consql/util.hpp"

namespace consql::cli {

namespace {

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// Flags for every setting, stored as text and applied after the config file.
struct SettingFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "flat key = value settings file (flags win)");
    for (const auto& key : setting_keys()) options[key] = app.add_option("--" + dashed(key), values[key]);
  }

  CliConfig build() const {
    CliConfig c;
    if (!config_file.empty()) load_config_file(c, config_file);
    for (const auto& key : setting_keys()) {
      if (options.at(key)->count() > 0) apply_setting(c, key, values.at(key));
    }
    return c;
  }
};

}  // namespace

int run_main(int argc, const char* const* argv) {
  CLI::App app("consql: writer/reviewer text-to-SQL runs and evaluation");
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "only warnings and errors on stderr");

  SettingFlags run_flags, sweep_flags;
  auto* run = app.add_subcommand("run", "run a benchmark and score it");
  run_flags.attach(*run);

  auto* sweep = app.add_subcommand("sweep", "one run per value of a setting");
  sweep_flags.attach(*sweep);
  std::string axis;
  std::vector<std::string> values;
  sweep->add_option("--axis", axis, "k_shots, n_reviewers or mode")->required();
  sweep->add_option("--values", values, "values to try")->delimiter(',');

  EvalOptions eval_opts;
  std::string eval_format = "spider", eval_split = "dev", labels, compare, eval_out;
  auto* eval = app.add_subcommand("eval", "score a records file");
  eval->add_option("--records", eval_opts.records, "records.jsonl from a run")->required();
  eval->add_option("--manifest", eval_opts.manifest, "manifest file or benchmark directory")->required();
  eval->add_option("--format", eval_format);
  eval->add_option("--split", eval_split);
  eval->add_option("--labels", labels, "JSON map of instance id to error label");
  eval->add_option("--compare", compare, "second records file for the fold-level U test");
  eval->add_option("--folds", eval_opts.folds);
  eval->add_option("--out-dir", eval_out);
  eval->add_option("--workers", eval_opts.workers);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  util::set_quiet(quiet);

  try {
    if (*run) {
      auto result = cmd_run(run_flags.build());
      std::cout << "accuracy " << evaluator::format_percent(100.0 * result.summary.accuracy) << "% over "
                << result.summary.scored << " instances\n";
      return result.summary.client_errors > 0 ? 2 : 0;
    }
    if (*sweep) {
      auto rows = cmd_sweep(sweep_flags.build(), sweep_axis_from_string(axis), values);
      std::cout << sweep_table(sweep_axis_from_string(axis), rows);
      for (const auto& r : rows) {
        if (r.summary.client_errors > 0) return 2;
      }
      return 0;
    }
    eval_opts.format = datasets::format_from_string(eval_format);
    eval_opts.split = datasets::split_from_string(eval_split);
    if (!labels.empty()) eval_opts.labels = labels;
    if (!compare.empty()) eval_opts.compare = compare;
    if (!eval_out.empty()) eval_opts.out_dir = eval_out;
    std::cout << cmd_eval(eval_opts).report;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace consql::cli
