#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "consql/core.hpp"
#include "consql/datasets.hpp"
#include "consql/evaluator.hpp"

namespace consql::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Backend { remote, mock };

struct CliConfig {
  std::filesystem::path manifest;  // manifest file or benchmark directory
  datasets::Format format = datasets::Format::spider;
  datasets::Split split = datasets::Split::dev;
  RunConfig run;
  Backend backend = Backend::remote;
  std::filesystem::path mock_script;
  std::optional<std::filesystem::path> cache_dir;
  std::filesystem::path out_dir = "consql-out";
  unsigned workers = 1;
  std::optional<std::size_t> subsample;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> shot_pool;  // training benchmark for k-shot examples
  std::string embedder = "trigram";                // or "remote"
  std::string embedding_model = "text-embedding-3-small";
  std::optional<std::filesystem::path> templates_dir;
  std::size_t sample_rows = 0;  // example rows per table in the schema prompt

  /// Throws ConfigError: mock backend without a script, zero workers, no
  /// manifest, unknown embedder, invalid run settings.
  void validate() const;
};

/// Setting names accepted in config files and (with '-' for '_') as flags.
const std::vector<std::string>& setting_keys();

/// Throws ConfigError for an unknown key or an unparsable value.
void apply_setting(CliConfig& config, std::string_view key, std::string_view value);

/// Flat `key = value` lines; '#' starts a comment; values may be quoted.
void load_config_file(CliConfig& config, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Records

std::vector<RunRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<RunRecord>& records);

struct BatchSummary {
  std::string benchmark;
  std::size_t instances = 0;
  std::size_t scored = 0;
  std::size_t correct = 0;
  double accuracy = 0;  // correct / scored
  std::map<std::string, std::size_t> terminations;
  double mean_review_turns = 0;
  double mean_debug_turns = 0;
  long total_llm_calls = 0;
  std::size_t client_errors = 0;

  nlohmann::json to_json() const;
  std::string to_markdown() const;
};

/// Summary over records whose outcome is already set.
BatchSummary summarize(std::string benchmark, const std::vector<RunRecord>& records);

// ---------------------------------------------------------------------------
// Commands

struct RunResult {
  BatchSummary summary;
  std::vector<RunRecord> records;  // benchmark order
};

/// Loads the benchmark, builds the shot pool, runs every instance over the
/// worker pool and scores it. Writes records.jsonl, summary.json and
/// report.md to config.out_dir. Per-instance failures become client_error
/// records; config and IO problems throw.
RunResult cmd_run(const CliConfig& config);

struct EvalOptions {
  std::filesystem::path records;
  std::filesystem::path manifest;
  datasets::Format format = datasets::Format::spider;
  datasets::Split split = datasets::Split::dev;
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> compare;  // second records file for the U test
  int folds = 10;
  std::optional<std::filesystem::path> out_dir;  // default: <records dir>/eval
  unsigned workers = 1;
};

class MismatchedIds : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct EvalResult {
  double accuracy = 0;
  std::vector<evaluator::ScoredRecord> scored;
  std::map<std::string, std::pair<std::size_t, std::size_t>> by_difficulty;  // correct, total
  std::optional<evaluator::ErrorReport> errors;
  std::optional<double> compare_accuracy;
  std::vector<evaluator::FoldReport> folds, compare_folds;
  std::optional<evaluator::MannWhitneyResult> test;
  std::string report;  // markdown
};

/// Re-scores a records file against its benchmark. Throws MismatchedIds
/// when a record names an instance the benchmark does not have.
EvalResult cmd_eval(const EvalOptions& options);

enum class SweepAxis { k_shots, n_reviewers, mode };
SweepAxis sweep_axis_from_string(std::string_view s);
std::string_view to_string(SweepAxis a);

/// "CoT" or "PoT", prefixed with "<n>R-Lp + " when review turns are on.
std::string method_label(const RunConfig& config);

struct SweepRow {
  std::string label;  // CoT / PoT for mode, <n>R-Lp for n_reviewers, <k>-shot for k_shots
  std::string method;
  std::string value;
  BatchSummary summary;
};

/// One cmd_run per value, each into out_dir/<axis>-<value>; writes
/// sweep.md and sweep.json to out_dir. Throws ConfigError on an empty list.
std::vector<SweepRow> cmd_sweep(const CliConfig& config, SweepAxis axis, const std::vector<std::string>& values);
std::string sweep_table(SweepAxis axis, const std::vector<SweepRow>& rows);

/// Command-line entry. Exit codes: 0 done, 1 usage/config/IO error,
/// 2 completed with client_error records.
int run_main(int argc, const char* const* argv);

}  // namespace consql::cli
