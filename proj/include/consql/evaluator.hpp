#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "consql/core.hpp"
#include "consql/sandbox.hpp"

namespace consql::evaluator {

// ---------------------------------------------------------------------------
// Result comparison

enum class VerdictReason { exact, permuted_columns, order_mismatch, value_mismatch, pred_error, gold_error_exec };
std::string_view to_string(VerdictReason r);

struct ComparisonVerdict {
  bool match = false;
  VerdictReason reason = VerdictReason::value_mismatch;
  /// More than 8 columns: only the given column order was tried.
  bool too_many_columns = false;
  bool operator==(const ComparisonVerdict&) const = default;
};

inline constexpr std::size_t kMaxPermutedColumns = 8;
inline constexpr double kRelativeTolerance = 1e-6;

/// True when the outermost statement has an ORDER BY (outside parentheses,
/// quotes and comments).
bool has_outer_order_by(std::string_view sql);

/// Numeric cells match within kRelativeTolerance, everything else exactly;
/// NULL matches NULL.
bool cells_match(const Cell& a, const Cell& b);

/// Rows as multisets, or as sequences when gold_sql orders its output.
/// Column order may differ (searched up to 8 columns).
ComparisonVerdict compare_results(const ResultTable& gold, const ResultTable& pred, std::string_view gold_sql);

/// Errors short-circuit: a failed gold query gives gold_error_exec, a failed
/// prediction pred_error.
ComparisonVerdict compare_outcomes(const sandbox::ExecutionOutcome& gold, const sandbox::ExecutionOutcome& pred,
                                   std::string_view gold_sql);

// ---------------------------------------------------------------------------
// Scoring

class MissingGold : public std::runtime_error {
 public:
  explicit MissingGold(const std::string& instance) : std::runtime_error("no gold SQL for instance " + instance) {}
};

class MissingData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScoredRecord {
  std::string instance_id;
  ComparisonVerdict verdict;
  Outcome outcome = Outcome::incorrect;
  std::string detail;  // engine error text for failed executions
};

using InstanceIndex = std::map<std::string, TaskInstance, std::less<>>;

InstanceIndex index_instances(const std::vector<TaskInstance>& instances);

/// Executes the instance's gold SQL and the record's final SQL (uncapped).
/// An empty final SQL counts as a failed execution. Throws MissingGold when
/// the instance has no gold SQL.
ScoredRecord score_record(sandbox::Sandbox& box, const RunRecord& record, const TaskInstance& instance,
                          std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

/// Executes gold and predicted SQL for every record (uncapped) over
/// `threads` workers. Results come back in record order. Throws MissingGold
/// when a record's instance is unknown or has no gold SQL.
std::vector<ScoredRecord> score_records(const std::vector<RunRecord>& records, const InstanceIndex& instances,
                                        std::shared_ptr<const sandbox::DatabaseCatalog> catalog,
                                        unsigned threads = 1,
                                        std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

/// Fraction of correct scores. Throws MissingData on an empty list.
double execution_accuracy(const std::vector<ScoredRecord>& scored);

double execution_accuracy(const std::vector<RunRecord>& records, const InstanceIndex& instances,
                          std::shared_ptr<const sandbox::DatabaseCatalog> catalog, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Significance

enum class TestMethod { automatic, exact, normal };

struct MannWhitneyResult {
  double u = 0;  // U of the first sample: pairs a > b, ties counting one half
  double p = 1;  // two-sided
  bool exact = false;
  bool degenerate = false;  // every value identical
};

inline constexpr std::size_t kExactLimit = 12;

/// Two-sided Mann-Whitney U test with midranks. `automatic` enumerates
/// every rank assignment when n1 + n2 <= 12 and otherwise uses the normal
/// approximation with tie-corrected variance and continuity correction.
/// Forcing `exact` is allowed up to 20 observations.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b,
                                 TestMethod method = TestMethod::automatic);

struct FoldReport {
  int fold = 0;
  std::size_t count = 0;
  double accuracy = 0;
};

/// Contiguous folds in record order; sizes differ by at most one, larger
/// folds first. Throws std::invalid_argument when there are fewer outcomes
/// than folds.
std::vector<FoldReport> split_folds(const std::vector<bool>& correct, int folds = 10);

// ---------------------------------------------------------------------------
// Error taxonomy

enum class ErrorLabel {
  GoldError,
  Ambiguity,
  DirtyDatabaseValue,
  Logic,
  Inaccuracy,
  SemanticCorrect,
  InformationRedundancy,
};
inline constexpr ErrorLabel kAllLabels[] = {
    ErrorLabel::GoldError,  ErrorLabel::Ambiguity,       ErrorLabel::DirtyDatabaseValue,   ErrorLabel::Logic,
    ErrorLabel::Inaccuracy, ErrorLabel::SemanticCorrect, ErrorLabel::InformationRedundancy,
};
std::string_view to_string(ErrorLabel l);
/// Throws std::invalid_argument for an unknown name.
ErrorLabel error_label_from_string(std::string_view s);

using LabelMap = std::map<std::string, ErrorLabel, std::less<>>;

/// Annotation file contents: a JSON object of instance id -> label name.
LabelMap parse_labels(const nlohmann::json& doc);

class LabelOnSuccess : public std::runtime_error {
 public:
  explicit LabelOnSuccess(const std::string& instance)
      : std::runtime_error("instance " + instance + " is labeled but was answered correctly") {}
};

struct ErrorReport {
  std::size_t failures = 0;
  /// Label name (or "Unlabeled") -> failing instance ids, in record order.
  std::map<std::string, std::vector<std::string>> by_label;

  std::size_t count(std::string_view label) const;
  /// Percentage of failures, rounded to one decimal.
  double percent(std::string_view label) const;
  std::string to_markdown() const;
  nlohmann::json to_json() const;
};

/// Distribution of labels over failed instances. Throws LabelOnSuccess for a
/// label on a passing instance and std::invalid_argument for a label on an
/// instance that was not scored.
ErrorReport error_report(const std::vector<ScoredRecord>& scored, const LabelMap& labels);

/// "30.5" style formatting shared by the reports.
std::string format_percent(double value);

}  // namespace consql::evaluator
