#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "consql/core.hpp"
#include "consql/sandbox.hpp"

namespace consql::datasets {

enum class Split { dev, test, train };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

/// spider: "query" holds the gold SQL. bird: "SQL", plus "evidence".
enum class Format { spider, bird };
std::string_view to_string(Format f);
Format format_from_string(std::string_view s);

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaQuestionMismatch : public std::runtime_error {
 public:
  SchemaQuestionMismatch(std::string db_id, const std::string& why)
      : std::runtime_error("database " + db_id + ": " + why), db_id_(std::move(db_id)) {}
  const std::string& db_id() const { return db_id_; }

 private:
  std::string db_id_;
};

class MalformedRecord : public std::runtime_error {
 public:
  MalformedRecord(std::size_t index, const std::string& reason)
      : std::runtime_error("record " + std::to_string(index) + ": " + reason), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class NTooLarge : public std::invalid_argument {
 public:
  NTooLarge(std::size_t n, std::size_t count)
      : std::invalid_argument("cannot sample " + std::to_string(n) + " of " + std::to_string(count) + " instances") {}
};

struct BenchmarkManifest {
  std::string name;
  std::filesystem::path questions;
  std::filesystem::path tables;
  std::filesystem::path database_root;  // holds <db_id>/<db_id>.sqlite
  Split split = Split::dev;
  Format format = Format::spider;

  /// Throws ManifestError when a path is missing.
  void validate() const;

  /// Standard distribution layouts under `root`:
  ///   spider dev   dev.json, tables.json, database/
  ///   spider test  test.json, test_tables.json, test_database/
  ///   spider train train_spider.json, tables.json, database/
  ///   bird <split> <split>.json, <split>_tables.json, <split>_databases/
  static BenchmarkManifest layout(Format format, const std::filesystem::path& root, Split split);
};

/// A benchmark directory (standard layout for `format`/`split`) or a JSON
/// manifest file with "questions", "tables", "database_root" and optional
/// "name", "format", "split"; relative paths resolve against the file's
/// directory. Values in the file win over the arguments. Throws
/// ManifestError naming the path when it does not exist or is malformed.
BenchmarkManifest load_manifest(const std::filesystem::path& path, Format format = Format::spider,
                                Split split = Split::dev);

struct Benchmark {
  std::vector<TaskInstance> instances;
  std::vector<DatabaseSchema> schemas;
  std::shared_ptr<sandbox::DatabaseCatalog> catalog;

  const DatabaseSchema* schema(std::string_view db_id) const;
};

/// Instance ids are "<name>-<index>" with the position in the question file.
std::vector<TaskInstance> parse_questions(const nlohmann::json& doc, std::string_view name, Format format);
nlohmann::json questions_to_json(const std::vector<TaskInstance>& instances, Format format);

/// Spider-style tables file: original table/column names, types, primary
/// keys (single or composite) and foreign keys by column index.
std::vector<DatabaseSchema> parse_tables(const nlohmann::json& doc);
nlohmann::json tables_to_json(const std::vector<DatabaseSchema>& schemas);

std::filesystem::path database_file(const std::filesystem::path& root, std::string_view db_id);

/// Parses both files and cross-checks every question's db_id against the
/// schema list and the database directory.
Benchmark load_benchmark(const BenchmarkManifest& manifest);

struct GoldFailure {
  std::string instance_id;
  std::string message;
};

/// Runs every gold query and logs a warning per failure.
std::vector<GoldFailure> check_gold(const Benchmark& benchmark,
                                    std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

/// 64-bit LCG: state = state * 6364136223846793005 + 1442695040888963407,
/// output the high 32 bits of the new state. The seed is the initial state.
class Lcg {
 public:
  static constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;
  static constexpr std::uint64_t kIncrement = 1442695040888963407ULL;

  explicit Lcg(std::uint64_t seed) : state_(seed) {}
  std::uint32_t next() {
    state_ = state_ * kMultiplier + kIncrement;
    return static_cast<std::uint32_t>(state_ >> 32);
  }

 private:
  std::uint64_t state_;
};

/// First n slots of a forward Fisher-Yates shuffle driven by Lcg(seed):
/// for i in [0, n): swap(v[i], v[i + next() % (count - i)]).
std::vector<TaskInstance> subsample(const std::vector<TaskInstance>& instances, std::size_t n, std::uint64_t seed);

}  // namespace consql::datasets
