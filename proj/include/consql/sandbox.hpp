#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include "consql/core.hpp"

struct sqlite3;

namespace consql::sandbox {

class CatalogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// db_id -> database file. Shared read-only between workers; connections
/// live in each worker's Sandbox.
class DatabaseCatalog {
 public:
  /// Throws CatalogError if the path does not exist.
  void add(std::string db_id, std::filesystem::path path);
  bool contains(std::string_view db_id) const;
  /// Throws CatalogError for an unknown id.
  const std::filesystem::path& path(std::string_view db_id) const;
  std::vector<std::string> ids() const;
  std::size_t size() const { return paths_.size(); }

 private:
  std::map<std::string, std::filesystem::path, std::less<>> paths_;
};

enum class ErrorKind { syntax, missing_object, type, timeout, other };
std::string_view to_string(ErrorKind k);

struct ExecError {
  ErrorKind kind = ErrorKind::other;
  std::string message;  // engine text, verbatim
  bool operator==(const ExecError&) const = default;
};

/// Exactly one of ResultTable or ExecError.
class ExecutionOutcome {
 public:
  ExecutionOutcome(ResultTable t) : value_(std::move(t)) {}  // NOLINT(implicit)
  ExecutionOutcome(ExecError e) : value_(std::move(e)) {}    // NOLINT(implicit)

  bool ok() const { return std::holds_alternative<ResultTable>(value_); }
  const ResultTable& table() const { return std::get<ResultTable>(value_); }
  const ExecError& error() const { return std::get<ExecError>(value_); }

 private:
  std::variant<ResultTable, ExecError> value_;
};

struct ExecOptions {
  std::chrono::milliseconds timeout{30000};
  /// Rows kept in the table; further rows are counted but dropped.
  std::optional<std::size_t> row_cap;
};

/// Classifies an SQLite error message.
ErrorKind classify_error(std::string_view message);

/// Per-worker executor holding one read-only connection per database.
/// Not thread-safe; create one per thread.
class Sandbox {
 public:
  explicit Sandbox(std::shared_ptr<const DatabaseCatalog> catalog);
  ~Sandbox();
  Sandbox(const Sandbox&) = delete;
  Sandbox& operator=(const Sandbox&) = delete;

  /// Never throws for SQL failures; an unknown db_id throws CatalogError.
  ExecutionOutcome execute(std::string_view db_id, const SqlQuery& sql, const ExecOptions& options);
  ExecutionOutcome execute(std::string_view db_id, std::string_view sql, const ExecOptions& options);

  const DatabaseCatalog& catalog() const { return *catalog_; }

 private:
  sqlite3* connection(std::string_view db_id);

  std::shared_ptr<const DatabaseCatalog> catalog_;
  std::map<std::string, sqlite3*, std::less<>> connections_;
};

/// Runs SQL on a database file opened read-only, without a catalog.
ExecutionOutcome execute_file(const std::filesystem::path& db_path, std::string_view sql,
                              const ExecOptions& options);

/// Reads the schema of a database file (tables in sqlite_master order,
/// declared types, primary and foreign keys).
DatabaseSchema read_schema(const std::filesystem::path& db_path, std::string db_id);

/// psql-style grid. Long cells are cut to `max_cell_chars` characters with
/// "…"; every line of the grid has the same display width.
std::string render_table(const ResultTable& table, std::size_t max_rows, std::size_t max_cell_chars);

}  // namespace consql::sandbox
