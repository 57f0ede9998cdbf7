#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "consql/core.hpp"
#include "consql/pot.hpp"

namespace consql::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Creates (or replaces) a SQLite file and runs `script` in it.
std::filesystem::path build_database(const std::filesystem::path& file, std::string_view script);

/// DDL and rows of a small concert_singer database.
std::string_view concert_singer_script();

/// Writes concert_singer.sqlite into `dir`.
std::filesystem::path make_concert_singer(const std::filesystem::path& dir);


/// Every table of a SQLite file, read through the sandbox.
pot::Tables load_tables(const std::filesystem::path& db_file);

/// Row multisets equal (or sequences when `ordered`); reals match within
/// `tolerance` relative, ints and reals compare numerically.
bool same_rows(const ResultTable& a, const ResultTable& b, bool ordered, double tolerance = 1e-9);

std::string dump(const ResultTable& t);

}  // namespace consql::testing
