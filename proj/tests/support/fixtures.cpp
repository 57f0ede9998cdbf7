#include "fixtures.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>

#include "consql/sandbox.hpp"

namespace consql::testing {

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  auto base = std::filesystem::temp_directory_path();
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto candidate = base / ("consql-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    if (std::filesystem::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("could not create a temp directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::filesystem::path build_database(const std::filesystem::path& file, std::string_view script) {
  std::filesystem::remove(file);
  sqlite3* db = nullptr;
  if (sqlite3_open(file.c_str(), &db) != SQLITE_OK) {
    std::string msg = sqlite3_errmsg(db);
    sqlite3_close(db);
    throw std::runtime_error("open " + file.string() + ": " + msg);
  }
  char* err = nullptr;
  std::string text(script);
  if (sqlite3_exec(db, text.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    sqlite3_close(db);
    throw std::runtime_error("fixture script: " + msg);
  }
  sqlite3_close(db);
  return file;
}

std::string_view concert_singer_script() {
  return R"sql(
CREATE TABLE stadium (
  Stadium_ID int,
  Location text,
  Name text,
  Capacity int,
  Highest int,
  Lowest int,
  Average int,
  PRIMARY KEY (Stadium_ID)
);
CREATE TABLE singer (
  Singer_ID int,
  Name text,
  Country text,
  Song_Name text,
  Song_release_year text,
  Age int,
  Is_male bool,
  PRIMARY KEY (Singer_ID)
);
CREATE TABLE concert (
  concert_ID int,
  concert_Name text,
  Theme text,
  Stadium_ID text,
  Year text,
  PRIMARY KEY (concert_ID),
  FOREIGN KEY (Stadium_ID) REFERENCES stadium(Stadium_ID)
);
CREATE TABLE singer_in_concert (
  concert_ID int,
  Singer_ID text,
  PRIMARY KEY (concert_ID, Singer_ID),
  FOREIGN KEY (concert_ID) REFERENCES concert(concert_ID),
  FOREIGN KEY (Singer_ID) REFERENCES singer(Singer_ID)
);
INSERT INTO stadium VALUES
  (1, 'Raith Rovers', 'Stark''s Park', 10104, 4812, 1294, 2106),
  (2, 'Ayr United', 'Somerset Park', 11998, 2363, 1057, 1477),
  (3, 'East Fife', 'Bayview Stadium', 2000, 1980, 533, 864),
  (4, 'Queen''s Park', 'Hampden Park', 52500, 1763, 466, 730),
  (5, 'Stirling Albion', 'Forthbank Stadium', 3808, 1125, 404, 642),
  (6, 'Arbroath', 'Gayfield Park', 4125, 921, 411, 638),
  (7, 'Alloa Athletic', 'Recreation Park', 3100, 1057, 331, 637),
  (9, 'Peterhead', 'Balmoor', 4000, 837, 400, 615),
  (10, 'Brechin City', 'Glebe Park', 3960, 780, 315, 552);
INSERT INTO singer VALUES
  (1, 'Joe Sharp', 'Netherlands', 'You', '1992', 52, 'F'),
  (2, 'Timbaland', 'United States', 'Dangerous', '2008', 32, 'T'),
  (3, 'Justin Brown', 'France', 'Hey Oh', '2013', 29, 'T'),
  (4, 'Rose White', 'France', 'Sun', '2003', 41, 'F'),
  (5, 'John Nizinik', 'France', 'Gentleman', '2014', 43, 'T'),
  (6, 'Tribal King', 'France', 'Love', '2016', 25, 'T');
INSERT INTO concert VALUES
  (1, 'Auditions', 'Free choice', '1', '2014'),
  (2, 'Super bootcamp', 'Free choice 2', '2', '2014'),
  (3, 'Home Visits', 'Bleeding Love', '2', '2015'),
  (4, 'Week 1', 'Wide Awake', '10', '2014'),
  (5, 'Week 1', 'Happy Tonight', '9', '2015'),
  (6, 'Week 2', 'Party All Night', '7', '2015');
INSERT INTO singer_in_concert VALUES
  (1, '2'), (1, '3'), (1, '5'), (2, '3'), (2, '6'),
  (3, '5'), (4, '4'), (5, '6'), (5, '3'), (6, '2');
)sql";
}

std::filesystem::path make_concert_singer(const std::filesystem::path& dir) {
  return build_database(dir / "concert_singer.sqlite", concert_singer_script());
}


pot::Tables load_tables(const std::filesystem::path& db_file) {
  pot::Tables out;
  DatabaseSchema schema = sandbox::read_schema(db_file, "fixture");
  for (const auto& t : schema.tables) {
    auto r = sandbox::execute_file(db_file, "SELECT * FROM " + quote_identifier(t.name), {});
    if (!r.ok()) throw std::runtime_error("load " + t.name + ": " + r.error().message);
    out.emplace(t.name, r.table());
  }
  return out;
}

namespace {

bool cell_equal(const Cell& a, const Cell& b, double tol) {
  if (is_numeric(a) && is_numeric(b)) {
    if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b)) {
      return std::get<std::int64_t>(a) == std::get<std::int64_t>(b);
    }
    double x = as_double(a);
    double y = as_double(b);
    return std::fabs(x - y) <= tol * std::max({1.0, std::fabs(x), std::fabs(y)});
  }
  return a == b;
}

bool row_equal(const Row& a, const Row& b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!cell_equal(a[i], b[i], tol)) return false;
  }
  return true;
}

}  // namespace

bool same_rows(const ResultTable& a, const ResultTable& b, bool ordered, double tolerance) {
  if (a.column_count() != b.column_count() || a.row_count() != b.row_count()) return false;
  if (ordered) {
    for (std::size_t i = 0; i < a.row_count(); ++i) {
      if (!row_equal(a.rows()[i], b.rows()[i], tolerance)) return false;
    }
    return true;
  }
  // Greedy matching is exact here: tolerance only absorbs rounding noise.
  std::vector<bool> used(b.row_count(), false);
  for (const auto& ra : a.rows()) {
    bool found = false;
    for (std::size_t j = 0; j < b.row_count() && !found; ++j) {
      if (!used[j] && row_equal(ra, b.rows()[j], tolerance)) used[j] = found = true;
    }
    if (!found) return false;
  }
  return true;
}

std::string dump(const ResultTable& t) { return sandbox::render_table(t, 50, 40); }

}  // namespace consql::testing
