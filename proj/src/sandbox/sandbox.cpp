#include "consql/sandbox.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <cstring>

namespace consql::sandbox {
namespace {

using Clock = std::chrono::steady_clock;

struct Deadline {
  Clock::time_point at;
  bool fired = false;
};

int progress_callback(void* arg) {
  auto* d = static_cast<Deadline*>(arg);
  if (Clock::now() >= d->at) {
    d->fired = true;
    return 1;
  }
  return 0;
}

sqlite3* open_readonly(const std::filesystem::path& path) {
  sqlite3* db = nullptr;
  int rc = sqlite3_open_v2(path.c_str(), &db, SQLITE_OPEN_READONLY | SQLITE_OPEN_NOMUTEX, nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = db ? sqlite3_errmsg(db) : sqlite3_errstr(rc);
    sqlite3_close(db);
    throw CatalogError("cannot open " + path.string() + ": " + msg);
  }
  sqlite3_limit(db, SQLITE_LIMIT_ATTACHED, 0);
  sqlite3_exec(db, "PRAGMA query_only = 1", nullptr, nullptr, nullptr);
  return db;
}

bool only_trailing_noise(const char* tail) {
  // Whitespace, semicolons and comments may follow the statement.
  std::string_view t(tail);
  std::size_t i = 0;
  while (i < t.size()) {
    char c = t[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == ';') {
      ++i;
    } else if (t.compare(i, 2, "--") == 0) {
      while (i < t.size() && t[i] != '\n') ++i;
    } else if (t.compare(i, 2, "/*") == 0) {
      auto end = t.find("*/", i + 2);
      if (end == std::string_view::npos) return true;
      i = end + 2;
    } else {
      return false;
    }
  }
  return true;
}

Cell read_cell(sqlite3_stmt* stmt, int col) {
  switch (sqlite3_column_type(stmt, col)) {
    case SQLITE_INTEGER: return static_cast<std::int64_t>(sqlite3_column_int64(stmt, col));
    case SQLITE_FLOAT: return sqlite3_column_double(stmt, col);
    case SQLITE_TEXT: {
      auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt, col));
      return std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt, col)));
    }
    case SQLITE_BLOB: {
      auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt, col));
      Blob b;
      b.bytes.assign(p, p + sqlite3_column_bytes(stmt, col));
      return b;
    }
    default: return std::monostate{};
  }
}

ExecutionOutcome run(sqlite3* db, std::string_view sql, const ExecOptions& options) {
  Deadline deadline{Clock::now() + options.timeout};
  sqlite3_progress_handler(db, 1000, progress_callback, &deadline);
  struct Reset {
    sqlite3* db;
    ~Reset() { sqlite3_progress_handler(db, 0, nullptr, nullptr); }
  } reset{db};

  auto fail = [&](std::string message) -> ExecutionOutcome {
    ErrorKind kind = deadline.fired ? ErrorKind::timeout : classify_error(message);
    return ExecError{kind, std::move(message)};
  };

  sqlite3_stmt* stmt = nullptr;
  const char* tail = nullptr;
  std::string text(sql);
  if (sqlite3_prepare_v2(db, text.c_str(), static_cast<int>(text.size() + 1), &stmt, &tail) != SQLITE_OK) {
    return fail(sqlite3_errmsg(db));
  }
  std::unique_ptr<sqlite3_stmt, int (*)(sqlite3_stmt*)> guard(stmt, sqlite3_finalize);
  if (stmt == nullptr) return ExecError{ErrorKind::syntax, "empty statement"};
  if (tail != nullptr && !only_trailing_noise(tail)) {
    return ExecError{ErrorKind::other, "only one statement may be executed at a time"};
  }
  if (!sqlite3_stmt_readonly(stmt)) {
    return ExecError{ErrorKind::other, "attempt to write a readonly database"};
  }

  const int ncol = sqlite3_column_count(stmt);
  std::vector<std::string> columns;
  for (int c = 0; c < ncol; ++c) {
    const char* name = sqlite3_column_name(stmt, c);
    columns.emplace_back(name ? name : "");
  }
  std::vector<Row> rows;
  std::size_t total = 0;
  while (true) {
    int rc = sqlite3_step(stmt);
    if (rc == SQLITE_DONE) break;
    if (rc != SQLITE_ROW) return fail(sqlite3_errmsg(db));
    ++total;
    if (options.row_cap && rows.size() >= *options.row_cap) continue;
    Row row;
    row.reserve(static_cast<std::size_t>(ncol));
    for (int c = 0; c < ncol; ++c) row.push_back(read_cell(stmt, c));
    rows.push_back(std::move(row));
  }
  bool truncated = total > rows.size();
  return ResultTable(std::move(columns), std::move(rows), truncated, total);
}

std::string pragma_text(sqlite3_stmt* stmt, int col) {
  auto* p = sqlite3_column_text(stmt, col);
  return p ? reinterpret_cast<const char*>(p) : "";
}

}  // namespace

void DatabaseCatalog::add(std::string db_id, std::filesystem::path path) {
  if (!std::filesystem::exists(path)) {
    throw CatalogError("database file for " + db_id + " not found: " + path.string());
  }
  paths_[std::move(db_id)] = std::move(path);
}

bool DatabaseCatalog::contains(std::string_view db_id) const { return paths_.find(db_id) != paths_.end(); }

const std::filesystem::path& DatabaseCatalog::path(std::string_view db_id) const {
  auto it = paths_.find(db_id);
  if (it == paths_.end()) throw CatalogError("unknown database: " + std::string(db_id));
  return it->second;
}

std::vector<std::string> DatabaseCatalog::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : paths_) out.push_back(id);
  return out;
}

std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::syntax: return "syntax";
    case ErrorKind::missing_object: return "missing_object";
    case ErrorKind::type: return "type";
    case ErrorKind::timeout: return "timeout";
    case ErrorKind::other: return "other";
  }
  return "other";
}

ErrorKind classify_error(std::string_view message) {
  auto has = [&](std::string_view s) { return message.find(s) != std::string_view::npos; };
  if (has("syntax error") || has("incomplete input") || has("unrecognized token")) return ErrorKind::syntax;
  if (has("no such table") || has("no such column") || has("no such function")) {
    return ErrorKind::missing_object;
  }
  if (has("mismatch")) return ErrorKind::type;
  if (has("interrupted")) return ErrorKind::timeout;
  return ErrorKind::other;
}

Sandbox::Sandbox(std::shared_ptr<const DatabaseCatalog> catalog) : catalog_(std::move(catalog)) {}

Sandbox::~Sandbox() {
  for (auto& [_, db] : connections_) sqlite3_close(db);
}

sqlite3* Sandbox::connection(std::string_view db_id) {
  if (auto it = connections_.find(db_id); it != connections_.end()) return it->second;
  sqlite3* db = open_readonly(catalog_->path(db_id));
  connections_.emplace(std::string(db_id), db);
  return db;
}

ExecutionOutcome Sandbox::execute(std::string_view db_id, std::string_view sql, const ExecOptions& options) {
  return run(connection(db_id), sql, options);
}

ExecutionOutcome Sandbox::execute(std::string_view db_id, const SqlQuery& sql, const ExecOptions& options) {
  return execute(db_id, std::string_view(sql.raw()), options);
}

ExecutionOutcome execute_file(const std::filesystem::path& db_path, std::string_view sql,
                              const ExecOptions& options) {
  sqlite3* db = open_readonly(db_path);
  std::unique_ptr<sqlite3, int (*)(sqlite3*)> guard(db, sqlite3_close);
  return run(db, sql, options);
}

DatabaseSchema read_schema(const std::filesystem::path& db_path, std::string db_id) {
  sqlite3* db = open_readonly(db_path);
  std::unique_ptr<sqlite3, int (*)(sqlite3*)> guard(db, sqlite3_close);

  auto query = [&](const std::string& sql, auto on_row) {
    sqlite3_stmt* stmt = nullptr;
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
      throw CatalogError("cannot read schema of " + db_path.string() + ": " + sqlite3_errmsg(db));
    }
    std::unique_ptr<sqlite3_stmt, int (*)(sqlite3_stmt*)> g(stmt, sqlite3_finalize);
    while (sqlite3_step(stmt) == SQLITE_ROW) on_row(stmt);
  };
  auto quoted = [](const std::string& s) {
    std::string out = "'";
    for (char c : s) {
      if (c == '\'') out.push_back('\'');
      out.push_back(c);
    }
    return out + "'";
  };

  DatabaseSchema schema;
  schema.db_id = std::move(db_id);
  query("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
        [&](sqlite3_stmt* s) { schema.tables.push_back({pragma_text(s, 0), {}}); });

  struct RawFk {
    std::string from_table, from_column, to_table, to_column;
  };
  std::vector<RawFk> raw_fks;
  for (auto& table : schema.tables) {
    query("PRAGMA table_info(" + quoted(table.name) + ")", [&](sqlite3_stmt* s) {
      table.columns.push_back({pragma_text(s, 1), pragma_text(s, 2), sqlite3_column_int(s, 5) > 0});
    });
    query("PRAGMA foreign_key_list(" + quoted(table.name) + ")", [&](sqlite3_stmt* s) {
      raw_fks.push_back({table.name, pragma_text(s, 3), pragma_text(s, 2), pragma_text(s, 4)});
    });
  }
  for (auto& fk : raw_fks) {
    const Table* target = schema.find_table(fk.to_table);
    const Table* source = schema.find_table(fk.from_table);
    if (target == nullptr || source == nullptr) continue;
    if (fk.to_column.empty()) {
      auto pk = std::find_if(target->columns.begin(), target->columns.end(),
                             [](const Column& c) { return c.is_primary_key; });
      if (pk == target->columns.end()) continue;
      fk.to_column = pk->name;
    }
    const Column* from = source->find_column(fk.from_column);
    const Column* to = target->find_column(fk.to_column);
    if (from == nullptr || to == nullptr) continue;
    schema.foreign_keys.push_back({source->name, from->name, target->name, to->name});
  }
  return schema;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t display_width(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string cell_display(const Cell& c, std::size_t max_chars) {
  std::string raw = cell_to_text(c);
  std::string text;
  for (char ch : raw) {
    if (ch == '\n') {
      text += "\\n";
    } else if (ch == '\r') {
      text += "\\r";
    } else if (ch == '\t') {
      text += "\\t";
    } else {
      text.push_back(ch);
    }
  }
  if (max_chars == 0 || display_width(text) <= max_chars) return text;
  // Keep max_chars - 1 code points, then the ellipsis.
  std::size_t kept = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
      if (kept == max_chars - 1) break;
      ++kept;
    }
    ++i;
  }
  return text.substr(0, i) + "\xE2\x80\xA6";
}

void pad_to(std::string& out, std::string_view text, std::size_t width) {
  out.append(text);
  out.append(width - display_width(text), ' ');
}

}  // namespace

std::string render_table(const ResultTable& table, std::size_t max_rows, std::size_t max_cell_chars) {
  const std::size_t ncol = table.column_count();
  const std::size_t shown = std::min(max_rows, table.row_count());

  std::vector<std::string> header;
  std::vector<std::vector<std::string>> cells(shown);
  std::vector<std::size_t> width(ncol, 0);
  for (std::size_t c = 0; c < ncol; ++c) {
    std::string name = cell_display(Cell(table.columns()[c]), max_cell_chars);
    width[c] = display_width(name);
    header.push_back(std::move(name));
  }
  for (std::size_t r = 0; r < shown; ++r) {
    for (std::size_t c = 0; c < ncol; ++c) {
      cells[r].push_back(cell_display(table.rows()[r][c], max_cell_chars));
      width[c] = std::max(width[c], display_width(cells[r].back()));
    }
  }

  std::string out;
  auto line = [&](const std::vector<std::string>& values) {
    for (std::size_t c = 0; c < ncol; ++c) {
      if (c > 0) out += "|";
      out += " ";
      pad_to(out, values[c], width[c]);
      out += " ";
    }
    out += "\n";
  };
  if (ncol > 0) {
    line(header);
    for (std::size_t c = 0; c < ncol; ++c) {
      if (c > 0) out += "+";
      out.append(width[c] + 2, '-');
    }
    out += "\n";
    for (const auto& row : cells) line(row);
  }

  const std::size_t total = std::max(table.total_rows(), table.row_count());
  if (shown < total) {
    out += "(showing " + std::to_string(shown) + " of " + std::to_string(total) + " rows)";
  } else if (total == 1) {
    out += "(1 row)";
  } else {
    out += "(" + std::to_string(total) + " rows)";
  }
  return out;
}

}  // namespace consql::sandbox
