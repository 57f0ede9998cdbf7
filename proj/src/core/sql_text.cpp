#include "consql/core.hpp"

#include <algorithm>
#include <iterator>
#include <cctype>

namespace consql {
namespace {

// SQLite's keyword list plus the common function names models tend to
// capitalize. Anything else outside quotes is left untouched.
constexpr std::string_view kKeywords[] = {
    "abort",      "action",     "add",          "after",       "all",         "alter",
    "always",     "analyze",    "and",          "as",          "asc",         "attach",
    "autoincrement", "avg",     "before",       "begin",       "between",     "by",
    "cascade",    "case",       "cast",         "check",       "coalesce",    "collate",
    "column",     "commit",     "conflict",     "constraint",  "count",       "create",
    "cross",      "current",    "current_date", "current_time", "current_timestamp", "database",
    "default",    "deferrable", "deferred",     "delete",      "desc",        "detach",
    "distinct",   "do",         "drop",         "each",        "else",        "end",
    "escape",     "except",     "exclude",      "exclusive",   "exists",      "explain",
    "fail",       "filter",     "first",        "following",   "for",         "foreign",
    "from",       "full",       "generated",    "glob",        "group",       "groups",
    "having",     "if",         "ifnull",       "ignore",      "immediate",   "in",
    "index",      "indexed",    "initially",    "inner",       "insert",      "instead",
    "intersect",  "into",       "iif",          "is",          "isnull",      "join",
    "key",        "last",       "left",         "length",      "like",        "limit",
    "lower",      "match",      "materialized", "max",         "min",         "natural",
    "no",         "not",        "nothing",      "notnull",     "null",        "nulls",
    "of",         "offset",     "on",           "or",          "order",       "others",
    "outer",      "over",       "partition",    "plan",        "pragma",      "preceding",
    "primary",    "query",      "raise",        "range",       "recursive",   "references",
    "regexp",     "reindex",    "release",      "rename",      "replace",     "restrict",
    "returning",  "right",      "rollback",     "round",       "row",         "rows",
    "savepoint",  "select",     "set",          "strftime",    "substr",      "sum",
    "table",      "temp",       "temporary",    "then",        "ties",        "to",
    "total",      "transaction", "trigger",     "trim",        "unbounded",   "union",
    "unique",     "update",     "upper",        "using",       "vacuum",      "values",
    "view",       "virtual",    "when",         "where",       "window",      "with",
    "without",    "abs",        "instr",        "julianday",   "date",        "datetime",
    "time",       "nullif",     "typeof",       "integer",     "real",        "text",
};

bool is_keyword(std::string_view lower_word) {
  return std::find(std::begin(kKeywords), std::end(kKeywords), lower_word) != std::end(kKeywords);
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_word_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

// Fallback for input with an unterminated quote. Newlines survive as a single
// "\n" so line comments keep their extent and a second pass sees the same
// token structure (and is flagged again).
std::string collapse_whitespace_only(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  std::size_t i = 0;
  while (i < raw.size()) {
    if (!is_space(raw[i])) {
      out.push_back(raw[i++]);
      continue;
    }
    bool newline = false;
    while (i < raw.size() && is_space(raw[i])) newline |= raw[i++] == '\n';
    out.push_back(newline ? '\n' : ' ');
  }
  auto first = out.find_first_not_of(" \n");
  if (first == std::string::npos) return {};
  auto last = out.find_last_not_of(" \n");
  return out.substr(first, last - first + 1);
}

}  // namespace

NormalizedSql normalize_sql(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  auto emit = [&](std::string_view s) {
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.append(s);
  };

  std::size_t i = 0;
  const std::size_t n = raw.size();
  while (i < n) {
    const char c = raw[i];
    if (is_space(c)) {
      pending_space = true;
      ++i;
    } else if (c == '-' && i + 1 < n && raw[i + 1] == '-') {
      while (i < n && raw[i] != '\n') ++i;
      pending_space = true;
    } else if (c == '\'' || c == '"' || c == '`') {
      // Quoted region; a doubled quote is an escaped quote.
      std::size_t j = i + 1;
      bool closed = false;
      while (j < n) {
        if (raw[j] == c) {
          if (j + 1 < n && raw[j + 1] == c) {
            j += 2;
            continue;
          }
          closed = true;
          break;
        }
        ++j;
      }
      if (!closed) return {collapse_whitespace_only(raw), true};
      emit(raw.substr(i, j + 1 - i));
      i = j + 1;
    } else if (is_word_start(c)) {
      std::size_t j = i;
      while (j < n && is_word_char(raw[j])) ++j;
      std::string word(raw.substr(i, j - i));
      std::string lower = ascii_lower(word);
      emit(is_keyword(lower) ? lower : word);
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < n && (is_word_char(raw[j]) || raw[j] == '.')) ++j;
      emit(raw.substr(i, j - i));
      i = j;
    } else {
      emit(raw.substr(i, 1));
      ++i;
    }
  }

  while (!out.empty() && (out.back() == ';' || out.back() == ' ')) out.pop_back();
  return {std::move(out), false};
}

bool is_sql_keyword(std::string_view word) { return is_keyword(ascii_lower(word)); }

std::string quote_identifier(std::string_view name) {
  bool plain = !name.empty() && is_word_start(name[0]) &&
               std::all_of(name.begin(), name.end(), [](char c) {
                 return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
               }) &&
               !is_sql_keyword(name);
  if (plain) return std::string(name);
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

SqlQuery::SqlQuery(std::string raw) : raw_(std::move(raw)) {
  normalized_ = normalize_sql(raw_).text;
}

}  // namespace consql
