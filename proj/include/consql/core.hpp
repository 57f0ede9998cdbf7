#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace consql {

// ---------------------------------------------------------------------------
// Benchmark instances and schemas
// ---------------------------------------------------------------------------

struct TaskInstance {
  std::string id;
  std::string question;
  std::optional<std::string> evidence;
  std::string db_id;
  std::optional<std::string> gold_sql;
  std::optional<std::string> difficulty;

  bool operator==(const TaskInstance&) const = default;
};

struct Column {
  std::string name;
  std::string type;
  bool is_primary_key = false;

  bool operator==(const Column&) const = default;
};

struct Table {
  std::string name;
  std::vector<Column> columns;

  bool operator==(const Table&) const = default;
  const Column* find_column(std::string_view column) const;
};

struct ForeignKey {
  std::string from_table;
  std::string from_column;
  std::string to_table;
  std::string to_column;

  bool operator==(const ForeignKey&) const = default;
};

struct DatabaseSchema {
  std::string db_id;
  std::vector<Table> tables;
  std::vector<ForeignKey> foreign_keys;

  bool operator==(const DatabaseSchema&) const = default;

  /// Table lookup follows SQLite identifier rules (ASCII case-insensitive).
  const Table* find_table(std::string_view table) const;

  /// Throws SchemaError on duplicate table names or dangling foreign keys.
  void validate() const;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool iequals(std::string_view a, std::string_view b);
std::string ascii_lower(std::string_view s);

// ---------------------------------------------------------------------------
// SQL text
// ---------------------------------------------------------------------------

struct NormalizedSql {
  std::string text;
  /// Set when a quote never closed; text then only has whitespace collapsed.
  bool unterminated_string = false;
};

/// Lexical normalization used for consensus equality. Keywords outside quoted
/// regions are lowercased, whitespace runs collapse to one space, line
/// comments and trailing semicolons are dropped. Quoted text is kept
/// byte-for-byte. Idempotent.
NormalizedSql normalize_sql(std::string_view raw);

/// True for SQLite keywords and the common function names (ASCII case-insensitive).
bool is_sql_keyword(std::string_view word);

/// Identifier as SQL text: bare when it is a plain non-keyword word,
/// double-quoted otherwise.
std::string quote_identifier(std::string_view name);

class SqlQuery {
 public:
  SqlQuery() = default;
  explicit SqlQuery(std::string raw);

  const std::string& raw() const { return raw_; }
  const std::string& normalized() const { return normalized_; }
  bool empty() const { return raw_.empty(); }

  /// Consensus equality: normalized forms compare equal.
  bool same_as(const SqlQuery& other) const { return normalized_ == other.normalized_; }

  bool operator==(const SqlQuery& other) const { return raw_ == other.raw_; }

 private:
  std::string raw_;
  std::string normalized_;
};

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

struct Blob {
  std::vector<std::uint8_t> bytes;
  bool operator==(const Blob&) const = default;
};

/// One of SQLite's five storage classes.
using Cell = std::variant<std::monostate, std::int64_t, double, std::string, Blob>;

inline bool is_null(const Cell& c) { return std::holds_alternative<std::monostate>(c); }
inline bool is_numeric(const Cell& c) {
  return std::holds_alternative<std::int64_t>(c) || std::holds_alternative<double>(c);
}
double as_double(const Cell& c);

/// Shortest round-trip text for a real, always containing '.', 'e', "inf" or "nan".
std::string format_real(double v);
std::string to_hex(const std::vector<std::uint8_t>& bytes);

/// Text form used in prompts and reports: NULL, 42, 1.5, text, X'0A0B'.
std::string cell_to_text(const Cell& c);

using Row = std::vector<Cell>;

class ResultTable {
 public:
  ResultTable() = default;
  /// Throws std::invalid_argument if any row width differs from the header.
  ResultTable(std::vector<std::string> columns, std::vector<Row> rows, bool truncated = false,
              std::optional<std::size_t> total_rows = std::nullopt);

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<Row>& rows() const { return rows_; }
  bool truncated() const { return truncated_; }
  /// Rows the query produced, including those dropped by a row cap.
  std::size_t total_rows() const { return total_rows_; }
  std::size_t row_count() const { return rows_.size(); }
  std::size_t column_count() const { return columns_.size(); }

  bool operator==(const ResultTable&) const = default;

 private:
  std::vector<std::string> columns_;
  std::vector<Row> rows_;
  bool truncated_ = false;
  std::size_t total_rows_ = 0;
};

// ---------------------------------------------------------------------------
// Dialogue
// ---------------------------------------------------------------------------

enum class Role { system, user, assistant };

struct Author {
  enum class Kind { writer, reviewer, environment };
  Kind kind = Kind::writer;
  int reviewer_index = -1;

  static Author writer() { return {Kind::writer, -1}; }
  static Author reviewer(int i) { return {Kind::reviewer, i}; }
  static Author environment() { return {Kind::environment, -1}; }
  bool operator==(const Author&) const = default;
};

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);
std::string author_to_string(const Author& a);
Author author_from_string(std::string_view s);

/// ceil(byte_length / 4).
std::size_t estimate_tokens(std::string_view text);

/// Byte range of a message that truncation may cut from its tail.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

class AgentMessage {
 public:
  AgentMessage(Role role, Author author, std::string content,
               std::optional<Span> truncatable = std::nullopt);

  Role role() const { return role_; }
  const Author& author() const { return author_; }
  const std::string& content() const { return content_; }
  std::size_t token_estimate() const { return token_estimate_; }
  const std::optional<Span>& truncatable() const { return truncatable_; }

  /// Cuts `bytes` from the end of the truncatable span (clamped, UTF-8 safe).
  AgentMessage with_span_trimmed(std::size_t bytes) const;
  /// Content with the truncatable span removed entirely.
  std::string content_without_span() const;

  bool operator==(const AgentMessage&) const = default;

 private:
  Role role_;
  Author author_;
  std::string content_;
  std::optional<Span> truncatable_;
  std::size_t token_estimate_;
};

class DialogueHistory {
 public:
  explicit DialogueHistory(std::size_t budget = 0) : budget_(budget) {}
  DialogueHistory(std::vector<AgentMessage> messages, std::size_t budget)
      : messages_(std::move(messages)), budget_(budget) {}

  void append(AgentMessage m) { messages_.push_back(std::move(m)); }

  const std::vector<AgentMessage>& messages() const { return messages_; }
  std::vector<AgentMessage>& mutable_messages() { return messages_; }
  std::size_t budget() const { return budget_; }
  std::size_t size() const { return messages_.size(); }
  bool empty() const { return messages_.empty(); }
  std::size_t token_sum() const;

  /// Index of the first user message, if any.
  std::optional<std::size_t> first_user_index() const;

  bool operator==(const DialogueHistory&) const = default;

 private:
  std::vector<AgentMessage> messages_;
  std::size_t budget_;
};

// ---------------------------------------------------------------------------
// Run configuration and records
// ---------------------------------------------------------------------------

struct ReviewerProfile {
  std::string handle;
  std::string profession;
  bool operator==(const ReviewerProfile&) const = default;
};

enum class WriterMode { cot, pot };
std::string_view to_string(WriterMode m);
WriterMode writer_mode_from_string(std::string_view s);

struct RunConfig {
  int max_review_turns = 3;
  int max_debug_turns = 3;
  int n_reviewers = 3;
  int k_shots = 5;
  WriterMode mode = WriterMode::pot;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string model_name = "gpt-4";
  std::size_t history_budget = 16000;
  std::size_t render_row_cap = 50;
  std::size_t render_cell_chars = 80;
  int sql_timeout_ms = 30000;

  /// Throws std::invalid_argument on negative counts.
  void validate() const;
};

enum class Termination { consensus, review_cap, debug_exhausted, client_error };
enum class Outcome { correct, incorrect, nonexecutable };

std::string_view to_string(Termination t);
Termination termination_from_string(std::string_view s);
std::string_view to_string(Outcome o);
Outcome outcome_from_string(std::string_view s);

/// One entry per step the loop took, in order. Used for audit and for
/// checking transcripts against the expected control flow.
struct LoopEvent {
  enum class Kind {
    writer_draft,     // initial SQL from the writer
    exec_ok,          // SQL executed
    exec_error,       // error appended to history
    writer_debug,     // corrected SQL appended to history
    invitation,       // reviewer panel generated
    reviews,          // merged reviewer comments appended to history
    writer_revision,  // revised SQL appended to history
    consensus,        // revised SQL equals pre-review SQL
    client_error,
  };
  Kind kind;
  std::string detail;
  bool operator==(const LoopEvent&) const = default;
};
std::string_view to_string(LoopEvent::Kind k);
LoopEvent::Kind loop_event_kind_from_string(std::string_view s);

struct PotAudit {
  std::string program;      // pretty-printed DSL
  std::string lowered_sql;  // empty when lowering failed
  std::string error;        // parse/lowering failure, if any
  bool used_as_draft = false;
  bool operator==(const PotAudit&) const = default;
};

struct RunRecord {
  std::string instance_id;
  std::string db_id;
  DialogueHistory transcript;
  std::vector<LoopEvent> events;
  std::vector<ReviewerProfile> panel;
  int debug_turns_used = 0;
  int review_turns_used = 0;
  int llm_calls = 0;
  SqlQuery final_sql;
  Termination termination = Termination::consensus;
  std::optional<Outcome> outcome;
  std::optional<std::string> error_label;
  std::string error_message;
  std::vector<PotAudit> pot_audit;

  bool operator==(const RunRecord&) const = default;
};

}  // namespace consql
