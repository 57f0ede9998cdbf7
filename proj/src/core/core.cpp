#include "consql/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

namespace consql {

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto x = static_cast<unsigned char>(a[i]);
    auto y = static_cast<unsigned char>(b[i]);
    if (std::tolower(x) != std::tolower(y)) return false;
  }
  return true;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

const Column* Table::find_column(std::string_view column) const {
  for (const auto& c : columns) {
    if (iequals(c.name, column)) return &c;
  }
  return nullptr;
}

const Table* DatabaseSchema::find_table(std::string_view table) const {
  for (const auto& t : tables) {
    if (iequals(t.name, table)) return &t;
  }
  return nullptr;
}

void DatabaseSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& t : tables) {
    if (!seen.insert(ascii_lower(t.name)).second) {
      throw SchemaError(db_id + ": duplicate table name '" + t.name + "'");
    }
  }
  auto check = [&](const std::string& table, const std::string& column) {
    const Table* t = find_table(table);
    if (t == nullptr || t->find_column(column) == nullptr) {
      throw SchemaError(db_id + ": foreign key endpoint " + table + "." + column +
                        " does not name an existing column");
    }
  };
  for (const auto& fk : foreign_keys) {
    check(fk.from_table, fk.from_column);
    check(fk.to_table, fk.to_column);
  }
}

// ---------------------------------------------------------------------------

double as_double(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&c)) return *d;
  throw std::invalid_argument("cell is not numeric");
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

std::string to_hex(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

std::string cell_to_text(const Cell& c) {
  struct Visitor {
    std::string operator()(std::monostate) const { return "NULL"; }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_real(v); }
    std::string operator()(const std::string& v) const { return v; }
    std::string operator()(const Blob& v) const { return "X'" + to_hex(v.bytes) + "'"; }
  };
  return std::visit(Visitor{}, c);
}

ResultTable::ResultTable(std::vector<std::string> columns, std::vector<Row> rows, bool truncated,
                         std::optional<std::size_t> total_rows)
    : columns_(std::move(columns)), rows_(std::move(rows)), truncated_(truncated) {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].size() != columns_.size()) {
      throw std::invalid_argument("row " + std::to_string(i) + " has " +
                                  std::to_string(rows_[i].size()) + " cells, expected " +
                                  std::to_string(columns_.size()));
    }
  }
  total_rows_ = std::max(total_rows.value_or(rows_.size()), rows_.size());
  if (!truncated_ && total_rows_ != rows_.size()) {
    throw std::invalid_argument("total row count differs from row count on an untruncated table");
  }
}

// ---------------------------------------------------------------------------

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw std::invalid_argument("unknown role: " + std::string(s));
}

std::string author_to_string(const Author& a) {
  switch (a.kind) {
    case Author::Kind::writer: return "writer";
    case Author::Kind::environment: return "environment";
    case Author::Kind::reviewer: return "reviewer(" + std::to_string(a.reviewer_index) + ")";
  }
  return "writer";
}

Author author_from_string(std::string_view s) {
  if (s == "writer") return Author::writer();
  if (s == "environment") return Author::environment();
  if (s.starts_with("reviewer(") && s.ends_with(")")) {
    auto digits = s.substr(9, s.size() - 10);
    int index = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
    if (ec == std::errc{} && ptr == digits.data() + digits.size()) return Author::reviewer(index);
  }
  throw std::invalid_argument("unknown author: " + std::string(s));
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

AgentMessage::AgentMessage(Role role, Author author, std::string content,
                           std::optional<Span> truncatable)
    : role_(role),
      author_(author),
      content_(std::move(content)),
      truncatable_(truncatable),
      token_estimate_(estimate_tokens(content_)) {
  if (truncatable_ && (truncatable_->begin > truncatable_->end || truncatable_->end > content_.size())) {
    throw std::invalid_argument("truncatable span outside message content");
  }
}

AgentMessage AgentMessage::with_span_trimmed(std::size_t bytes) const {
  if (!truncatable_) return *this;
  std::size_t cut = std::min(bytes, truncatable_->size());
  std::size_t new_end = truncatable_->end - cut;
  // Do not split a UTF-8 sequence.
  while (new_end > truncatable_->begin && new_end < content_.size() &&
         (static_cast<unsigned char>(content_[new_end]) & 0xC0) == 0x80) {
    --new_end;
  }
  std::string content = content_.substr(0, new_end) + content_.substr(truncatable_->end);
  return AgentMessage(role_, author_, std::move(content), Span{truncatable_->begin, new_end});
}

std::string AgentMessage::content_without_span() const {
  if (!truncatable_) return content_;
  return content_.substr(0, truncatable_->begin) + content_.substr(truncatable_->end);
}

std::size_t DialogueHistory::token_sum() const {
  return std::accumulate(messages_.begin(), messages_.end(), std::size_t{0},
                         [](std::size_t acc, const AgentMessage& m) { return acc + m.token_estimate(); });
}

std::optional<std::size_t> DialogueHistory::first_user_index() const {
  for (std::size_t i = 0; i < messages_.size(); ++i) {
    if (messages_[i].role() == Role::user) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::string_view to_string(WriterMode m) { return m == WriterMode::cot ? "cot" : "pot"; }

WriterMode writer_mode_from_string(std::string_view s) {
  if (iequals(s, "cot")) return WriterMode::cot;
  if (iequals(s, "pot")) return WriterMode::pot;
  throw std::invalid_argument("mode must be cot or pot, got '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  auto nonneg = [](int v, const char* name) {
    if (v < 0) throw std::invalid_argument(std::string(name) + " must be >= 0");
  };
  nonneg(max_review_turns, "max_review_turns");
  nonneg(max_debug_turns, "max_debug_turns");
  nonneg(n_reviewers, "n_reviewers");
  nonneg(k_shots, "k_shots");
  nonneg(max_output_tokens, "max_output_tokens");
  nonneg(sql_timeout_ms, "sql_timeout_ms");
  if (max_review_turns > 0 && n_reviewers < 1) {
    throw std::invalid_argument("n_reviewers must be >= 1 when review turns are enabled");
  }
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::consensus: return "consensus";
    case Termination::review_cap: return "review_cap";
    case Termination::debug_exhausted: return "debug_exhausted";
    case Termination::client_error: return "client_error";
  }
  return "consensus";
}

Termination termination_from_string(std::string_view s) {
  for (auto t : {Termination::consensus, Termination::review_cap, Termination::debug_exhausted,
                 Termination::client_error}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown termination: " + std::string(s));
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::correct: return "correct";
    case Outcome::incorrect: return "incorrect";
    case Outcome::nonexecutable: return "nonexecutable";
  }
  return "incorrect";
}

Outcome outcome_from_string(std::string_view s) {
  for (auto o : {Outcome::correct, Outcome::incorrect, Outcome::nonexecutable}) {
    if (to_string(o) == s) return o;
  }
  throw std::invalid_argument("unknown outcome: " + std::string(s));
}

namespace {
constexpr std::pair<LoopEvent::Kind, std::string_view> kEventNames[] = {
    {LoopEvent::Kind::writer_draft, "writer_draft"},
    {LoopEvent::Kind::exec_ok, "exec_ok"},
    {LoopEvent::Kind::exec_error, "exec_error"},
    {LoopEvent::Kind::writer_debug, "writer_debug"},
    {LoopEvent::Kind::invitation, "invitation"},
    {LoopEvent::Kind::reviews, "reviews"},
    {LoopEvent::Kind::writer_revision, "writer_revision"},
    {LoopEvent::Kind::consensus, "consensus"},
    {LoopEvent::Kind::client_error, "client_error"},
};
}  // namespace

std::string_view to_string(LoopEvent::Kind k) {
  for (const auto& [kind, name] : kEventNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

LoopEvent::Kind loop_event_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kEventNames) {
    if (name == s) return kind;
  }
  throw std::invalid_argument("unknown loop event: " + std::string(s));
}

}  // namespace consql
