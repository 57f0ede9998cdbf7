#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "consql/core.hpp"

namespace consql::pot {

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

/// None, int, float or str.
using Literal = std::variant<std::monostate, std::int64_t, double, std::string>;

struct Expr;
struct Pred;
using ExprPtr = std::shared_ptr<const Expr>;
using PredPtr = std::shared_ptr<const Pred>;

struct TableRef {
  std::string table;
  bool operator==(const TableRef&) const = default;
};

struct StepRef {
  std::string name;
  bool operator==(const StepRef&) const = default;
};

struct ColumnSelect {
  ExprPtr src;
  std::vector<std::string> columns;
  bool series = false;  // df['c'] rather than df[['c']]
};

struct Filter {
  ExprPtr src;
  PredPtr pred;
};

enum class JoinHow { inner, left };

struct Merge {
  enum class Keys { natural, on, left_right };
  ExprPtr left;
  ExprPtr right;
  Keys keys = Keys::natural;
  std::vector<std::string> left_on;
  std::vector<std::string> right_on;
  JoinHow how = JoinHow::inner;
};

enum class AggFn { count, size, sum, mean, min, max };

struct Aggregate {
  AggFn fn;
  std::string column;  // empty for size
  std::string name;    // output column
  bool operator==(const Aggregate&) const = default;
};

struct GroupAgg {
  enum class Style { named, series, size };
  ExprPtr src;
  std::vector<std::string> keys;  // empty: one output row
  std::vector<Aggregate> aggs;
  Style style = Style::named;
};

struct Sort {
  ExprPtr src;
  std::vector<std::string> keys;
  std::vector<bool> ascending;
};

struct Limit {
  ExprPtr src;
  std::int64_t n = 0;
};

struct Distinct {
  ExprPtr src;
};

struct Expr {
  std::variant<TableRef, StepRef, ColumnSelect, Filter, Merge, GroupAgg, Sort, Limit, Distinct> node;
};

enum class CmpOp { eq, ne, lt, le, gt, ge };

struct ColumnOperand {
  std::string column;
  bool operator==(const ColumnOperand&) const = default;
};

/// Right-hand side of a comparison: a literal, another column of the same
/// frame, or a single-value frame (scalar aggregate).
using Operand = std::variant<Literal, ColumnOperand, ExprPtr>;

struct Compare {
  std::string column;
  CmpOp op;
  Operand rhs;
};

struct IsIn {
  std::string column;
  std::variant<std::vector<Literal>, ExprPtr> set;
};

struct NullCheck {
  std::string column;
  bool is_null = true;
};

struct Not {
  PredPtr inner;
};

struct And {
  PredPtr left, right;
};

struct Or {
  PredPtr left, right;
};

struct Pred {
  std::variant<Compare, IsIn, NullCheck, Not, And, Or> node;
};

bool operator==(const Expr& a, const Expr& b);
bool operator==(const Pred& a, const Pred& b);
bool same(const ExprPtr& a, const ExprPtr& b);
bool same(const PredPtr& a, const PredPtr& b);

struct Step {
  std::string target;
  ExprPtr expr;
};

struct Program {
  std::vector<Step> steps;

  /// The step named `result`, else the last step.
  std::size_t output_index() const;
  /// Step with the given target; throws UndefinedName.
  const Step& step(std::string_view target) const;
};

bool operator==(const Program& a, const Program& b);

// Convenience constructors.
ExprPtr table(std::string name);
ExprPtr step_ref(std::string name);
ExprPtr select(ExprPtr src, std::vector<std::string> columns, bool series = false);
ExprPtr filter(ExprPtr src, PredPtr pred);
ExprPtr merge_on(ExprPtr left, ExprPtr right, std::vector<std::string> on, JoinHow how = JoinHow::inner);
ExprPtr merge_lr(ExprPtr left, ExprPtr right, std::vector<std::string> left_on,
                 std::vector<std::string> right_on, JoinHow how = JoinHow::inner);
ExprPtr merge_natural(ExprPtr left, ExprPtr right, JoinHow how = JoinHow::inner);
ExprPtr group_agg(ExprPtr src, std::vector<std::string> keys, std::vector<Aggregate> aggs,
                  GroupAgg::Style style = GroupAgg::Style::named);
ExprPtr sort(ExprPtr src, std::vector<std::string> keys, std::vector<bool> ascending);
ExprPtr limit(ExprPtr src, std::int64_t n);
ExprPtr distinct(ExprPtr src);
PredPtr compare(std::string column, CmpOp op, Operand rhs);
PredPtr is_in(std::string column, std::variant<std::vector<Literal>, ExprPtr> set);
PredPtr null_check(std::string column, bool is_null);
PredPtr negate(PredPtr p);
PredPtr conj(PredPtr a, PredPtr b);
PredPtr disj(PredPtr a, PredPtr b);

std::string_view to_string(AggFn f);
std::string_view to_string(CmpOp op);

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class PotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedConstruct : public PotError {
 public:
  UnsupportedConstruct(int line, std::string text, std::string why);
  int line() const { return line_; }
  const std::string& text() const { return text_; }

 private:
  int line_;
  std::string text_;
};

class UndefinedName : public PotError {
 public:
  explicit UndefinedName(std::string name)
      : PotError("undefined name: " + name), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class NoCodeFound : public PotError {
 public:
  NoCodeFound() : PotError("no python code block found") {}
};

class SchemaMismatch : public PotError {
 public:
  using PotError::PotError;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Parses the code in every ```python fence of `text` (concatenated).
Program parse_codeblocks(std::string_view text);

/// Parses bare DSL source.
Program parse_program(std::string_view source);

/// Canonical DSL text; parse_program(pretty_print(p)) == p.
std::string pretty_print(const Program& program);

/// Output columns of a step, resolved against table column lists.
using TableColumns = std::map<std::string, std::vector<std::string>, std::less<>>;
TableColumns table_columns(const DatabaseSchema& schema);

/// One SELECT statement computing the program's output step.
SqlQuery lower_to_sql(const Program& program, const DatabaseSchema& schema);

/// In-memory tables by name (case-insensitive lookup).
using Tables = std::map<std::string, ResultTable, std::less<>>;

/// Evaluates the program's output step with SQLite value semantics.
ResultTable interpret(const Program& program, const Tables& tables);

/// True when the output step's row order is defined (Sort, or Limit over Sort).
bool output_is_ordered(const Program& program);

}  // namespace consql::pot
