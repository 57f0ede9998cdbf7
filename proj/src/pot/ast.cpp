#include <algorithm>

#include "consql/pot.hpp"
#include "pot_internal.hpp"

namespace consql::pot {

bool same(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

bool same(const PredPtr& a, const PredPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

namespace {

bool same_operand(const Operand& a, const Operand& b) {
  if (a.index() != b.index()) return false;
  if (auto* e = std::get_if<ExprPtr>(&a)) return same(*e, std::get<ExprPtr>(b));
  return a == b;
}

struct ExprEq {
  const Expr& other;
  bool operator()(const TableRef& a) const { return a == std::get<TableRef>(other.node); }
  bool operator()(const StepRef& a) const { return a == std::get<StepRef>(other.node); }
  bool operator()(const ColumnSelect& a) const {
    const auto& b = std::get<ColumnSelect>(other.node);
    return a.columns == b.columns && a.series == b.series && same(a.src, b.src);
  }
  bool operator()(const Filter& a) const {
    const auto& b = std::get<Filter>(other.node);
    return same(a.src, b.src) && same(a.pred, b.pred);
  }
  bool operator()(const Merge& a) const {
    const auto& b = std::get<Merge>(other.node);
    return a.keys == b.keys && a.left_on == b.left_on && a.right_on == b.right_on && a.how == b.how &&
           same(a.left, b.left) && same(a.right, b.right);
  }
  bool operator()(const GroupAgg& a) const {
    const auto& b = std::get<GroupAgg>(other.node);
    return a.keys == b.keys && a.aggs == b.aggs && a.style == b.style && same(a.src, b.src);
  }
  bool operator()(const Sort& a) const {
    const auto& b = std::get<Sort>(other.node);
    return a.keys == b.keys && a.ascending == b.ascending && same(a.src, b.src);
  }
  bool operator()(const Limit& a) const {
    const auto& b = std::get<Limit>(other.node);
    return a.n == b.n && same(a.src, b.src);
  }
  bool operator()(const Distinct& a) const { return same(a.src, std::get<Distinct>(other.node).src); }
};

struct PredEq {
  const Pred& other;
  bool operator()(const Compare& a) const {
    const auto& b = std::get<Compare>(other.node);
    return a.column == b.column && a.op == b.op && same_operand(a.rhs, b.rhs);
  }
  bool operator()(const IsIn& a) const {
    const auto& b = std::get<IsIn>(other.node);
    if (a.column != b.column || a.set.index() != b.set.index()) return false;
    if (auto* e = std::get_if<ExprPtr>(&a.set)) return same(*e, std::get<ExprPtr>(b.set));
    return a.set == b.set;
  }
  bool operator()(const NullCheck& a) const {
    const auto& b = std::get<NullCheck>(other.node);
    return a.column == b.column && a.is_null == b.is_null;
  }
  bool operator()(const Not& a) const { return same(a.inner, std::get<Not>(other.node).inner); }
  bool operator()(const And& a) const {
    const auto& b = std::get<And>(other.node);
    return same(a.left, b.left) && same(a.right, b.right);
  }
  bool operator()(const Or& a) const {
    const auto& b = std::get<Or>(other.node);
    return same(a.left, b.left) && same(a.right, b.right);
  }
};

}  // namespace

bool operator==(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(ExprEq{b}, a.node);
}

bool operator==(const Pred& a, const Pred& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(PredEq{b}, a.node);
}

bool operator==(const Program& a, const Program& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    if (a.steps[i].target != b.steps[i].target || !same(a.steps[i].expr, b.steps[i].expr)) return false;
  }
  return true;
}

std::size_t Program::output_index() const {
  if (steps.empty()) throw NoCodeFound();
  for (std::size_t i = steps.size(); i-- > 0;) {
    if (steps[i].target == "result") return i;
  }
  return steps.size() - 1;
}

const Step& Program::step(std::string_view target) const {
  for (std::size_t i = steps.size(); i-- > 0;) {
    if (steps[i].target == target) return steps[i];
  }
  throw UndefinedName(std::string(target));
}

UnsupportedConstruct::UnsupportedConstruct(int line, std::string text, std::string why)
    : PotError("unsupported construct on line " + std::to_string(line) + ": " + text +
               (why.empty() ? "" : " (" + why + ")")),
      line_(line),
      text_(std::move(text)) {}

namespace {
template <typename T>
ExprPtr make(T node) {
  return std::make_shared<const Expr>(Expr{std::move(node)});
}
template <typename T>
PredPtr make_pred(T node) {
  return std::make_shared<const Pred>(Pred{std::move(node)});
}
}  // namespace

ExprPtr table(std::string name) { return make(TableRef{std::move(name)}); }
ExprPtr step_ref(std::string name) { return make(StepRef{std::move(name)}); }
ExprPtr select(ExprPtr src, std::vector<std::string> columns, bool series) {
  return make(ColumnSelect{std::move(src), std::move(columns), series});
}
ExprPtr filter(ExprPtr src, PredPtr pred) { return make(Filter{std::move(src), std::move(pred)}); }
ExprPtr merge_on(ExprPtr left, ExprPtr right, std::vector<std::string> on, JoinHow how) {
  return make(Merge{std::move(left), std::move(right), Merge::Keys::on, on, on, how});
}
ExprPtr merge_lr(ExprPtr left, ExprPtr right, std::vector<std::string> left_on,
                 std::vector<std::string> right_on, JoinHow how) {
  return make(Merge{std::move(left), std::move(right), Merge::Keys::left_right, std::move(left_on),
                    std::move(right_on), how});
}
ExprPtr merge_natural(ExprPtr left, ExprPtr right, JoinHow how) {
  return make(Merge{std::move(left), std::move(right), Merge::Keys::natural, {}, {}, how});
}
ExprPtr group_agg(ExprPtr src, std::vector<std::string> keys, std::vector<Aggregate> aggs,
                  GroupAgg::Style style) {
  return make(GroupAgg{std::move(src), std::move(keys), std::move(aggs), style});
}
ExprPtr sort(ExprPtr src, std::vector<std::string> keys, std::vector<bool> ascending) {
  return make(Sort{std::move(src), std::move(keys), std::move(ascending)});
}
ExprPtr limit(ExprPtr src, std::int64_t n) { return make(Limit{std::move(src), n}); }
ExprPtr distinct(ExprPtr src) { return make(Distinct{std::move(src)}); }
PredPtr compare(std::string column, CmpOp op, Operand rhs) {
  return make_pred(Compare{std::move(column), op, std::move(rhs)});
}
PredPtr is_in(std::string column, std::variant<std::vector<Literal>, ExprPtr> set) {
  return make_pred(IsIn{std::move(column), std::move(set)});
}
PredPtr null_check(std::string column, bool is_null) { return make_pred(NullCheck{std::move(column), is_null}); }
PredPtr negate(PredPtr p) { return make_pred(Not{std::move(p)}); }
PredPtr conj(PredPtr a, PredPtr b) { return make_pred(And{std::move(a), std::move(b)}); }
PredPtr disj(PredPtr a, PredPtr b) { return make_pred(Or{std::move(a), std::move(b)}); }

std::string_view to_string(AggFn f) {
  switch (f) {
    case AggFn::count: return "count";
    case AggFn::size: return "size";
    case AggFn::sum: return "sum";
    case AggFn::mean: return "mean";
    case AggFn::min: return "min";
    case AggFn::max: return "max";
  }
  return "count";
}

std::optional<AggFn> agg_fn_from_string(std::string_view s) {
  for (AggFn f : {AggFn::count, AggFn::size, AggFn::sum, AggFn::mean, AggFn::min, AggFn::max}) {
    if (s == to_string(f)) return f;
  }
  return std::nullopt;
}

std::string_view to_string(CmpOp op) {
  switch (op) {
    case CmpOp::eq: return "==";
    case CmpOp::ne: return "!=";
    case CmpOp::lt: return "<";
    case CmpOp::le: return "<=";
    case CmpOp::gt: return ">";
    case CmpOp::ge: return ">=";
  }
  return "==";
}

// ---------------------------------------------------------------------------
// Shared column logic

std::optional<std::size_t> find_name(const std::vector<std::string>& names, std::string_view name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (iequals(names[i], name)) return i;
  }
  return std::nullopt;
}

std::size_t require_column(const std::vector<std::string>& names, std::string_view name) {
  if (auto i = find_name(names, name)) return *i;
  std::string have;
  for (const auto& n : names) have += (have.empty() ? "" : ", ") + n;
  throw SchemaMismatch("no column '" + std::string(name) + "' (available: " + have + ")");
}

void check_unique(const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      if (iequals(names[i], names[j])) throw SchemaMismatch("duplicate column '" + names[i] + "'");
    }
  }
}

MergeLayout merge_layout(const Merge& m, const std::vector<std::string>& left,
                         const std::vector<std::string>& right) {
  MergeLayout layout;
  std::vector<std::string> lkeys = m.left_on;
  std::vector<std::string> rkeys = m.right_on;
  if (m.keys == Merge::Keys::natural) {
    for (const auto& name : left) {
      if (find_name(right, name)) {
        lkeys.push_back(name);
        rkeys.push_back(name);
      }
    }
    if (lkeys.empty()) throw SchemaMismatch("merge without 'on' needs a common column");
  }
  if (lkeys.empty() || lkeys.size() != rkeys.size()) {
    throw SchemaMismatch("merge keys must be non-empty and paired");
  }
  std::vector<bool> right_dropped(right.size(), false);
  for (std::size_t k = 0; k < lkeys.size(); ++k) {
    std::size_t li = require_column(left, lkeys[k]);
    std::size_t ri = require_column(right, rkeys[k]);
    layout.key_pairs.emplace_back(li, ri);
    // A key with the same name on both sides appears once, from the left.
    if (iequals(left[li], right[ri])) right_dropped[ri] = true;
  }
  auto is_key_left = [&](std::size_t li) {
    for (std::size_t k = 0; k < layout.key_pairs.size(); ++k) {
      if (layout.key_pairs[k].first == li && right_dropped[layout.key_pairs[k].second]) return true;
    }
    return false;
  };
  for (std::size_t i = 0; i < left.size(); ++i) {
    bool clash = false;
    if (!is_key_left(i)) {
      for (std::size_t j = 0; j < right.size(); ++j) {
        if (!right_dropped[j] && iequals(left[i], right[j])) clash = true;
      }
    }
    layout.columns.push_back({0, i, clash ? left[i] + "_x" : left[i]});
  }
  for (std::size_t j = 0; j < right.size(); ++j) {
    if (right_dropped[j]) continue;
    bool clash = false;
    for (std::size_t i = 0; i < left.size(); ++i) {
      if (!is_key_left(i) && iequals(left[i], right[j])) clash = true;
    }
    layout.columns.push_back({1, j, clash ? right[j] + "_y" : right[j]});
  }
  std::vector<std::string> names;
  for (const auto& c : layout.columns) names.push_back(c.name);
  check_unique(names);
  return layout;
}

std::vector<std::string> group_output_names(const GroupAgg& g, const std::vector<std::string>& input) {
  std::vector<std::string> out;
  for (const auto& k : g.keys) out.push_back(input[require_column(input, k)]);
  for (const auto& a : g.aggs) {
    if (a.fn != AggFn::size) require_column(input, a.column);
    out.push_back(a.name);
  }
  check_unique(out);
  return out;
}

}  // namespace consql::pot
