// Lowering of DSL programs to one SELECT statement.
//
// Each expression lowers to a SelectBlock. An operation is absorbed into the
// block when SQL clause order preserves its meaning (a filter after a join
// becomes WHERE, a filter after grouping becomes HAVING); otherwise the block
// is wrapped as a subquery with a fresh alias and the operation applies to
// that.
#include <algorithm>

#include "consql/pot.hpp"
#include "pot_internal.hpp"

namespace consql::pot {
namespace {

struct SqlExpr {
  enum class Kind { column, aggregate } kind = Kind::column;
  int alias = 0;
  std::string column;  // column name in the FROM item
  AggFn fn = AggFn::count;
  std::shared_ptr<const SqlExpr> arg;  // aggregate argument; null for COUNT(*)
};

SqlExpr col_ref(int alias, std::string column) {
  SqlExpr e;
  e.alias = alias;
  e.column = std::move(column);
  return e;
}

struct SqlPred;
using SqlPredPtr = std::shared_ptr<const SqlPred>;

struct SqlPred {
  enum class Kind { compare, in, null_check, negation, conjunction, disjunction } kind;
  SqlExpr lhs;
  CmpOp op = CmpOp::eq;
  // compare: literal, column expression, or rendered scalar subquery
  std::variant<Literal, SqlExpr, std::string> rhs;
  // in: literal list or rendered subquery
  std::variant<std::vector<Literal>, std::string> set;
  bool is_null = true;
  std::vector<SqlPredPtr> children;
};

struct OutCol {
  std::string name;
  SqlExpr expr;
};

struct FromItem {
  std::string sql;  // quoted table name or parenthesized subquery
  bool subquery = false;
  int alias = 0;
  std::vector<std::string> columns;
  JoinHow how = JoinHow::inner;
  std::vector<std::pair<SqlExpr, SqlExpr>> on;
  std::vector<SqlPredPtr> on_extra;
};

struct Block {
  std::vector<FromItem> from;
  std::vector<OutCol> cols;
  std::vector<SqlPredPtr> where;
  std::vector<SqlExpr> group_by;
  std::vector<SqlPredPtr> having;
  bool aggregated = false;
  std::vector<std::pair<SqlExpr, bool>> order_by;  // expression, ascending
  std::optional<std::int64_t> limit;
  bool distinct = false;

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : cols) out.push_back(c.name);
    return out;
  }
};

std::string sql_literal(const Literal& v) {
  if (std::holds_alternative<std::monostate>(v)) return "NULL";
  if (auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (auto* d = std::get_if<double>(&v)) {
    std::string s = format_real(*d);
    if (s.find_first_of("in") != std::string::npos) throw SchemaMismatch("non-finite literal " + s);
    return s;
  }
  std::string out = "'";
  for (char c : std::get<std::string>(v)) {
    if (c == '\'') out.push_back('\'');
    out.push_back(c);
  }
  return out + "'";
}

std::string_view sql_fn(AggFn f) {
  switch (f) {
    case AggFn::count:
    case AggFn::size: return "COUNT";
    case AggFn::sum: return "SUM";
    case AggFn::mean: return "AVG";
    case AggFn::min: return "MIN";
    case AggFn::max: return "MAX";
  }
  return "COUNT";
}

std::string_view sql_op(CmpOp op) {
  switch (op) {
    case CmpOp::eq: return "=";
    case CmpOp::ne: return "<>";
    case CmpOp::lt: return "<";
    case CmpOp::le: return "<=";
    case CmpOp::gt: return ">";
    case CmpOp::ge: return ">=";
  }
  return "=";
}

class Renderer {
 public:
  explicit Renderer(bool qualify) : qualify_(qualify) {}

  std::string expr(const SqlExpr& e) const {
    if (e.kind == SqlExpr::Kind::column) {
      std::string col = quote_identifier(e.column);
      return qualify_ ? "T" + std::to_string(e.alias) + "." + col : col;
    }
    if (!e.arg) return "COUNT(*)";
    return std::string(sql_fn(e.fn)) + "(" + expr(*e.arg) + ")";
  }

  // Precedence: 1 OR, 2 AND, 3 NOT, 4 atom.
  std::string pred(const SqlPred& p, int parent = 0) const {
    switch (p.kind) {
      case SqlPred::Kind::compare: {
        std::string rhs;
        if (auto* lit = std::get_if<Literal>(&p.rhs)) {
          rhs = sql_literal(*lit);
        } else if (auto* col = std::get_if<SqlExpr>(&p.rhs)) {
          rhs = expr(*col);
        } else {
          rhs = "(" + std::get<std::string>(p.rhs) + ")";
        }
        return expr(p.lhs) + " " + std::string(sql_op(p.op)) + " " + rhs;
      }
      case SqlPred::Kind::in: return in_list(p, false);
      case SqlPred::Kind::null_check: return expr(p.lhs) + (p.is_null ? " IS NULL" : " IS NOT NULL");
      case SqlPred::Kind::negation: {
        const SqlPred& inner = *p.children[0];
        if (inner.kind == SqlPred::Kind::in) return in_list(inner, true);
        if (inner.kind == SqlPred::Kind::null_check) {
          return expr(inner.lhs) + (inner.is_null ? " IS NOT NULL" : " IS NULL");
        }
        return "NOT (" + pred(inner) + ")";
      }
      case SqlPred::Kind::conjunction:
      case SqlPred::Kind::disjunction: {
        bool is_and = p.kind == SqlPred::Kind::conjunction;
        int prec = is_and ? 2 : 1;
        std::string s = pred(*p.children[0], prec) + (is_and ? " AND " : " OR ") + pred(*p.children[1], prec);
        return prec < parent ? "(" + s + ")" : s;
      }
    }
    return {};
  }

 private:
  std::string in_list(const SqlPred& p, bool negated) const {
    std::string body;
    if (auto* values = std::get_if<std::vector<Literal>>(&p.set)) {
      for (std::size_t i = 0; i < values->size(); ++i) {
        if (i > 0) body += ", ";
        body += sql_literal((*values)[i]);
      }
    } else {
      body = std::get<std::string>(p.set);
    }
    return expr(p.lhs) + (negated ? " NOT IN (" : " IN (") + body + ")";
  }

  bool qualify_;
};

bool same_ref(const SqlExpr& a, int alias, const std::string& column) {
  return a.kind == SqlExpr::Kind::column && a.alias == alias && a.column == column;
}

// Column aliases matter only when the result is read by name.
std::string render(const Block& b, bool name_columns = true) {
  const bool qualify = b.from.size() > 1;
  Renderer r(qualify);
  std::string sql = b.distinct ? "SELECT DISTINCT " : "SELECT ";

  bool star = !b.aggregated && b.from.size() == 1 && b.cols.size() == b.from[0].columns.size();
  for (std::size_t i = 0; star && i < b.cols.size(); ++i) {
    star = b.cols[i].name == b.from[0].columns[i] && same_ref(b.cols[i].expr, b.from[0].alias, b.from[0].columns[i]);
  }
  if (star) {
    sql += "*";
  } else {
    for (std::size_t i = 0; i < b.cols.size(); ++i) {
      if (i > 0) sql += ", ";
      const OutCol& c = b.cols[i];
      sql += r.expr(c.expr);
      bool plain = c.expr.kind == SqlExpr::Kind::column && c.expr.column == c.name;
      if (!plain && name_columns) sql += " AS " + quote_identifier(c.name);
    }
  }

  sql += " FROM ";
  for (std::size_t i = 0; i < b.from.size(); ++i) {
    const FromItem& f = b.from[i];
    if (i > 0) sql += f.how == JoinHow::left ? " LEFT JOIN " : " JOIN ";
    sql += f.sql;
    if (qualify) sql += " AS T" + std::to_string(f.alias);
    if (i > 0) {
      std::vector<std::string> conds;
      for (const auto& [l, rr] : f.on) conds.push_back(r.expr(l) + " = " + r.expr(rr));
      for (const auto& p : f.on_extra) conds.push_back(r.pred(*p, 2));
      sql += " ON ";
      for (std::size_t k = 0; k < conds.size(); ++k) sql += (k > 0 ? " AND " : "") + conds[k];
    }
  }
  auto conjuncts = [&](const std::vector<SqlPredPtr>& preds) {
    std::string out;
    for (std::size_t k = 0; k < preds.size(); ++k) out += (k > 0 ? " AND " : "") + r.pred(*preds[k], 2);
    return out;
  };
  if (!b.where.empty()) sql += " WHERE " + conjuncts(b.where);
  if (!b.group_by.empty()) {
    sql += " GROUP BY ";
    for (std::size_t k = 0; k < b.group_by.size(); ++k) sql += (k > 0 ? ", " : "") + r.expr(b.group_by[k]);
  }
  if (!b.having.empty()) sql += " HAVING " + conjuncts(b.having);
  if (!b.order_by.empty()) {
    sql += " ORDER BY ";
    for (std::size_t k = 0; k < b.order_by.size(); ++k) {
      sql += (k > 0 ? ", " : "") + r.expr(b.order_by[k].first) + (b.order_by[k].second ? "" : " DESC");
    }
  }
  if (b.limit) sql += " LIMIT " + std::to_string(*b.limit);
  return sql;
}

class Lowerer {
 public:
  Lowerer(const Program& program, const TableColumns& tables) : program_(program), tables_(tables) {}

  Block lower(const ExprPtr& e) {
    if (++depth_ > 200) throw SchemaMismatch("program nesting too deep");
    Block b = std::visit([&](const auto& node) { return lower_node(node); }, e->node);
    --depth_;
    return b;
  }

 private:
  Block wrap(const Block& inner) {
    Block b;
    FromItem item;
    item.sql = "(" + render(inner) + ")";
    item.subquery = true;
    item.alias = ++alias_;
    item.columns = inner.names();
    for (const auto& name : item.columns) b.cols.push_back({name, col_ref(item.alias, name)});
    b.from.push_back(std::move(item));
    return b;
  }

  Block lower_node(const TableRef& t) {
    auto it = std::find_if(tables_.begin(), tables_.end(), [&](const auto& kv) { return iequals(kv.first, t.table); });
    if (it == tables_.end()) throw SchemaMismatch("no table '" + t.table + "'");
    Block b;
    FromItem item;
    item.sql = quote_identifier(it->first);
    item.alias = ++alias_;
    item.columns = it->second;
    for (const auto& c : item.columns) b.cols.push_back({c, col_ref(item.alias, c)});
    b.from.push_back(std::move(item));
    return b;
  }

  Block lower_node(const StepRef& s) { return lower(program_.step(s.name).expr); }

  Block lower_node(const ColumnSelect& c) {
    Block b = lower(c.src);
    if (b.distinct) b = wrap(b);
    std::vector<OutCol> cols;
    auto names = b.names();
    for (const auto& name : c.columns) cols.push_back(b.cols[require_column(names, name)]);
    b.cols = std::move(cols);
    check_unique(b.names());
    return b;
  }

  Block lower_node(const Filter& f) {
    Block b = lower(f.src);
    if (b.limit || b.distinct || (b.aggregated && b.group_by.empty())) b = wrap(b);
    SqlPredPtr p = resolve(*f.pred, b);
    (b.aggregated ? b.having : b.where).push_back(std::move(p));
    return b;
  }

  Block lower_node(const Merge& m) {
    Block left = lower(m.left);
    if (left.aggregated || left.limit || left.distinct) left = wrap(left);
    left.order_by.clear();

    Block right = lower(m.right);
    bool flat = right.from.size() == 1 && !right.from[0].subquery && !right.aggregated && !right.limit &&
                !right.distinct;
    if (!flat) right = wrap(right);
    right.order_by.clear();

    MergeLayout layout = merge_layout(m, left.names(), right.names());
    FromItem item = right.from[0];
    item.how = m.how;
    for (const auto& [li, ri] : layout.key_pairs) item.on.emplace_back(left.cols[li].expr, right.cols[ri].expr);
    if (m.how == JoinHow::left) {
      item.on_extra = right.where;
    } else {
      left.where.insert(left.where.end(), right.where.begin(), right.where.end());
    }

    std::vector<OutCol> cols;
    for (const auto& c : layout.columns) {
      cols.push_back({c.name, c.side == 0 ? left.cols[c.index].expr : right.cols[c.index].expr});
    }
    left.from.push_back(std::move(item));
    left.cols = std::move(cols);
    return left;
  }

  Block lower_node(const GroupAgg& g) {
    Block b = lower(g.src);
    if (b.aggregated || b.limit || b.distinct) b = wrap(b);
    b.order_by.clear();
    auto names = b.names();
    std::vector<std::string> out_names = group_output_names(g, names);
    std::vector<OutCol> cols;
    b.group_by.clear();
    for (std::size_t k = 0; k < g.keys.size(); ++k) {
      const SqlExpr& key = b.cols[require_column(names, g.keys[k])].expr;
      b.group_by.push_back(key);
      cols.push_back({out_names[k], key});
    }
    for (std::size_t a = 0; a < g.aggs.size(); ++a) {
      SqlExpr e;
      e.kind = SqlExpr::Kind::aggregate;
      e.fn = g.aggs[a].fn;
      if (g.aggs[a].fn != AggFn::size) {
        e.arg = std::make_shared<const SqlExpr>(b.cols[require_column(names, g.aggs[a].column)].expr);
      }
      cols.push_back({out_names[g.keys.size() + a], std::move(e)});
    }
    b.cols = std::move(cols);
    b.aggregated = true;
    return b;
  }

  Block lower_node(const Sort& s) {
    Block b = lower(s.src);
    if (b.limit) b = wrap(b);
    if (s.keys.size() != s.ascending.size()) throw SchemaMismatch("sort keys and directions differ in length");
    auto names = b.names();
    std::vector<std::pair<SqlExpr, bool>> order;
    for (std::size_t k = 0; k < s.keys.size(); ++k) {
      order.emplace_back(b.cols[require_column(names, s.keys[k])].expr, s.ascending[k]);
    }
    // A stable re-sort keeps the previous order among ties.
    order.insert(order.end(), b.order_by.begin(), b.order_by.end());
    b.order_by = std::move(order);
    return b;
  }

  Block lower_node(const Limit& l) {
    Block b = lower(l.src);
    if (l.n < 0) throw SchemaMismatch("negative limit");
    b.limit = b.limit ? std::min(*b.limit, l.n) : l.n;
    return b;
  }

  Block lower_node(const Distinct& d) {
    Block b = lower(d.src);
    if (b.limit) b = wrap(b);
    b.distinct = true;
    return b;
  }

  std::string subquery(const ExprPtr& e, bool scalar) {
    Block b = lower(e);
    if (b.cols.size() != 1) throw SchemaMismatch("subquery must produce exactly one column");
    if (scalar && !(b.aggregated && b.group_by.empty())) {
      throw SchemaMismatch("comparison value must be a single aggregate");
    }
    return render(b, false);
  }

  SqlPredPtr resolve(const Pred& p, const Block& b) {
    auto names = b.names();
    auto column = [&](const std::string& c) { return b.cols[require_column(names, c)].expr; };
    auto out = std::make_shared<SqlPred>();
    std::visit(
        [&](const auto& node) {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, Compare>) {
            out->kind = SqlPred::Kind::compare;
            out->lhs = column(node.column);
            out->op = node.op;
            if (auto* lit = std::get_if<Literal>(&node.rhs)) {
              out->rhs = *lit;
            } else if (auto* col = std::get_if<ColumnOperand>(&node.rhs)) {
              out->rhs = column(col->column);
            } else {
              out->rhs = subquery(std::get<ExprPtr>(node.rhs), true);
            }
          } else if constexpr (std::is_same_v<T, IsIn>) {
            out->kind = SqlPred::Kind::in;
            out->lhs = column(node.column);
            if (auto* values = std::get_if<std::vector<Literal>>(&node.set)) {
              out->set = *values;
            } else {
              out->set = subquery(std::get<ExprPtr>(node.set), false);
            }
          } else if constexpr (std::is_same_v<T, NullCheck>) {
            out->kind = SqlPred::Kind::null_check;
            out->lhs = column(node.column);
            out->is_null = node.is_null;
          } else if constexpr (std::is_same_v<T, Not>) {
            out->kind = SqlPred::Kind::negation;
            out->children = {resolve(*node.inner, b)};
          } else if constexpr (std::is_same_v<T, And>) {
            out->kind = SqlPred::Kind::conjunction;
            out->children = {resolve(*node.left, b), resolve(*node.right, b)};
          } else {
            out->kind = SqlPred::Kind::disjunction;
            out->children = {resolve(*node.left, b), resolve(*node.right, b)};
          }
        },
        p.node);
    return out;
  }

  const Program& program_;
  const TableColumns& tables_;
  int alias_ = 0;
  int depth_ = 0;
};

}  // namespace

TableColumns table_columns(const DatabaseSchema& schema) {
  TableColumns out;
  for (const auto& t : schema.tables) {
    std::vector<std::string> cols;
    for (const auto& c : t.columns) cols.push_back(c.name);
    out.emplace(t.name, std::move(cols));
  }
  return out;
}

SqlQuery lower_to_sql(const Program& program, const DatabaseSchema& schema) {
  TableColumns tables = table_columns(schema);
  Lowerer lowerer(program, tables);
  Block b = lowerer.lower(program.steps.at(program.output_index()).expr);
  return SqlQuery(render(b));
}

bool output_is_ordered(const Program& program) {
  auto resolve = [&](ExprPtr e) {
    for (int guard = 0; guard < 1000; ++guard) {
      auto* s = std::get_if<StepRef>(&e->node);
      if (!s) break;
      e = program.step(s->name).expr;
    }
    return e;
  };
  ExprPtr out = resolve(program.steps.at(program.output_index()).expr);
  if (std::holds_alternative<Sort>(out->node)) return true;
  if (auto* l = std::get_if<Limit>(&out->node)) return std::holds_alternative<Sort>(resolve(l->src)->node);
  return false;
}

}  // namespace consql::pot
