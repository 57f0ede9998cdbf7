// Direct evaluation of DSL programs over in-memory tables, following SQLite's
// value semantics (three-valued logic, storage-class ordering, NULL handling
// in joins and aggregates). Used as an oracle for the SQL lowering.
#include <algorithm>
#include <cstring>
#include <map>

#include "consql/pot.hpp"
#include "pot_internal.hpp"

namespace consql::pot {
namespace {

struct Frame {
  std::vector<std::string> cols;
  std::vector<Row> rows;
};

enum class Tri { f, t, u };

Tri tri_not(Tri a) { return a == Tri::u ? Tri::u : (a == Tri::t ? Tri::f : Tri::t); }
Tri tri_and(Tri a, Tri b) {
  if (a == Tri::f || b == Tri::f) return Tri::f;
  return a == Tri::t && b == Tri::t ? Tri::t : Tri::u;
}
Tri tri_or(Tri a, Tri b) {
  if (a == Tri::t || b == Tri::t) return Tri::t;
  return a == Tri::f && b == Tri::f ? Tri::f : Tri::u;
}

int storage_rank(const Cell& c) {
  if (is_null(c)) return 0;
  if (is_numeric(c)) return 1;
  if (std::holds_alternative<std::string>(c)) return 2;
  return 3;
}

int cmp_numeric(const Cell& a, const Cell& b) {
  if (auto* x = std::get_if<std::int64_t>(&a)) {
    if (auto* y = std::get_if<std::int64_t>(&b)) return *x < *y ? -1 : (*x > *y ? 1 : 0);
  }
  double x = as_double(a);
  double y = as_double(b);
  return x < y ? -1 : (x > y ? 1 : 0);
}

int cmp_bytes(const void* a, std::size_t na, const void* b, std::size_t nb) {
  int c = std::memcmp(a, b, std::min(na, nb));
  if (c != 0) return c < 0 ? -1 : 1;
  return na < nb ? -1 : (na > nb ? 1 : 0);
}

/// Total order: NULL < numeric < text < blob.
int cmp_cells(const Cell& a, const Cell& b) {
  int ra = storage_rank(a);
  int rb = storage_rank(b);
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (ra) {
    case 0: return 0;
    case 1: return cmp_numeric(a, b);
    case 2: {
      const auto& x = std::get<std::string>(a);
      const auto& y = std::get<std::string>(b);
      return cmp_bytes(x.data(), x.size(), y.data(), y.size());
    }
    default: {
      const auto& x = std::get<Blob>(a).bytes;
      const auto& y = std::get<Blob>(b).bytes;
      return cmp_bytes(x.data(), x.size(), y.data(), y.size());
    }
  }
}

Cell to_cell(const Literal& v) {
  if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (auto* d = std::get_if<double>(&v)) return *d;
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  return std::monostate{};
}

Tri compare_cells(const Cell& a, CmpOp op, const Cell& b) {
  if (is_null(a) || is_null(b)) return Tri::u;
  int c = cmp_cells(a, b);
  bool r = false;
  switch (op) {
    case CmpOp::eq: r = c == 0; break;
    case CmpOp::ne: r = c != 0; break;
    case CmpOp::lt: r = c < 0; break;
    case CmpOp::le: r = c <= 0; break;
    case CmpOp::gt: r = c > 0; break;
    case CmpOp::ge: r = c >= 0; break;
  }
  return r ? Tri::t : Tri::f;
}

Tri membership(const Cell& x, const std::vector<Cell>& set) {
  if (set.empty()) return Tri::f;
  if (is_null(x)) return Tri::u;
  bool saw_null = false;
  for (const auto& v : set) {
    if (is_null(v)) {
      saw_null = true;
    } else if (cmp_cells(x, v) == 0) {
      return Tri::t;
    }
  }
  return saw_null ? Tri::u : Tri::f;
}

Cell aggregate(AggFn fn, const std::vector<const Row*>& rows, std::size_t col) {
  if (fn == AggFn::size) return static_cast<std::int64_t>(rows.size());
  std::vector<const Cell*> vals;
  for (const Row* r : rows) {
    if (!is_null((*r)[col])) vals.push_back(&(*r)[col]);
  }
  switch (fn) {
    case AggFn::count: return static_cast<std::int64_t>(vals.size());
    case AggFn::sum: {
      if (vals.empty()) return std::monostate{};
      bool all_int = std::all_of(vals.begin(), vals.end(),
                                 [](const Cell* c) { return std::holds_alternative<std::int64_t>(*c); });
      if (all_int) {
        std::int64_t s = 0;
        for (const Cell* c : vals) s += std::get<std::int64_t>(*c);
        return s;
      }
      double s = 0;
      for (const Cell* c : vals) s += as_double(*c);
      return s;
    }
    case AggFn::mean: {
      if (vals.empty()) return std::monostate{};
      double s = 0;
      for (const Cell* c : vals) s += as_double(*c);
      return s / static_cast<double>(vals.size());
    }
    case AggFn::min:
    case AggFn::max: {
      if (vals.empty()) return std::monostate{};
      const Cell* best = vals[0];
      for (const Cell* c : vals) {
        int d = cmp_cells(*c, *best);
        if (fn == AggFn::min ? d < 0 : d > 0) best = c;
      }
      return *best;
    }
    case AggFn::size: break;
  }
  return std::monostate{};
}

class Interpreter {
 public:
  Interpreter(const Program& program, const Tables& tables) : program_(program), tables_(tables) {}

  Frame eval(const ExprPtr& e) {
    if (++depth_ > 200) throw SchemaMismatch("program nesting too deep");
    Frame f = std::visit([&](const auto& node) { return eval_node(node); }, e->node);
    --depth_;
    return f;
  }

 private:
  Frame eval_node(const TableRef& t) {
    auto it = std::find_if(tables_.begin(), tables_.end(), [&](const auto& kv) { return iequals(kv.first, t.table); });
    if (it == tables_.end()) throw SchemaMismatch("no table '" + t.table + "'");
    return {it->second.columns(), it->second.rows()};
  }

  Frame eval_node(const StepRef& s) {
    auto it = memo_.find(s.name);
    if (it != memo_.end()) return it->second;
    Frame f = eval(program_.step(s.name).expr);
    memo_.emplace(s.name, f);
    return f;
  }

  Frame eval_node(const ColumnSelect& c) {
    Frame in = eval(c.src);
    std::vector<std::size_t> idx;
    Frame out;
    for (const auto& name : c.columns) {
      idx.push_back(require_column(in.cols, name));
      out.cols.push_back(in.cols[idx.back()]);
    }
    check_unique(out.cols);
    for (const auto& r : in.rows) {
      Row row;
      for (std::size_t i : idx) row.push_back(r[i]);
      out.rows.push_back(std::move(row));
    }
    return out;
  }

  Frame eval_node(const Filter& f) {
    Frame in = eval(f.src);
    Frame out{in.cols, {}};
    for (auto& r : in.rows) {
      if (test(*f.pred, in.cols, r) == Tri::t) out.rows.push_back(std::move(r));
    }
    return out;
  }

  Frame eval_node(const Merge& m) {
    Frame l = eval(m.left);
    Frame r = eval(m.right);
    MergeLayout layout = merge_layout(m, l.cols, r.cols);
    Frame out;
    for (const auto& c : layout.columns) out.cols.push_back(c.name);
    Row null_right(r.cols.size());
    auto emit = [&](const Row& lr, const Row& rr) {
      Row row;
      for (const auto& c : layout.columns) row.push_back(c.side == 0 ? lr[c.index] : rr[c.index]);
      out.rows.push_back(std::move(row));
    };
    for (const auto& lr : l.rows) {
      bool matched = false;
      for (const auto& rr : r.rows) {
        bool eq = true;
        for (const auto& [li, ri] : layout.key_pairs) {
          if (compare_cells(lr[li], CmpOp::eq, rr[ri]) != Tri::t) {
            eq = false;
            break;
          }
        }
        if (eq) {
          matched = true;
          emit(lr, rr);
        }
      }
      if (!matched && m.how == JoinHow::left) emit(lr, null_right);
    }
    return out;
  }

  Frame eval_node(const GroupAgg& g) {
    Frame in = eval(g.src);
    Frame out;
    out.cols = group_output_names(g, in.cols);
    std::vector<std::size_t> keys;
    for (const auto& k : g.keys) keys.push_back(require_column(in.cols, k));
    std::vector<std::size_t> agg_cols;
    for (const auto& a : g.aggs) agg_cols.push_back(a.fn == AggFn::size ? 0 : require_column(in.cols, a.column));

    // Groups in first-appearance order; NULL keys group together.
    std::vector<Row> group_keys;
    std::vector<std::vector<const Row*>> members;
    for (const auto& r : in.rows) {
      Row key;
      for (std::size_t k : keys) key.push_back(r[k]);
      std::size_t gi = 0;
      for (; gi < group_keys.size(); ++gi) {
        bool same = true;
        for (std::size_t k = 0; k < key.size(); ++k) same = same && cmp_cells(key[k], group_keys[gi][k]) == 0;
        if (same) break;
      }
      if (gi == group_keys.size()) {
        group_keys.push_back(key);
        members.emplace_back();
      }
      members[gi].push_back(&r);
    }
    if (keys.empty() && group_keys.empty()) {
      group_keys.emplace_back();
      members.emplace_back();
    }
    for (std::size_t gi = 0; gi < group_keys.size(); ++gi) {
      Row row = group_keys[gi];
      for (std::size_t a = 0; a < g.aggs.size(); ++a) row.push_back(aggregate(g.aggs[a].fn, members[gi], agg_cols[a]));
      out.rows.push_back(std::move(row));
    }
    return out;
  }

  Frame eval_node(const Sort& s) {
    Frame f = eval(s.src);
    if (s.keys.size() != s.ascending.size()) throw SchemaMismatch("sort keys and directions differ in length");
    std::vector<std::size_t> idx;
    for (const auto& k : s.keys) idx.push_back(require_column(f.cols, k));
    std::stable_sort(f.rows.begin(), f.rows.end(), [&](const Row& a, const Row& b) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        int c = cmp_cells(a[idx[k]], b[idx[k]]);
        if (c != 0) return s.ascending[k] ? c < 0 : c > 0;
      }
      return false;
    });
    return f;
  }

  Frame eval_node(const Limit& l) {
    Frame f = eval(l.src);
    if (l.n < 0) throw SchemaMismatch("negative limit");
    if (f.rows.size() > static_cast<std::size_t>(l.n)) f.rows.resize(static_cast<std::size_t>(l.n));
    return f;
  }

  Frame eval_node(const Distinct& d) {
    Frame f = eval(d.src);
    Frame out{f.cols, {}};
    for (auto& r : f.rows) {
      bool seen = std::any_of(out.rows.begin(), out.rows.end(), [&](const Row& o) {
        for (std::size_t k = 0; k < r.size(); ++k) {
          if (cmp_cells(r[k], o[k]) != 0) return false;
        }
        return true;
      });
      if (!seen) out.rows.push_back(std::move(r));
    }
    return out;
  }

  std::vector<Cell> column_values(const ExprPtr& e) {
    Frame f = eval(e);
    if (f.cols.size() != 1) throw SchemaMismatch("subquery must produce exactly one column");
    std::vector<Cell> out;
    for (const auto& r : f.rows) out.push_back(r[0]);
    return out;
  }

  Tri test(const Pred& p, const std::vector<std::string>& cols, const Row& row) {
    auto cell = [&](const std::string& c) -> const Cell& { return row[require_column(cols, c)]; };
    return std::visit(
        [&](const auto& node) -> Tri {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, Compare>) {
            Cell rhs;
            if (auto* lit = std::get_if<Literal>(&node.rhs)) {
              rhs = to_cell(*lit);
            } else if (auto* col = std::get_if<ColumnOperand>(&node.rhs)) {
              rhs = cell(col->column);
            } else {
              auto values = column_values(std::get<ExprPtr>(node.rhs));
              if (!values.empty()) rhs = values[0];
            }
            return compare_cells(cell(node.column), node.op, rhs);
          } else if constexpr (std::is_same_v<T, IsIn>) {
            std::vector<Cell> set;
            if (auto* values = std::get_if<std::vector<Literal>>(&node.set)) {
              for (const auto& v : *values) set.push_back(to_cell(v));
            } else {
              set = column_values(std::get<ExprPtr>(node.set));
            }
            return membership(cell(node.column), set);
          } else if constexpr (std::is_same_v<T, NullCheck>) {
            return is_null(cell(node.column)) == node.is_null ? Tri::t : Tri::f;
          } else if constexpr (std::is_same_v<T, Not>) {
            return tri_not(test(*node.inner, cols, row));
          } else if constexpr (std::is_same_v<T, And>) {
            return tri_and(test(*node.left, cols, row), test(*node.right, cols, row));
          } else {
            return tri_or(test(*node.left, cols, row), test(*node.right, cols, row));
          }
        },
        p.node);
  }

  const Program& program_;
  const Tables& tables_;
  std::map<std::string, Frame, std::less<>> memo_;
  int depth_ = 0;
};

}  // namespace

ResultTable interpret(const Program& program, const Tables& tables) {
  Interpreter in(program, tables);
  Frame f = in.eval(program.steps.at(program.output_index()).expr);
  return ResultTable(std::move(f.cols), std::move(f.rows));
}

}  // namespace consql::pot
