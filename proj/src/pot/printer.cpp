#include "consql/pot.hpp"

namespace consql::pot {
namespace {

std::string py_string(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\'': out += "\\'"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out + "'";
}

std::string py_literal(const Literal& v) {
  if (std::holds_alternative<std::monostate>(v)) return "None";
  if (auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (auto* d = std::get_if<double>(&v)) return format_real(*d);
  return py_string(std::get<std::string>(v));
}

std::string py_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += py_string(items[i]);
  }
  return out + "]";
}

std::string expr_text(const ExprPtr& e);

std::string pred_text(const PredPtr& p, const std::string& src) {
  struct V {
    const std::string& src;
    std::string col(const std::string& c) const { return src + "[" + py_string(c) + "]"; }
    std::string operator()(const Compare& c) const {
      std::string rhs;
      if (auto* lit = std::get_if<Literal>(&c.rhs)) {
        rhs = py_literal(*lit);
      } else if (auto* other = std::get_if<ColumnOperand>(&c.rhs)) {
        rhs = col(other->column);
      } else {
        rhs = expr_text(std::get<ExprPtr>(c.rhs));
      }
      return "(" + col(c.column) + " " + std::string(to_string(c.op)) + " " + rhs + ")";
    }
    std::string operator()(const IsIn& in) const {
      std::string arg;
      if (auto* values = std::get_if<std::vector<Literal>>(&in.set)) {
        arg = "[";
        for (std::size_t i = 0; i < values->size(); ++i) {
          if (i > 0) arg += ", ";
          arg += py_literal((*values)[i]);
        }
        arg += "]";
      } else {
        arg = expr_text(std::get<ExprPtr>(in.set));
      }
      return col(in.column) + ".isin(" + arg + ")";
    }
    std::string operator()(const NullCheck& n) const {
      return col(n.column) + (n.is_null ? ".isnull()" : ".notnull()");
    }
    std::string operator()(const Not& n) const { return "~(" + pred_text(n.inner, src) + ")"; }
    std::string operator()(const And& a) const {
      return "(" + pred_text(a.left, src) + " & " + pred_text(a.right, src) + ")";
    }
    std::string operator()(const Or& o) const {
      return "(" + pred_text(o.left, src) + " | " + pred_text(o.right, src) + ")";
    }
  };
  return std::visit(V{src}, p->node);
}

std::string expr_text(const ExprPtr& e) {
  struct V {
    std::string operator()(const TableRef& t) const { return "db_dict[" + py_string(t.table) + "]"; }
    std::string operator()(const StepRef& s) const { return s.name; }
    std::string operator()(const ColumnSelect& c) const {
      if (c.series && c.columns.size() == 1) return expr_text(c.src) + "[" + py_string(c.columns[0]) + "]";
      return expr_text(c.src) + "[" + py_list(c.columns) + "]";
    }
    std::string operator()(const Filter& f) const {
      std::string src = expr_text(f.src);
      return src + "[" + pred_text(f.pred, src) + "]";
    }
    std::string operator()(const Merge& m) const {
      std::string out = "pd.merge(" + expr_text(m.left) + ", " + expr_text(m.right);
      auto keys = [](const std::vector<std::string>& k) {
        return k.size() == 1 ? py_string(k[0]) : py_list(k);
      };
      if (m.keys == Merge::Keys::on) {
        out += ", on=" + keys(m.left_on);
      } else if (m.keys == Merge::Keys::left_right) {
        out += ", left_on=" + keys(m.left_on) + ", right_on=" + keys(m.right_on);
      }
      out += m.how == JoinHow::left ? ", how='left')" : ", how='inner')";
      return out;
    }
    std::string operator()(const GroupAgg& g) const {
      std::string src = expr_text(g.src);
      if (g.keys.empty()) {
        const Aggregate& a = g.aggs.at(0);
        if (a.fn == AggFn::size) return "len(" + src + ")";
        return src + "[" + py_string(a.column) + "]." + std::string(to_string(a.fn)) + "()";
      }
      std::string gb = src + ".groupby(" + py_list(g.keys) + ")";
      switch (g.style) {
        case GroupAgg::Style::size:
          return gb + ".size().reset_index(name=" + py_string(g.aggs.at(0).name) + ")";
        case GroupAgg::Style::series: {
          const Aggregate& a = g.aggs.at(0);
          std::string out = gb + "[" + py_string(a.column) + "]." + std::string(to_string(a.fn)) + "()";
          return a.name == a.column ? out + ".reset_index()" : out + ".reset_index(name=" + py_string(a.name) + ")";
        }
        case GroupAgg::Style::named: {
          std::string out = gb + ".agg(";
          for (std::size_t i = 0; i < g.aggs.size(); ++i) {
            if (i > 0) out += ", ";
            out += g.aggs[i].name + "=(" + py_string(g.aggs[i].column) + ", " +
                   py_string(to_string(g.aggs[i].fn)) + ")";
          }
          return out + ").reset_index()";
        }
      }
      return src;
    }
    std::string operator()(const Sort& s) const {
      std::string asc = "[";
      for (std::size_t i = 0; i < s.ascending.size(); ++i) {
        if (i > 0) asc += ", ";
        asc += s.ascending[i] ? "True" : "False";
      }
      asc += "]";
      return expr_text(s.src) + ".sort_values(by=" + py_list(s.keys) + ", ascending=" + asc + ")";
    }
    std::string operator()(const Limit& l) const { return expr_text(l.src) + ".head(" + std::to_string(l.n) + ")"; }
    std::string operator()(const Distinct& d) const { return expr_text(d.src) + ".drop_duplicates()"; }
  };
  return std::visit(V{}, e->node);
}

}  // namespace

std::string pretty_print(const Program& program) {
  std::string out;
  for (const auto& step : program.steps) {
    if (!out.empty()) out += "\n";
    out += step.target + " = " + expr_text(step.expr);
  }
  return out;
}

}  // namespace consql::pot
