#include "dsl_gen.hpp"

#include <algorithm>
#include <map>
#include <random>

namespace consql::testing {
namespace {

using namespace consql::pot;

enum class Ty { integer, real, text };

// Column names share one type across all tables so merges line up.
const std::vector<std::pair<std::string, Ty>> kColumnPool = {
    {"id", Ty::integer}, {"k", Ty::integer}, {"n", Ty::integer}, {"x", Ty::real},
    {"y", Ty::real},     {"s", Ty::text},    {"u", Ty::text},
};

struct Col {
  std::string name;
  Ty type;
};

struct Frame {
  ExprPtr expr;
  std::vector<Col> cols;
};

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {
    for (const auto& [name, ty] : kColumnPool) types_[name] = ty;
  }

  DslCase run() {
    make_tables();
    for (int attempt = 0;; ++attempt) {
      steps_.clear();
      Frame out = frame(static_cast<int>(uniform(1, 4)));
      if (chance(0.2)) out = scalar_frame(out);
      steps_.push_back({"result", out.expr});
      Program p{steps_};
      try {
        interpret(p, tables_);
        return {script_, p};
      } catch (const PotError&) {
        if (attempt > 50) throw;
      }
    }
  }

 private:
  std::int64_t uniform(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }
  bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(uniform(0, static_cast<std::int64_t>(v.size()) - 1))];
  }

  Literal literal(Ty ty) {
    if (chance(0.04)) return std::monostate{};
    switch (ty) {
      case Ty::integer: return uniform(-2, 4);
      case Ty::real: return pick(std::vector<double>{-1.5, 0.5, 1.25, 2.0, 3.75, 10.0});
      case Ty::text: return pick(std::vector<std::string>{"a", "b", "c", "B", "o'k", ""});
    }
    return std::monostate{};
  }

  Cell cell(Ty ty) {
    if (chance(0.15)) return std::monostate{};
    Literal v = literal(ty);
    while (std::holds_alternative<std::monostate>(v)) v = literal(ty);
    if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
    if (auto* d = std::get_if<double>(&v)) return *d;
    return std::get<std::string>(v);
  }

  static std::string sql_value(const Cell& c) {
    if (is_null(c)) return "NULL";
    if (auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    if (auto* d = std::get_if<double>(&c)) return format_real(*d);
    std::string out = "'";
    for (char ch : std::get<std::string>(c)) {
      if (ch == '\'') out += "'";
      out.push_back(ch);
    }
    return out + "'";
  }

  void make_tables() {
    int n = static_cast<int>(uniform(1, 3));
    for (int t = 0; t < n; ++t) {
      std::string name = "t" + std::to_string(t);
      std::vector<Col> cols{{"id", Ty::integer}};
      std::vector<std::pair<std::string, Ty>> rest(kColumnPool.begin() + 1, kColumnPool.end());
      std::shuffle(rest.begin(), rest.end(), rng_);
      int extra = static_cast<int>(uniform(1, 3));
      for (int i = 0; i < extra; ++i) cols.push_back({rest[i].first, rest[i].second});

      script_ += "CREATE TABLE " + name + " (";
      for (std::size_t i = 0; i < cols.size(); ++i) {
        static const char* decl[] = {"INTEGER", "REAL", "TEXT"};
        script_ += (i ? ", " : "") + cols[i].name + " " + decl[static_cast<int>(cols[i].type)];
      }
      script_ += ");\n";

      std::vector<std::string> names;
      for (const auto& c : cols) names.push_back(c.name);
      std::vector<Row> rows;
      int nrows = static_cast<int>(uniform(0, 8));
      for (int r = 0; r < nrows; ++r) {
        Row row;
        for (const auto& c : cols) row.push_back(cell(c.type));
        script_ += "INSERT INTO " + name + " VALUES (";
        for (std::size_t i = 0; i < row.size(); ++i) script_ += (i ? ", " : "") + sql_value(row[i]);
        script_ += ");\n";
        rows.push_back(std::move(row));
      }
      tables_.emplace(name, ResultTable(names, rows));
      schema_.push_back({name, cols});
    }
  }

  // Column reference, sometimes with different letter case.
  std::string ref(const std::string& name) {
    if (!chance(0.1)) return name;
    std::string up = name;
    for (auto& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return up;
  }

  Ty type_of(const std::string& name) const {
    auto it = types_.find(name);
    if (it != types_.end()) return it->second;
    // merge suffixes
    if (name.size() > 2 && (name.ends_with("_x") || name.ends_with("_y"))) {
      return type_of(name.substr(0, name.size() - 2));
    }
    throw std::logic_error("untyped column " + name);
  }

  // Output columns of `e`, or nullopt when the interpreter rejects it.
  std::optional<Frame> probe(ExprPtr e) {
    Program p{steps_};
    p.steps.push_back({"__probe", e});
    try {
      ResultTable t = interpret(p, tables_);
      Frame f{e, {}};
      for (const auto& c : t.columns()) f.cols.push_back({c, type_of(c)});
      return f;
    } catch (const PotError&) {
      return std::nullopt;
    }
  }

  Frame hoist(Frame f) {
    if (!chance(0.3)) return f;
    std::string name = "step" + std::to_string(steps_.size() + 1);
    steps_.push_back({name, f.expr});
    f.expr = step_ref(name);
    return f;
  }

  Frame table_frame() {
    const auto& [name, cols] = pick(schema_);
    std::string tname = chance(0.1) ? "T" + name.substr(1) : name;
    return {table(tname), cols};
  }

  std::vector<Col> of_type(const std::vector<Col>& cols, Ty ty) {
    std::vector<Col> out;
    for (const auto& c : cols) {
      if (c.type == ty) out.push_back(c);
    }
    return out;
  }

  std::vector<std::string> subset(const std::vector<Col>& cols, std::size_t min_size) {
    std::vector<std::string> names;
    for (const auto& c : cols) names.push_back(c.name);
    std::shuffle(names.begin(), names.end(), rng_);
    auto n = static_cast<std::size_t>(uniform(static_cast<std::int64_t>(min_size), static_cast<std::int64_t>(names.size())));
    names.resize(n);
    return names;
  }

  Frame frame(int depth) {
    if (depth <= 0) return hoist(table_frame());
    for (int attempt = 0; attempt < 20; ++attempt) {
      Frame src = frame(depth - 1);
      std::optional<Frame> out;
      switch (uniform(0, 7)) {
        case 0: out = probe(filter(src.expr, pred(src.cols, 2))); break;
        case 1: {
          auto cols = subset(src.cols, 1);
          for (auto& c : cols) c = ref(c);
          out = probe(select(src.expr, cols, cols.size() == 1 && chance(0.3)));
          break;
        }
        case 2: out = merge(src, frame(static_cast<int>(uniform(0, depth - 1)))); break;
        case 3: out = group(src); break;
        case 4:
        case 5: {
          auto [sorted, keys, asc] = sort_total(src);
          out = probe(sorted);
          if (out && chance(0.5)) out = probe(limit(sorted, uniform(0, 5)));
          break;
        }
        case 6: out = probe(distinct(src.expr)); break;
        default: out = probe(filter(src.expr, pred(src.cols, 1))); break;
      }
      if (out) return hoist(*out);
    }
    return hoist(table_frame());
  }

  // Sort whose keys cover every column, so ties are identical rows.
  std::tuple<ExprPtr, std::vector<std::string>, std::vector<bool>> sort_total(const Frame& src) {
    auto keys = subset(src.cols, src.cols.size());
    std::vector<bool> asc;
    for (auto& k : keys) {
      asc.push_back(chance(0.6));
      k = ref(k);
    }
    return {sort(src.expr, keys, asc), keys, asc};
  }

  std::optional<Frame> merge(const Frame& l, const Frame& r) {
    JoinHow how = chance(0.3) ? JoinHow::left : JoinHow::inner;
    std::vector<std::string> common;
    for (const auto& a : l.cols) {
      for (const auto& b : r.cols) {
        if (iequals(a.name, b.name)) common.push_back(a.name);
      }
    }
    int mode = static_cast<int>(uniform(0, 2));
    if (mode == 0 && !common.empty()) return probe(merge_natural(l.expr, r.expr, how));
    if (mode == 1 && !common.empty()) return probe(merge_on(l.expr, r.expr, {ref(pick(common))}, how));
    // pair same-typed columns with different names
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& a : l.cols) {
      for (const auto& b : r.cols) {
        if (a.type == b.type) pairs.emplace_back(a.name, b.name);
      }
    }
    if (pairs.empty()) return std::nullopt;
    auto [a, b] = pick(pairs);
    return probe(merge_lr(l.expr, r.expr, {ref(a)}, {ref(b)}, how));
  }

  std::string agg_name() {
    std::string name = "g" + std::to_string(next_agg_++);
    return name;
  }

  std::optional<Frame> group(const Frame& src) {
    auto keys = subset(src.cols, 1);
    if (keys.size() > 2) keys.resize(2);
    std::vector<Col> rest;
    for (const auto& c : src.cols) {
      if (std::find(keys.begin(), keys.end(), c.name) == keys.end()) rest.push_back(c);
    }
    for (auto& k : keys) k = ref(k);
    int style = static_cast<int>(uniform(0, 2));
    if (style == 0 || rest.empty()) {
      std::string name = agg_name();
      types_[name] = Ty::integer;
      return probe(group_agg(src.expr, keys, {{AggFn::size, "", name}}, GroupAgg::Style::size));
    }
    if (style == 1) {
      // series style keeps the column name, so only type-preserving functions
      const Col& c = pick(rest);
      std::vector<AggFn> fns{AggFn::min, AggFn::max};
      if (c.type != Ty::text) fns.push_back(AggFn::sum);
      return probe(group_agg(src.expr, keys, {{pick(fns), c.name, c.name}}, GroupAgg::Style::series));
    }
    std::vector<Aggregate> aggs;
    int n = static_cast<int>(uniform(1, 2));
    for (int i = 0; i < n; ++i) {
      const Col& c = pick(rest);
      std::vector<AggFn> fns{AggFn::count, AggFn::size, AggFn::min, AggFn::max};
      if (c.type != Ty::text) {
        fns.push_back(AggFn::sum);
        fns.push_back(AggFn::mean);
      }
      AggFn fn = pick(fns);
      std::string name = agg_name();
      Ty ty = fn == AggFn::count || fn == AggFn::size ? Ty::integer : fn == AggFn::mean ? Ty::real : c.type;
      types_[name] = ty;
      aggs.push_back({fn, ref(c.name), name});
    }
    return probe(group_agg(src.expr, keys, aggs, GroupAgg::Style::named));
  }

  // A no-key aggregate of some column of `src`.
  Frame scalar_frame(const Frame& src) {
    if (chance(0.25)) {
      types_["size"] = Ty::integer;
      if (auto f = probe(group_agg(src.expr, {}, {{AggFn::size, "", "size"}}, GroupAgg::Style::size))) return *f;
    }
    const Col& c = pick(src.cols);
    std::vector<AggFn> fns{AggFn::min, AggFn::max};
    if (c.type != Ty::text) fns.push_back(AggFn::sum);
    if (auto f = probe(group_agg(src.expr, {}, {{pick(fns), c.name, c.name}}, GroupAgg::Style::series))) return *f;
    return src;
  }

  // Small frame with a column of type `ty`, for membership and scalar operands.
  std::optional<Frame> operand_frame(Ty ty) {
    Frame base = table_frame();
    if (chance(0.4)) {
      if (auto f = probe(filter(base.expr, pred(base.cols, 0)))) base = *f;
    }
    auto cols = of_type(base.cols, ty);
    if (cols.empty()) return std::nullopt;
    return Frame{base.expr, {pick(cols)}};
  }

  PredPtr pred(const std::vector<Col>& cols, int depth) {
    if (depth > 0 && chance(0.35)) {
      switch (uniform(0, 2)) {
        case 0: return negate(pred(cols, depth - 1));
        case 1: return conj(pred(cols, depth - 1), pred(cols, depth - 1));
        default: return disj(pred(cols, depth - 1), pred(cols, depth - 1));
      }
    }
    const Col& c = pick(cols);
    std::string name = ref(c.name);
    switch (uniform(0, 6)) {
      case 0: return null_check(name, chance(0.5));
      case 1: {
        std::vector<Literal> values;
        int n = static_cast<int>(uniform(0, 3));
        for (int i = 0; i < n; ++i) values.push_back(literal(c.type));
        return is_in(name, values);
      }
      case 2:
        if (auto f = operand_frame(c.type)) {
          return is_in(name, select(f->expr, {f->cols[0].name}, true));
        }
        break;
      case 3: {
        auto same = of_type(cols, c.type);
        return compare(name, random_op(), ColumnOperand{ref(pick(same).name)});
      }
      case 4:
        if (auto f = operand_frame(c.type)) {
          std::vector<AggFn> fns{AggFn::min, AggFn::max};
          if (c.type != Ty::text) fns.push_back(AggFn::sum);
          const std::string& col = f->cols[0].name;
          return compare(name, random_op(),
                         group_agg(f->expr, {}, {{pick(fns), col, col}}, GroupAgg::Style::series));
        }
        break;
      default: break;
    }
    return compare(name, random_op(), literal(c.type));
  }

  CmpOp random_op() {
    return pick(std::vector<CmpOp>{CmpOp::eq, CmpOp::ne, CmpOp::lt, CmpOp::le, CmpOp::gt, CmpOp::ge});
  }

  std::mt19937_64 rng_;
  std::map<std::string, Ty> types_;
  std::vector<std::pair<std::string, std::vector<Col>>> schema_;
  Tables tables_;
  std::string script_;
  std::vector<Step> steps_;
  int next_agg_ = 0;
};

}  // namespace

DslCase generate_dsl_case(std::uint64_t seed) { return Generator(seed).run(); }

}  // namespace consql::testing
