// Parser for the dataframe DSL. Source is tokenized as a small Python subset,
// parsed into generic Python nodes, then translated into DSL expressions.
// Anything outside the whitelist raises UnsupportedConstruct with its line.
#include <charconv>
#include <map>

#include "consql/pot.hpp"
#include "consql/prompts.hpp"
#include "pot_internal.hpp"

namespace consql::pot {
namespace {

// ---------------------------------------------------------------------------
// Tokens

enum class Tok { name, integer, real, string, op, newline, end };

struct Token {
  Tok kind;
  std::string text;  // identifier, operator, or decoded string
  std::int64_t ival = 0;
  double dval = 0;
  int line = 0;
};

class Lexer {
 public:
  Lexer(std::string_view src, const std::vector<std::string>& lines) : src_(src), lines_(lines) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    int depth = 0;
    bool line_start = true;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') {
        if (depth == 0 && !out.empty() && out.back().kind != Tok::newline) {
          out.push_back({Tok::newline, "", 0, 0, line_});
        }
        ++line_;
        ++pos_;
        line_start = true;
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r') {
        if (line_start && depth == 0 && (c == ' ' || c == '\t')) {
          // Indentation at statement start means a nested block.
          std::size_t p = pos_;
          while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t')) ++p;
          if (p < src_.size() && src_[p] != '\n' && src_[p] != '#' && src_[p] != '\r') {
            fail("unexpected indentation");
          }
        }
        ++pos_;
        continue;
      }
      line_start = false;
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
        continue;
      }
      if (c == '\\' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') {
        pos_ += 2;
        ++line_;
        continue;
      }
      int tok_line = line_;
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t b = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
          ++pos_;
        }
        std::string word(src_.substr(b, pos_ - b));
        if (pos_ < src_.size() && (src_[pos_] == '\'' || src_[pos_] == '"')) {
          if (word == "r" || word == "R") {
            out.push_back(string_token(true, tok_line));
            continue;
          }
          fail("string prefix '" + word + "'");
        }
        out.push_back({Tok::name, std::move(word), 0, 0, tok_line});
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        out.push_back(number_token(tok_line));
        continue;
      }
      if (c == '\'' || c == '"') {
        out.push_back(string_token(false, tok_line));
        continue;
      }
      static constexpr std::string_view kTwo[] = {"==", "!=", "<=", ">=", "**", "//"};
      std::string op(1, c);
      for (auto two : kTwo) {
        if (src_.compare(pos_, 2, two) == 0) op = std::string(two);
      }
      static constexpr std::string_view kOne = "()[]{},.:=<>&|~-+*/%";
      if (op.size() == 1 && kOne.find(c) == std::string_view::npos) fail("unexpected character '" + op + "'");
      if (op == "(" || op == "[" || op == "{") ++depth;
      if (op == ")" || op == "]" || op == "}") --depth;
      if (depth < 0) fail("unbalanced brackets");
      pos_ += op.size();
      out.push_back({Tok::op, std::move(op), 0, 0, tok_line});
    }
    if (depth != 0) fail("unbalanced brackets");
    if (!out.empty() && out.back().kind != Tok::newline) out.push_back({Tok::newline, "", 0, 0, line_});
    out.push_back({Tok::end, "", 0, 0, line_});
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw UnsupportedConstruct(line_, line_text(line_), why);
  }
  std::string line_text(int line) const {
    return line >= 1 && static_cast<std::size_t>(line) <= lines_.size() ? lines_[line - 1] : "";
  }

  Token number_token(int line) {
    std::size_t b = pos_;
    bool real = false;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '_') {
        ++pos_;
      } else if (c == '.' || c == 'e' || c == 'E') {
        real = true;
        ++pos_;
        if ((c == 'e' || c == 'E') && pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      } else {
        break;
      }
    }
    std::string text(src_.substr(b, pos_ - b));
    std::erase(text, '_');
    Token t{real ? Tok::real : Tok::integer, text, 0, 0, line};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    std::from_chars_result r{};
    if (real) {
      r = std::from_chars(first, last, t.dval);
    } else {
      r = std::from_chars(first, last, t.ival);
    }
    if (r.ec != std::errc() || r.ptr != last) fail("bad number '" + text + "'");
    return t;
  }

  Token string_token(bool raw, int line) {
    char quote = src_[pos_];
    if (src_.compare(pos_, 3, std::string(3, quote)) == 0) fail("triple-quoted string");
    ++pos_;
    std::string value;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') fail("unterminated string");
      char c = src_[pos_++];
      if (c == quote) break;
      if (c == '\\' && !raw) {
        if (pos_ >= src_.size()) fail("unterminated string");
        char e = src_[pos_++];
        switch (e) {
          case 'n': value.push_back('\n'); break;
          case 't': value.push_back('\t'); break;
          case 'r': value.push_back('\r'); break;
          case '\\': value.push_back('\\'); break;
          case '\'': value.push_back('\''); break;
          case '"': value.push_back('"'); break;
          default: value.push_back('\\'); value.push_back(e); break;
        }
      } else {
        value.push_back(c);
      }
    }
    return {Tok::string, std::move(value), 0, 0, line};
  }

  std::string_view src_;
  const std::vector<std::string>& lines_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

// ---------------------------------------------------------------------------
// Generic Python nodes

struct Py;
using PyPtr = std::shared_ptr<Py>;

struct Py {
  enum Kind { name, integer, real, string, none, boolean, list, tuple, subscript, attribute, call, unary, binary, compare };
  Kind kind;
  int line = 0;
  std::string text;  // name / attribute / operator / string value
  std::int64_t ival = 0;
  double dval = 0;
  std::vector<PyPtr> items;  // list elements, call args, operands
  std::vector<std::pair<std::string, PyPtr>> kwargs;
};

PyPtr py(Py::Kind kind, int line) {
  auto p = std::make_shared<Py>();
  p->kind = kind;
  p->line = line;
  return p;
}

class Parser {
 public:
  Parser(std::vector<Token> toks, const std::vector<std::string>& lines)
      : toks_(std::move(toks)), lines_(lines) {}

  bool at_end() const { return peek().kind == Tok::end; }
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool is_op(std::string_view op, std::size_t ahead = 0) const {
    return peek(ahead).kind == Tok::op && peek(ahead).text == op;
  }
  void expect_op(std::string_view op) {
    if (!is_op(op)) fail(peek().line, "expected '" + std::string(op) + "'");
    next();
  }
  void skip_line() {
    while (peek().kind != Tok::newline && peek().kind != Tok::end) next();
    if (peek().kind == Tok::newline) next();
  }
  void expect_newline() {
    if (peek().kind != Tok::newline) fail(peek().line, "unexpected '" + peek().text + "'");
    next();
  }

  [[noreturn]] void fail(int line, const std::string& why) const {
    std::string text = line >= 1 && static_cast<std::size_t>(line) <= lines_.size() ? lines_[line - 1] : "";
    throw UnsupportedConstruct(line, text, why);
  }

  PyPtr expression() { return comparison(); }

 private:
  PyPtr comparison() {
    PyPtr left = bit_or();
    static constexpr std::string_view kCmp[] = {"==", "!=", "<", "<=", ">", ">="};
    for (auto op : kCmp) {
      if (is_op(op)) {
        int line = next().line;
        PyPtr right = bit_or();
        for (auto op2 : kCmp) {
          if (is_op(op2)) fail(peek().line, "chained comparison");
        }
        auto node = py(Py::compare, line);
        node->text = std::string(op);
        node->items = {left, right};
        return node;
      }
    }
    if (peek().kind == Tok::name && (peek().text == "in" || peek().text == "not" || peek().text == "is" ||
                                     peek().text == "and" || peek().text == "or" || peek().text == "if")) {
      fail(peek().line, "operator '" + peek().text + "'");
    }
    return left;
  }

  PyPtr bit_or() {
    PyPtr left = bit_and();
    while (is_op("|")) {
      int line = next().line;
      auto node = py(Py::binary, line);
      node->text = "|";
      node->items = {left, bit_and()};
      left = node;
    }
    return left;
  }

  PyPtr bit_and() {
    PyPtr left = unary();
    while (is_op("&")) {
      int line = next().line;
      auto node = py(Py::binary, line);
      node->text = "&";
      node->items = {left, unary()};
      left = node;
    }
    return left;
  }

  PyPtr unary() {
    if (is_op("~") || is_op("-")) {
      Token t = next();
      auto node = py(Py::unary, t.line);
      node->text = t.text;
      node->items = {unary()};
      return node;
    }
    for (std::string_view op : {"+", "*", "/", "%", "**", "//"}) {
      if (is_op(op)) fail(peek().line, "arithmetic operator '" + std::string(op) + "'");
    }
    return postfix();
  }

  PyPtr postfix() {
    PyPtr node = atom();
    while (true) {
      if (is_op("[")) {
        int line = next().line;
        PyPtr index = expression();
        if (is_op(":") || is_op(",")) fail(line, "slicing");
        expect_op("]");
        auto sub = py(Py::subscript, line);
        sub->items = {node, index};
        node = sub;
      } else if (is_op(".")) {
        int line = next().line;
        if (peek().kind != Tok::name) fail(line, "expected attribute name");
        auto attr = py(Py::attribute, line);
        attr->text = next().text;
        attr->items = {node};
        node = attr;
      } else if (is_op("(")) {
        int line = next().line;
        auto call = py(Py::call, line);
        call->items = {node};
        while (!is_op(")")) {
          if (peek().kind == Tok::name && is_op("=", 1)) {
            std::string key = next().text;
            next();
            call->kwargs.emplace_back(std::move(key), expression());
          } else {
            if (!call->kwargs.empty()) fail(line, "positional argument after keyword argument");
            call->items.push_back(expression());
          }
          if (!is_op(",")) break;
          next();
        }
        expect_op(")");
        node = call;
      } else {
        return node;
      }
    }
  }

  PyPtr atom() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::name: {
        static constexpr std::string_view kReserved[] = {
            "for", "while", "if", "else", "elif", "def", "class", "lambda", "return", "with",
            "try", "except", "import", "from", "not", "and", "or", "in", "is", "yield",
            "global", "del", "pass", "raise", "assert", "async", "await"};
        for (auto kw : kReserved) {
          if (t.text == kw) fail(t.line, "keyword '" + t.text + "'");
        }
        Token n = next();
        if (n.text == "None") return py(Py::none, n.line);
        if (n.text == "True" || n.text == "False") {
          auto b = py(Py::boolean, n.line);
          b->ival = n.text == "True";
          return b;
        }
        auto node = py(Py::name, n.line);
        node->text = n.text;
        return node;
      }
      case Tok::integer: {
        Token n = next();
        auto node = py(Py::integer, n.line);
        node->ival = n.ival;
        return node;
      }
      case Tok::real: {
        Token n = next();
        auto node = py(Py::real, n.line);
        node->dval = n.dval;
        return node;
      }
      case Tok::string: {
        Token n = next();
        auto node = py(Py::string, n.line);
        node->text = n.text;
        // Adjacent literals concatenate.
        while (peek().kind == Tok::string) node->text += next().text;
        return node;
      }
      case Tok::op: {
        if (t.text == "(") {
          int line = next().line;
          if (is_op(")")) fail(line, "empty tuple");
          PyPtr first = expression();
          if (is_op(",")) {
            auto tup = py(Py::tuple, line);
            tup->items.push_back(first);
            while (is_op(",")) {
              next();
              if (is_op(")")) break;
              tup->items.push_back(expression());
            }
            expect_op(")");
            return tup;
          }
          expect_op(")");
          return first;
        }
        if (t.text == "[") {
          int line = next().line;
          auto list = py(Py::list, line);
          while (!is_op("]")) {
            list->items.push_back(expression());
            if (!is_op(",")) break;
            next();
          }
          expect_op("]");
          return list;
        }
        if (t.text == "{") fail(t.line, "dict or set literal");
        fail(t.line, "unexpected '" + t.text + "'");
      }
      case Tok::newline:
      case Tok::end:
        fail(t.line, "unexpected end of statement");
    }
    fail(t.line, "unexpected token");
  }

  std::vector<Token> toks_;
  const std::vector<std::string>& lines_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Translation to the DSL

bool is_db_dict(const PyPtr& n) {
  return n->kind == Py::name && (n->text == "db_dict" || n->text == "database");
}

class Translator {
 public:
  Translator(const Parser& parser) : parser_(parser) {}

  [[noreturn]] void fail(const PyPtr& at, const std::string& why) const { parser_.fail(at->line, why); }

  void define_step(const std::string& target, ExprPtr expr, int line) {
    check_new_target(target, line);
    program_.steps.push_back({target, std::move(expr)});
  }
  void define_literal(const std::string& target, Literal value, int line) {
    check_new_target(target, line);
    literals_.emplace(target, std::move(value));
  }
  bool is_defined(const std::string& name) const {
    return literals_.count(name) > 0 || has_step(name);
  }
  Program take() { return std::move(program_); }

  std::optional<Literal> literal(const PyPtr& n) const {
    switch (n->kind) {
      case Py::integer: return Literal(n->ival);
      case Py::real: return Literal(n->dval);
      case Py::string: return Literal(n->text);
      case Py::none: return Literal(std::monostate{});
      case Py::boolean: return Literal(n->ival);
      case Py::unary:
        if (n->text == "-") {
          auto inner = literal(n->items[0]);
          if (inner && std::holds_alternative<std::int64_t>(*inner)) return Literal(-std::get<std::int64_t>(*inner));
          if (inner && std::holds_alternative<double>(*inner)) return Literal(-std::get<double>(*inner));
        }
        return std::nullopt;
      case Py::name:
        if (auto it = literals_.find(n->text); it != literals_.end()) return it->second;
        return std::nullopt;
      default: return std::nullopt;
    }
  }

  ExprPtr frame(const PyPtr& n) {
    switch (n->kind) {
      case Py::name:
        if (has_step(n->text)) return step_ref(n->text);
        if (is_db_dict(n)) fail(n, "the table dictionary must be subscripted with a table name");
        if (literals_.count(n->text)) fail(n, "'" + n->text + "' is a value, not a table");
        throw UndefinedName(n->text);
      case Py::subscript: return subscript(n);
      case Py::call: return call(n);
      case Py::attribute: fail(n, "attribute '" + n->text + "' outside a call");
      default: fail(n, "expected a table expression");
    }
  }

  bool is_scalar(const ExprPtr& e) const {
    if (auto* g = std::get_if<GroupAgg>(&e->node)) return g->keys.empty() && g->aggs.size() == 1;
    if (auto* s = std::get_if<StepRef>(&e->node)) return is_scalar(program_.step(s->name).expr);
    return false;
  }

 private:
  bool has_step(const std::string& name) const {
    for (const auto& s : program_.steps) {
      if (s.target == name) return true;
    }
    return false;
  }

  void check_new_target(const std::string& target, int line) const {
    if (target == "db_dict" || target == "database" || target == "pd") {
      parser_.fail(line, "assignment to '" + target + "'");
    }
    if (is_defined(target)) parser_.fail(line, "'" + target + "' is assigned twice");
  }

  std::string string_arg(const PyPtr& n, std::string_view what) const {
    if (n->kind != Py::string) fail(n, std::string(what) + " must be a string");
    return n->text;
  }

  std::vector<std::string> string_list(const PyPtr& n, std::string_view what) const {
    if (n->kind == Py::string) return {n->text};
    if (n->kind != Py::list && n->kind != Py::tuple) fail(n, std::string(what) + " must be a string or list of strings");
    std::vector<std::string> out;
    for (const auto& item : n->items) out.push_back(string_arg(item, what));
    if (out.empty()) fail(n, std::string(what) + " is empty");
    return out;
  }

  ExprPtr subscript(const PyPtr& n) {
    const PyPtr& base = n->items[0];
    const PyPtr& index = n->items[1];
    if (is_db_dict(base)) return table(string_arg(index, "table name"));
    if (index->kind == Py::string) return select(frame(base), {index->text}, true);
    if (index->kind == Py::list) return select(frame(base), string_list(index, "column list"), false);
    ExprPtr src = frame(base);
    return filter(src, predicate(index, src));
  }

  // Column of `src` named by a node like src['c'] or src.c.
  std::optional<std::string> column_of(const PyPtr& n, const ExprPtr& src) {
    if (n->kind == Py::subscript && n->items[1]->kind == Py::string && !is_db_dict(n->items[0])) {
      if (same(frame(n->items[0]), src)) return n->items[1]->text;
      fail(n, "mask refers to a different table than the one it filters");
    }
    if (n->kind == Py::attribute && n->items[0]->kind != Py::call) {
      if (n->items[0]->kind == Py::name && has_step(n->items[0]->text) && same(frame(n->items[0]), src)) {
        return n->text;
      }
    }
    return std::nullopt;
  }

  PredPtr predicate(const PyPtr& n, const ExprPtr& src) {
    switch (n->kind) {
      case Py::binary: {
        PredPtr l = predicate(n->items[0], src);
        PredPtr r = predicate(n->items[1], src);
        return n->text == "&" ? conj(l, r) : disj(l, r);
      }
      case Py::unary:
        if (n->text == "~") return negate(predicate(n->items[0], src));
        break;
      case Py::compare: return comparison(n, src);
      case Py::call: {
        const PyPtr& fn = n->items[0];
        if (fn->kind != Py::attribute) break;
        auto column = column_of(fn->items[0], src);
        if (!column) break;
        const std::string& method = fn->text;
        if (method == "isin") {
          if (n->items.size() != 2 || !n->kwargs.empty()) fail(n, "isin takes one argument");
          const PyPtr& arg = n->items[1];
          if (arg->kind == Py::list || arg->kind == Py::tuple) {
            std::vector<Literal> values;
            for (const auto& item : arg->items) {
              auto lit = literal(item);
              if (!lit) fail(item, "isin list must hold literals");
              values.push_back(*lit);
            }
            return is_in(*column, std::move(values));
          }
          return is_in(*column, frame(arg));
        }
        if (method == "isnull" || method == "isna" || method == "notnull" || method == "notna") {
          if (n->items.size() != 1 || !n->kwargs.empty()) fail(n, method + " takes no arguments");
          return null_check(*column, method == "isnull" || method == "isna");
        }
        fail(n, "method '" + method + "' in a mask");
      }
      default: break;
    }
    fail(n, "unsupported mask expression");
  }

  PredPtr comparison(const PyPtr& n, const ExprPtr& src) {
    static const std::map<std::string, CmpOp> kOps = {{"==", CmpOp::eq}, {"!=", CmpOp::ne}, {"<", CmpOp::lt},
                                                      {"<=", CmpOp::le}, {">", CmpOp::gt},  {">=", CmpOp::ge}};
    static const std::map<CmpOp, CmpOp> kFlip = {{CmpOp::eq, CmpOp::eq}, {CmpOp::ne, CmpOp::ne},
                                                 {CmpOp::lt, CmpOp::gt}, {CmpOp::le, CmpOp::ge},
                                                 {CmpOp::gt, CmpOp::lt}, {CmpOp::ge, CmpOp::le}};
    CmpOp op = kOps.at(n->text);
    PyPtr lhs = n->items[0];
    PyPtr rhs = n->items[1];
    auto column = column_of(lhs, src);
    if (!column) {
      column = column_of(rhs, src);
      if (!column) fail(n, "comparison needs a column of the filtered table");
      std::swap(lhs, rhs);
      op = kFlip.at(op);
    }
    if (auto lit = literal(rhs)) return compare(*column, op, *lit);
    if (auto other = column_of(rhs, src)) return compare(*column, op, ColumnOperand{*other});
    ExprPtr value = frame(rhs);
    if (!is_scalar(value)) fail(rhs, "comparison against a table that is not a single aggregate value");
    return compare(*column, op, value);
  }

  struct GroupBy {
    ExprPtr src;
    std::vector<std::string> keys;
  };

  std::optional<GroupBy> groupby(const PyPtr& n) {
    if (n->kind != Py::call || n->items[0]->kind != Py::attribute || n->items[0]->text != "groupby") {
      return std::nullopt;
    }
    if (n->items.size() != 2) fail(n, "groupby takes one positional argument");
    for (const auto& [key, value] : n->kwargs) {
      bool ok = (key == "as_index" && value->kind == Py::boolean && value->ival == 0) ||
                (key == "sort" && value->kind == Py::boolean);
      if (!ok) fail(n, "groupby argument '" + key + "'");
    }
    return GroupBy{frame(n->items[0]->items[0]), string_list(n->items[1], "groupby keys")};
  }

  // Aggregation chains, optionally wrapped in reset_index(name=...).
  std::optional<ExprPtr> aggregation(const PyPtr& n, const std::optional<std::string>& reset_name) {
    if (n->kind != Py::call) return std::nullopt;
    const PyPtr& fn = n->items[0];
    if (fn->kind == Py::name && fn->text == "len") {
      if (n->items.size() != 2 || reset_name) fail(n, "len takes one table");
      return group_agg(frame(n->items[1]), {}, {{AggFn::size, "", "size"}}, GroupAgg::Style::size);
    }
    if (fn->kind != Py::attribute) return std::nullopt;
    const PyPtr& receiver = fn->items[0];
    const std::string& method = fn->text;

    if (method == "size") {
      auto gb = groupby(receiver);
      if (!gb) return std::nullopt;
      if (n->items.size() != 1) fail(n, "size takes no arguments");
      return group_agg(gb->src, gb->keys, {{AggFn::size, "", reset_name.value_or("size")}},
                       GroupAgg::Style::size);
    }
    if (method == "agg") {
      auto gb = groupby(receiver);
      if (!gb) fail(n, "agg is only supported after groupby");
      if (n->items.size() != 1 || n->kwargs.empty()) fail(n, "agg needs named aggregations like n=('col', 'count')");
      std::vector<Aggregate> aggs;
      for (const auto& [name, spec] : n->kwargs) {
        if (spec->kind != Py::tuple || spec->items.size() != 2) fail(spec, "named aggregation must be ('col', 'fn')");
        auto agg_fn = agg_fn_from_string(string_arg(spec->items[1], "aggregation function"));
        if (!agg_fn) fail(spec, "aggregation function '" + spec->items[1]->text + "'");
        aggs.push_back({*agg_fn, string_arg(spec->items[0], "aggregation column"), name});
      }
      return group_agg(gb->src, gb->keys, std::move(aggs), GroupAgg::Style::named);
    }
    auto agg_fn = agg_fn_from_string(method);
    if (!agg_fn || *agg_fn == AggFn::size) return std::nullopt;
    if (receiver->kind != Py::subscript || receiver->items[1]->kind != Py::string) return std::nullopt;
    if (n->items.size() != 1 || !n->kwargs.empty()) fail(n, method + " takes no arguments");
    const std::string column = receiver->items[1]->text;
    if (auto gb = groupby(receiver->items[0])) {
      return group_agg(gb->src, gb->keys, {{*agg_fn, column, reset_name.value_or(column)}},
                       GroupAgg::Style::series);
    }
    if (reset_name) fail(n, "reset_index on a single value");
    return group_agg(frame(receiver->items[0]), {}, {{*agg_fn, column, column}}, GroupAgg::Style::series);
  }

  ExprPtr call(const PyPtr& n) {
    const PyPtr& fn = n->items[0];
    std::vector<PyPtr> args(n->items.begin() + 1, n->items.end());
    auto kw = [&](std::string_view key) -> PyPtr {
      for (const auto& [k, v] : n->kwargs) {
        if (k == key) return v;
      }
      return nullptr;
    };
    auto allow_kwargs = [&](std::initializer_list<std::string_view> allowed) {
      for (const auto& [k, _] : n->kwargs) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) fail(n, "argument '" + k + "'");
      }
    };

    if (auto agg = aggregation(n, std::nullopt)) return *agg;

    if (fn->kind != Py::attribute) fail(n, "call to a function outside the supported set");
    const PyPtr& receiver = fn->items[0];
    const std::string& method = fn->text;

    if (method == "merge") {
      ExprPtr left, right;
      if (receiver->kind == Py::name && receiver->text == "pd") {
        if (args.size() != 2) fail(n, "pd.merge takes two tables");
        left = frame(args[0]);
        right = frame(args[1]);
      } else {
        if (args.size() != 1) fail(n, "merge takes one table");
        left = frame(receiver);
        right = frame(args[0]);
      }
      allow_kwargs({"on", "left_on", "right_on", "how"});
      JoinHow how = JoinHow::inner;
      if (PyPtr h = kw("how")) {
        std::string s = string_arg(h, "how");
        if (s == "left") {
          how = JoinHow::left;
        } else if (s != "inner") {
          fail(h, "join type '" + s + "'");
        }
      }
      PyPtr on = kw("on");
      PyPtr lo = kw("left_on");
      PyPtr ro = kw("right_on");
      if (on && (lo || ro)) fail(n, "merge with both on and left_on/right_on");
      if (on) return merge_on(left, right, string_list(on, "on"), how);
      if (lo || ro) {
        if (!lo || !ro) fail(n, "left_on and right_on must be given together");
        return merge_lr(left, right, string_list(lo, "left_on"), string_list(ro, "right_on"), how);
      }
      return merge_natural(left, right, how);
    }
    if (method == "sort_values") {
      allow_kwargs({"by", "ascending"});
      PyPtr by = kw("by");
      if (!by && args.size() == 1) by = args[0];
      if (!by || args.size() > (kw("by") ? 0u : 1u)) fail(n, "sort_values needs by=");
      std::vector<std::string> keys = string_list(by, "sort keys");
      std::vector<bool> asc(keys.size(), true);
      if (PyPtr a = kw("ascending")) {
        if (a->kind == Py::boolean) {
          asc.assign(keys.size(), a->ival != 0);
        } else if (a->kind == Py::list && a->items.size() == keys.size()) {
          for (std::size_t i = 0; i < keys.size(); ++i) {
            if (a->items[i]->kind != Py::boolean) fail(a, "ascending must hold booleans");
            asc[i] = a->items[i]->ival != 0;
          }
        } else {
          fail(a, "ascending must be a boolean or a list matching by");
        }
      }
      return sort(frame(receiver), std::move(keys), std::move(asc));
    }
    if (method == "head") {
      allow_kwargs({"n"});
      std::int64_t count = 5;
      PyPtr arg = args.empty() ? kw("n") : args[0];
      if (args.size() > 1) fail(n, "head takes one argument");
      if (arg) {
        if (arg->kind != Py::integer || arg->ival < 0) fail(arg, "head needs a non-negative integer");
        count = arg->ival;
      }
      return limit(frame(receiver), count);
    }
    if (method == "drop_duplicates") {
      if (!args.empty() || !n->kwargs.empty()) fail(n, "drop_duplicates with arguments");
      return distinct(frame(receiver));
    }
    if (method == "reset_index") {
      allow_kwargs({"name", "drop"});
      std::optional<std::string> name;
      if (PyPtr nm = kw("name")) name = string_arg(nm, "name");
      if (auto agg = aggregation(receiver, name)) {
        if (name && std::get<GroupAgg>((*agg)->node).style == GroupAgg::Style::named) {
          fail(n, "reset_index(name=...) after agg");
        }
        return *agg;
      }
      if (groupby(receiver)) fail(n, "groupby without an aggregation");
      if (PyPtr d = kw("drop"); d && d->kind == Py::boolean && d->ival == 1 && !name) return frame(receiver);
      fail(n, "reset_index outside an aggregation");
    }
    if (method == "copy" && args.empty() && n->kwargs.empty()) return frame(receiver);
    fail(n, "method '" + method + "'");
  }

  const Parser& parser_;
  Program program_;
  std::map<std::string, Literal> literals_;
};

std::vector<std::string> split_lines(std::string_view src) {
  std::vector<std::string> lines;
  std::size_t b = 0;
  while (b <= src.size()) {
    auto e = src.find('\n', b);
    if (e == std::string_view::npos) e = src.size();
    std::string line(src.substr(b, e - b));
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    lines.push_back(std::move(line));
    b = e + 1;
  }
  return lines;
}

// Removes the indentation shared by every non-blank line.
std::string dedent(std::string_view src) {
  auto lines = split_lines(src);
  std::size_t common = std::string::npos;
  for (const auto& l : lines) {
    auto first = l.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    common = std::min(common, first);
  }
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) out.push_back('\n');
    if (common != std::string::npos && lines[i].size() >= common) out += lines[i].substr(common);
  }
  return out;
}

}  // namespace

Program parse_program(std::string_view source) {
  std::string src = dedent(source);
  auto lines = split_lines(src);
  Parser parser(Lexer(src, lines).run(), lines);
  Translator tr(parser);

  while (!parser.at_end()) {
    const Token& t = parser.peek();
    if (t.kind == Tok::newline) {
      parser.next();
      continue;
    }
    if (t.kind == Tok::name && (t.text == "import" || t.text == "from")) {
      parser.skip_line();
      continue;
    }
    if (t.kind == Tok::name && parser.is_op("=", 1)) {
      Token target = parser.next();
      parser.next();
      PyPtr value = parser.expression();
      parser.expect_newline();
      if (auto lit = tr.literal(value)) {
        tr.define_literal(target.text, *lit, target.line);
      } else {
        tr.define_step(target.text, tr.frame(value), target.line);
      }
      continue;
    }
    PyPtr value = parser.expression();
    parser.expect_newline();
    // Display statements are ignored: a bare name or print(...).
    if (value->kind == Py::name && tr.is_defined(value->text)) continue;
    if (value->kind == Py::call && value->items[0]->kind == Py::name && value->items[0]->text == "print") continue;
    parser.fail(value->line, "statement is not an assignment");
  }
  Program program = tr.take();
  if (program.steps.empty()) throw NoCodeFound();
  return program;
}

Program parse_codeblocks(std::string_view text) {
  std::string code;
  for (std::string_view tag : {"python", "py"}) {
    for (const auto& block : prompts::extract_fenced(text, tag)) {
      if (!code.empty()) code += "\n";
      code += block.content;
    }
  }
  if (code.find_first_not_of(" \t\r\n") == std::string::npos) throw NoCodeFound();
  return parse_program(code);
}

}  // namespace consql::pot
