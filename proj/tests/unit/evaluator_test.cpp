#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "consql/evaluator.hpp"
#include "eval_cases.hpp"
#include "fixtures.hpp"

using namespace consql;
using namespace consql::evaluator;
using consql::testing::TempDir;

namespace {

struct EmpDb {
  TempDir dir;
  std::shared_ptr<sandbox::DatabaseCatalog> catalog = [this] {
    auto c = std::make_shared<sandbox::DatabaseCatalog>();
    c->add("emp", consql::testing::build_database(dir / "emp.sqlite", consql::testing::employee_script()));
    return c;
  }();

  std::vector<TaskInstance> instances(const std::vector<consql::testing::EvalCase>& cases) const {
    std::vector<TaskInstance> out;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      out.push_back({"e" + std::to_string(i), "q", std::nullopt, "emp", cases[i].gold, std::nullopt});
    }
    return out;
  }
  static std::vector<RunRecord> records(const std::vector<consql::testing::EvalCase>& cases) {
    std::vector<RunRecord> out;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      RunRecord r;
      r.instance_id = "e" + std::to_string(i);
      r.db_id = "emp";
      r.final_sql = SqlQuery(cases[i].pred);
      out.push_back(std::move(r));
    }
    return out;
  }
};

Cell i(std::int64_t v) { return Cell{v}; }
Cell s(std::string v) { return Cell{std::move(v)}; }

ResultTable table(std::size_t ncol, std::vector<Row> rows) {
  std::vector<std::string> cols;
  for (std::size_t c = 0; c < ncol; ++c) cols.push_back("c" + std::to_string(c));
  return ResultTable(cols, std::move(rows));
}

ScoredRecord scored(std::string id, bool ok) {
  return {std::move(id), {ok, ok ? VerdictReason::exact : VerdictReason::value_mismatch, false},
          ok ? Outcome::correct : Outcome::incorrect, ""};
}

}  // namespace

TEST_CASE("ORDER BY detection") {
  CHECK(has_outer_order_by("SELECT a FROM t ORDER BY a"));
  CHECK(has_outer_order_by("select a from t order\n  by a desc limit 1"));
  CHECK_FALSE(has_outer_order_by("SELECT a FROM (SELECT a FROM t ORDER BY a)"));
  CHECK_FALSE(has_outer_order_by("SELECT 'ORDER BY' FROM t"));
  CHECK_FALSE(has_outer_order_by("SELECT \"order by\" FROM t"));
  CHECK_FALSE(has_outer_order_by("SELECT a FROM t -- ORDER BY a"));
  CHECK_FALSE(has_outer_order_by("SELECT a /* ORDER BY */ FROM t"));
  CHECK_FALSE(has_outer_order_by("SELECT a FROM t WHERE border = 1 BY"));
  CHECK_FALSE(has_outer_order_by("SELECT row_number() OVER (ORDER BY a) FROM t"));
  CHECK(has_outer_order_by("SELECT a FROM t WHERE b IN (SELECT b FROM u) ORDER BY a"));
  CHECK(has_outer_order_by("SELECT [order] FROM t ORDER BY 1"));
}

TEST_CASE("cell matching") {
  CHECK(cells_match(Cell{}, Cell{}));
  CHECK_FALSE(cells_match(Cell{}, i(0)));
  CHECK(cells_match(i(3), Cell{3.0}));
  CHECK(cells_match(Cell{1e9}, Cell{1e9 + 1}));  // 1e-9 relative
  CHECK_FALSE(cells_match(Cell{1.0}, Cell{1.00001}));
  CHECK_FALSE(cells_match(i(1000000000000001), i(1000000000000000)));
  CHECK_FALSE(cells_match(s("a"), s("A")));
  CHECK_FALSE(cells_match(s("1"), i(1)));
  CHECK(cells_match(Cell{Blob{{1}}}, Cell{Blob{{1}}}));
}

TEST_CASE("compare_results examples") {
  auto t = table(2, {{i(1), s("a")}, {i(2), s("b")}});
  CHECK(compare_results(t, t, "SELECT 1") == ComparisonVerdict{true, VerdictReason::exact, false});

  auto swapped = table(2, {{s("a"), i(1)}});
  CHECK(compare_results(table(2, {{i(1), s("a")}}), swapped, "") ==
        ComparisonVerdict{true, VerdictReason::permuted_columns, false});

  auto ab = table(1, {{s("A")}, {s("B")}});
  auto ba = table(1, {{s("B")}, {s("A")}});
  CHECK(compare_results(ab, ba, "SELECT x FROM t ORDER BY x") ==
        ComparisonVerdict{false, VerdictReason::order_mismatch, false});
  CHECK(compare_results(ab, ba, "SELECT x FROM t").reason == VerdictReason::exact);

  // identity works only as a multiset, a permutation works in order
  auto gold = table(2, {{i(1), i(2)}, {i(2), i(1)}});
  auto pred = table(2, {{i(2), i(1)}, {i(1), i(2)}});
  CHECK(compare_results(gold, pred, "ORDER BY 1").reason == VerdictReason::permuted_columns);

  CHECK(compare_results(table(0, {{}, {}}), table(0, {{}, {}}), "").match);
  CHECK_FALSE(compare_results(table(1, {}), table(1, {{i(1)}}), "").match);
}

TEST_CASE("wide tables are compared as given") {
  Row row, rotated;
  for (int c = 0; c < 9; ++c) row.push_back(i(c));
  rotated = row;
  std::rotate(rotated.begin(), rotated.begin() + 1, rotated.end());
  auto v = compare_results(table(9, {row}), table(9, {rotated}), "");
  CHECK_FALSE(v.match);
  CHECK(v.too_many_columns);
  CHECK(v.reason == VerdictReason::value_mismatch);
  CHECK(compare_results(table(9, {row}), table(9, {row}), "") == ComparisonVerdict{true, VerdictReason::exact, true});

  // eight columns are still searched
  Row eight(row.begin(), row.end() - 1), eight_rot = eight;
  std::rotate(eight_rot.begin(), eight_rot.begin() + 3, eight_rot.end());
  CHECK(compare_results(table(8, {eight}), table(8, {eight_rot}), "").reason == VerdictReason::permuted_columns);
}

TEST_CASE("execution errors short-circuit") {
  sandbox::ExecutionOutcome ok = table(1, {{i(1)}});
  sandbox::ExecutionOutcome bad = sandbox::ExecError{sandbox::ErrorKind::syntax, "x"};
  CHECK(compare_outcomes(bad, ok, "").reason == VerdictReason::gold_error_exec);
  CHECK(compare_outcomes(bad, bad, "").reason == VerdictReason::gold_error_exec);
  CHECK(compare_outcomes(ok, bad, "").reason == VerdictReason::pred_error);
  CHECK(compare_outcomes(ok, ok, "").match);
}

TEST_CASE("hand-labelled fixtures") {
  EmpDb db;
  const auto& cases = consql::testing::eval_cases();
  REQUIRE(cases.size() == 20);
  auto index = index_instances(db.instances(cases));
  auto out = score_records(EmpDb::records(cases), index, db.catalog);
  REQUIRE(out.size() == cases.size());
  for (std::size_t k = 0; k < cases.size(); ++k) {
    CAPTURE(cases[k].name);
    CHECK(out[k].verdict.match == cases[k].match);
    CHECK(out[k].verdict.reason == cases[k].reason);
    CHECK((out[k].outcome == Outcome::nonexecutable) == (cases[k].reason == VerdictReason::pred_error));
  }
  CHECK(execution_accuracy(out) == 11.0 / 20.0);
  CHECK(out[10].detail == "no such column: nme");
}

TEST_CASE("batch of ten with seven matches") {
  EmpDb db;
  const auto& all = consql::testing::eval_cases();
  std::vector<consql::testing::EvalCase> batch;
  for (std::size_t k : {0, 1, 2, 3, 5, 11, 12, 4, 7, 10}) batch.push_back(all[k]);
  CHECK(std::count_if(batch.begin(), batch.end(), [](const auto& c) { return c.match; }) == 7);
  auto index = index_instances(db.instances(batch));
  CHECK(execution_accuracy(EmpDb::records(batch), index, db.catalog) == 0.7);
  CHECK(execution_accuracy(EmpDb::records(batch), index, db.catalog, 4) == 0.7);
}

TEST_CASE("scoring errors") {
  EmpDb db;
  auto index = index_instances(db.instances({consql::testing::eval_cases()[0]}));
  CHECK_THROWS_AS(execution_accuracy({}, index, db.catalog), MissingData);
  CHECK_THROWS_AS(execution_accuracy(std::vector<ScoredRecord>{}), MissingData);
  RunRecord stray;
  stray.instance_id = "nope";
  CHECK_THROWS_AS(score_records({stray}, index, db.catalog), MissingGold);
  auto no_gold = index;
  no_gold.at("e0").gold_sql.reset();
  RunRecord r;
  r.instance_id = "e0";
  CHECK_THROWS_AS(score_records({r}, no_gold, db.catalog), MissingGold);
  // an empty prediction is a failed execution
  auto out = score_records({r}, index, db.catalog);
  CHECK(out[0].outcome == Outcome::nonexecutable);
  CHECK_THROWS_AS(index_instances({index.at("e0"), index.at("e0")}), std::invalid_argument);
}

TEST_CASE("permuting pred columns never changes the verdict") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t ncol = 1 + rng() % 4, nrow = rng() % 5;
    auto cell = [&] {
      switch (rng() % 4) {
        case 0: return Cell{};
        case 1: return i(static_cast<std::int64_t>(rng() % 3));
        case 2: return Cell{static_cast<double>(rng() % 3)};
        default: return s(std::string(1, static_cast<char>('a' + rng() % 2)));
      }
    };
    std::vector<Row> grows, prows;
    for (std::size_t r = 0; r < nrow; ++r) {
      Row g;
      for (std::size_t c = 0; c < ncol; ++c) g.push_back(cell());
      grows.push_back(g);
      // half the time the prediction is a row shuffle of gold, else random
      Row p = g;
      if (rng() % 2) {
        for (auto& x : p) x = cell();
      }
      prows.push_back(p);
    }
    if (rng() % 2) std::shuffle(prows.begin(), prows.end(), rng);
    std::string sql = rng() % 2 ? "SELECT * FROM t ORDER BY 1" : "SELECT * FROM t";
    auto base = compare_results(table(ncol, grows), table(ncol, prows), sql);

    std::vector<std::size_t> perm(ncol);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Row> shuffled;
    for (const auto& row : prows) {
      Row p;
      for (std::size_t c : perm) p.push_back(row[c]);
      shuffled.push_back(p);
    }
    auto v = compare_results(table(ncol, grows), table(ncol, shuffled), sql);
    CAPTURE(trial);
    CHECK(v.match == base.match);
    if (!base.match) CHECK(v.reason == base.reason);
  }
}

TEST_CASE("accuracy does not depend on record order") {
  EmpDb db;
  const auto& cases = consql::testing::eval_cases();
  auto index = index_instances(db.instances(cases));
  auto records = EmpDb::records(cases);
  double base = execution_accuracy(records, index, db.catalog);
  std::mt19937 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(records.begin(), records.end(), rng);
    CHECK(execution_accuracy(records, index, db.catalog, 1 + trial % 3) == base);
  }
}

TEST_CASE("Mann-Whitney examples") {
  auto tied = mann_whitney_u({1, 1, 1}, {1, 1, 1});
  CHECK(tied.u == 4.5);
  CHECK(tied.p == 1.0);
  CHECK(tied.degenerate);

  auto split = mann_whitney_u({1, 2, 3}, {4, 5, 6});
  CHECK(split.u == 0);
  CHECK(split.exact);
  CHECK(split.p == doctest::Approx(0.1).epsilon(1e-12));

  std::vector<double> low, high;
  for (int k = 0; k < 30; ++k) {
    low.push_back(k);
    high.push_back(100 + k);
  }
  auto big = mann_whitney_u(low, high);
  CHECK_FALSE(big.exact);
  CHECK(big.u == 0);
  CHECK(big.p < 1e-6);
  // the same shape at n=6 through both paths
  std::vector<double> l6(low.begin(), low.begin() + 6), h6(high.begin(), high.begin() + 6);
  auto exact6 = mann_whitney_u(l6, h6, TestMethod::exact);
  auto normal6 = mann_whitney_u(l6, h6, TestMethod::normal);
  CHECK(exact6.p == doctest::Approx(2.0 / 924.0).epsilon(1e-12));
  CHECK(std::abs(exact6.p - normal6.p) <= 0.05);

  CHECK_THROWS_AS(mann_whitney_u({}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(mann_whitney_u(std::vector<double>(11, 1), std::vector<double>(10, 2), TestMethod::exact),
                  std::invalid_argument);
}

TEST_CASE("exact path equals brute force") {
  std::mt19937 rng(17);
  for (std::size_t n = 2; n <= 10; ++n) {
    for (std::size_t n1 = 1; n1 < n; ++n1) {
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a, b;
        for (std::size_t k = 0; k < n1; ++k) a.push_back(rng() % 5);
        for (std::size_t k = n1; k < n; ++k) b.push_back(rng() % 5);
        auto got = mann_whitney_u(a, b);
        auto want = consql::testing::brute_force_mann_whitney(a, b);
        CHECK(got.exact);
        CHECK(got.u == want.u);
        if (!got.degenerate) CHECK(got.p == want.p);
      }
    }
  }
}

TEST_CASE("U symmetry and the exact/normal band") {
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> unif(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(1 + rng() % 15), b(1 + rng() % 15);
    for (auto& x : a) x = rng() % 8;
    for (auto& x : b) x = rng() % 8;
    CHECK(mann_whitney_u(a, b).u + mann_whitney_u(b, a).u == static_cast<double>(a.size() * b.size()));
    CHECK(mann_whitney_u(a, b).p == doctest::Approx(mann_whitney_u(b, a).p));
  }
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(6), b(6);
    for (auto& x : a) x = unif(rng);
    for (auto& x : b) x = unif(rng);
    auto e = mann_whitney_u(a, b, TestMethod::exact);
    auto n = mann_whitney_u(a, b, TestMethod::normal);
    CHECK(std::abs(e.p - n.p) <= 0.05);
    CHECK(e.p <= 1.0);
  }
}

TEST_CASE("folds") {
  std::vector<bool> outcomes(23, false);
  for (std::size_t k = 0; k < 23; k += 2) outcomes[k] = true;
  auto folds = split_folds(outcomes, 10);
  REQUIRE(folds.size() == 10);
  CHECK(folds[0].count == 3);
  CHECK(folds[2].count == 3);
  CHECK(folds[3].count == 2);
  CHECK(folds[0].accuracy == doctest::Approx(2.0 / 3.0));  // T F T
  CHECK(folds[1].accuracy == doctest::Approx(1.0 / 3.0));  // F T F
  std::size_t total = 0;
  for (const auto& f : folds) total += f.count;
  CHECK(total == 23);
  CHECK_THROWS_AS(split_folds(std::vector<bool>(5), 10), std::invalid_argument);
}

TEST_CASE("error labels") {
  for (ErrorLabel l : kAllLabels) CHECK(error_label_from_string(to_string(l)) == l);
  CHECK_THROWS_AS(error_label_from_string("Typo"), std::invalid_argument);
  auto labels = parse_labels(nlohmann::json::parse(R"({"a": "GoldError", "b": "Logic"})"));
  CHECK(labels.at("b") == ErrorLabel::Logic);
  CHECK_THROWS_AS(parse_labels(nlohmann::json::parse("[]")), std::invalid_argument);
  CHECK_THROWS_AS(parse_labels(nlohmann::json::parse(R"({"a": 1})")), std::invalid_argument);
}

TEST_CASE("error report") {
  CHECK(error_report({scored("a", true)}, {}).failures == 0);
  CHECK(error_report({scored("a", true)}, {}).to_json()["distribution"].empty());

  std::vector<ScoredRecord> ten;
  LabelMap labels;
  for (int k = 0; k < 10; ++k) ten.push_back(scored("f" + std::to_string(k), false));
  for (int k = 0; k < 3; ++k) labels["f" + std::to_string(k)] = ErrorLabel::GoldError;
  auto r = error_report(ten, labels);
  CHECK(r.failures == 10);
  CHECK(r.count("GoldError") == 3);
  CHECK(r.percent("GoldError") == 30.0);
  CHECK(r.count("Unlabeled") == 7);
  CHECK(r.to_markdown().find("| GoldError | 3 | 30.0 |") != std::string::npos);

  std::vector<ScoredRecord> many;
  LabelMap gold_errors;
  for (int k = 0; k < 151; ++k) {
    many.push_back(scored("x" + std::to_string(k), false));
    if (k < 46) gold_errors["x" + std::to_string(k)] = ErrorLabel::GoldError;
  }
  auto large_sample = error_report(many, gold_errors);
  CHECK(format_percent(large_sample.percent("GoldError")) == "30.5");
  CHECK(large_sample.to_json()["distribution"]["GoldError"]["count"] == 46);

  CHECK_THROWS_AS(error_report({scored("a", true)}, {{"a", ErrorLabel::Logic}}), LabelOnSuccess);
  CHECK_THROWS_AS(error_report({scored("a", false)}, {{"b", ErrorLabel::Logic}}), std::invalid_argument);
}
