#include "eval_cases.hpp"

#include <algorithm>

namespace consql::testing {

using evaluator::VerdictReason;

std::string_view employee_script() {
  return "CREATE TABLE emp (id INTEGER PRIMARY KEY, name TEXT, dept TEXT, salary REAL, age INT);"
         "INSERT INTO emp VALUES (1, 'Ann', 'eng', 100.0, 30), (2, 'Bob', 'eng', 90.5, 40),"
         " (3, 'Cid', 'ops', 70.25, 25), (4, 'Dee', 'ops', NULL, 35), (5, 'Eve', 'hr', 85.0, 30);";
}

const std::vector<EvalCase>& eval_cases() {
  static const std::vector<EvalCase> cases{
      {"identical", "SELECT name FROM emp", "SELECT name FROM emp", true, VerdictReason::exact},
      {"unordered gold ignores pred order", "SELECT name FROM emp", "SELECT name FROM emp ORDER BY name DESC", true,
       VerdictReason::exact},
      {"two columns swapped", "SELECT name, age FROM emp", "SELECT age, name FROM emp", true,
       VerdictReason::permuted_columns},
      {"three columns rotated", "SELECT id, name, dept FROM emp", "SELECT dept, id, name FROM emp", true,
       VerdictReason::permuted_columns},
      {"ordered gold, reversed pred", "SELECT name FROM emp ORDER BY age, name",
       "SELECT name FROM emp ORDER BY age DESC, name", false, VerdictReason::order_mismatch},
      {"ordered gold, same order by another key", "SELECT name FROM emp ORDER BY name", "SELECT name FROM emp ORDER BY id",
       true, VerdictReason::exact},
      {"real just outside tolerance", "SELECT 0.1 + 0.2", "SELECT 0.30001", false, VerdictReason::value_mismatch},
      {"count skips NULL", "SELECT count(*) FROM emp", "SELECT count(salary) FROM emp", false,
       VerdictReason::value_mismatch},
      {"extra row", "SELECT name FROM emp WHERE age > 30", "SELECT name FROM emp WHERE age >= 30", false,
       VerdictReason::value_mismatch},
      {"extra column", "SELECT name FROM emp", "SELECT name, age FROM emp", false, VerdictReason::value_mismatch},
      {"unknown column", "SELECT name FROM emp", "SELECT nme FROM emp", false, VerdictReason::pred_error},
      {"real within tolerance", "SELECT 0.1 + 0.2", "SELECT 0.3", true, VerdictReason::exact},
      {"int equals real", "SELECT age FROM emp WHERE id = 1", "SELECT age * 1.0 FROM emp WHERE id = 1", true,
       VerdictReason::exact},
      {"NULL equals NULL", "SELECT salary FROM emp WHERE id = 4", "SELECT NULL", true, VerdictReason::exact},
      {"text is not a number", "SELECT age FROM emp WHERE id = 1", "SELECT '30'", false,
       VerdictReason::value_mismatch},
      {"multiplicity differs", "SELECT age FROM emp", "SELECT CASE WHEN id = 5 THEN 25 ELSE age END FROM emp", false,
       VerdictReason::value_mismatch},
      {"syntax error", "SELECT name FROM emp", "SELEC name FROM emp", false, VerdictReason::pred_error},
      {"both empty", "SELECT name FROM emp WHERE age > 100", "SELECT name FROM emp WHERE 0", true,
       VerdictReason::exact},
      {"ORDER BY only inside a subquery", "SELECT name FROM (SELECT name FROM emp ORDER BY age)",
       "SELECT name FROM emp ORDER BY name DESC", true, VerdictReason::exact},
      {"ordered and permuted", "SELECT name, age FROM emp ORDER BY age, name",
       "SELECT age, name FROM emp ORDER BY age, name", true, VerdictReason::permuted_columns},
  };
  return cases;
}

BruteForceMw brute_force_mann_whitney(const std::vector<double>& a, const std::vector<double>& b) {
  auto pairwise = [](const std::vector<double>& x, const std::vector<double>& y) {
    double u = 0;
    for (double p : x) {
      for (double q : y) u += p > q ? 1.0 : p == q ? 0.5 : 0.0;
    }
    return u;
  };
  const double observed = pairwise(a, b);
  std::vector<double> pool = a;
  pool.insert(pool.end(), b.begin(), b.end());
  // labels sorted ascending so next_permutation walks every split once
  std::vector<int> in_a(pool.size(), 0);
  std::fill(in_a.end() - static_cast<std::ptrdiff_t>(a.size()), in_a.end(), 1);
  long le = 0, ge = 0, total = 0;
  do {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < pool.size(); ++i) (in_a[i] ? x : y).push_back(pool[i]);
    double u = pairwise(x, y);
    ++total;
    le += u <= observed;
    ge += u >= observed;
  } while (std::next_permutation(in_a.begin(), in_a.end()));
  return {observed, std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) / static_cast<double>(total))};
}

}  // namespace consql::testing
