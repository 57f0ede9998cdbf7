#include "consql/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <thread>

namespace consql::evaluator {

std::string_view to_string(VerdictReason r) {
  switch (r) {
    case VerdictReason::exact: return "exact";
    case VerdictReason::permuted_columns: return "permuted_columns";
    case VerdictReason::order_mismatch: return "order_mismatch";
    case VerdictReason::value_mismatch: return "value_mismatch";
    case VerdictReason::pred_error: return "pred_error";
    case VerdictReason::gold_error_exec: return "gold_error_exec";
  }
  return "value_mismatch";
}

// ---------------------------------------------------------------------------
// ORDER BY detection

bool has_outer_order_by(std::string_view sql) {
  int depth = 0;
  bool saw_order = false;
  std::size_t i = 0;
  const std::size_t n = sql.size();
  auto word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$'; };
  while (i < n) {
    char c = sql[i];
    if (c == '\'' || c == '"' || c == '`' || c == '[') {
      char close = c == '[' ? ']' : c;
      std::size_t j = i + 1;
      while (j < n) {
        if (sql[j] == close) {
          if (close != ']' && j + 1 < n && sql[j + 1] == close) {
            j += 2;
            continue;
          }
          break;
        }
        ++j;
      }
      i = j + 1;
      saw_order = false;
    } else if (c == '-' && i + 1 < n && sql[i + 1] == '-') {
      while (i < n && sql[i] != '\n') ++i;
    } else if (c == '/' && i + 1 < n && sql[i + 1] == '*') {
      auto end = sql.find("*/", i + 2);
      i = end == std::string_view::npos ? n : end + 2;
    } else if (c == '(') {
      ++depth;
      ++i;
      saw_order = false;
    } else if (c == ')') {
      depth = std::max(0, depth - 1);
      ++i;
      saw_order = false;
    } else if (word_char(c)) {
      std::size_t j = i;
      while (j < n && word_char(sql[j])) ++j;
      std::string_view word = sql.substr(i, j - i);
      if (depth == 0) {
        if (saw_order && iequals(word, "by")) return true;
        saw_order = iequals(word, "order");
      }
      i = j;
    } else {
      if (!std::isspace(static_cast<unsigned char>(c))) saw_order = false;
      ++i;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Comparison

bool cells_match(const Cell& a, const Cell& b) {
  if (is_numeric(a) && is_numeric(b)) {
    if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b)) {
      return std::get<std::int64_t>(a) == std::get<std::int64_t>(b);
    }
    double x = as_double(a), y = as_double(b);
    if (x == y) return true;
    if (std::isnan(x) || std::isnan(y)) return std::isnan(x) && std::isnan(y);
    return std::fabs(x - y) <= kRelativeTolerance * std::max(std::fabs(x), std::fabs(y));
  }
  return a == b;
}

namespace {

int type_rank(const Cell& c) {
  if (is_null(c)) return 0;
  if (is_numeric(c)) return 1;
  if (std::holds_alternative<std::string>(c)) return 2;
  return 3;
}

// Total order used to line rows up before a tolerant element-wise check.
bool cell_less(const Cell& a, const Cell& b) {
  int ra = type_rank(a), rb = type_rank(b);
  if (ra != rb) return ra < rb;
  switch (ra) {
    case 1: {
      double x = as_double(a), y = as_double(b);
      if (x != y) return x < y;
      // int before real so equal values still sort deterministically
      return a.index() < b.index();
    }
    case 2: return std::get<std::string>(a) < std::get<std::string>(b);
    case 3: return std::get<Blob>(a).bytes < std::get<Blob>(b).bytes;
    default: return false;
  }
}

bool row_less(const Row& a, const Row& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), cell_less);
}

bool rows_match(const Row& a, const Row& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!cells_match(a[i], b[i])) return false;
  }
  return true;
}

std::vector<Row> permuted(const std::vector<Row>& rows, const std::vector<std::size_t>& perm) {
  std::vector<Row> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    Row p;
    p.reserve(perm.size());
    for (std::size_t c : perm) p.push_back(r[c]);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Cell> sorted_column(const std::vector<Row>& rows, std::size_t c) {
  std::vector<Cell> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  std::sort(out.begin(), out.end(), cell_less);
  return out;
}

// Calls `visit` with each column mapping (gold column -> pred column) whose
// columns hold matching value multisets, identity first. Stops when visit
// returns true.
bool for_each_mapping(const std::vector<Row>& gold, const std::vector<Row>& pred, std::size_t ncol,
                      const std::function<bool(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::vector<Cell>> gcols, pcols;
  for (std::size_t c = 0; c < ncol; ++c) {
    gcols.push_back(sorted_column(gold, c));
    pcols.push_back(sorted_column(pred, c));
  }
  std::vector<std::vector<bool>> compatible(ncol, std::vector<bool>(ncol));
  for (std::size_t g = 0; g < ncol; ++g) {
    for (std::size_t p = 0; p < ncol; ++p) {
      bool ok = true;
      for (std::size_t i = 0; i < gcols[g].size() && ok; ++i) ok = cells_match(gcols[g][i], pcols[p][i]);
      compatible[g][p] = ok;
    }
  }
  std::vector<std::size_t> perm(ncol);
  std::vector<bool> used(ncol, false);
  std::function<bool(std::size_t)> place = [&](std::size_t g) -> bool {
    if (g == ncol) return visit(perm);
    // try the same position first so the identity mapping comes first
    for (std::size_t k = 0; k < ncol; ++k) {
      std::size_t p = (g + k) % ncol;
      if (used[p] || !compatible[g][p]) continue;
      used[p] = true;
      perm[g] = p;
      if (place(g + 1)) return true;
      used[p] = false;
    }
    return false;
  };
  return place(0);
}

}  // namespace

ComparisonVerdict compare_results(const ResultTable& gold, const ResultTable& pred, std::string_view gold_sql) {
  const std::size_t ncol = gold.column_count();
  if (ncol != pred.column_count() || gold.row_count() != pred.row_count()) {
    return {false, VerdictReason::value_mismatch, false};
  }
  const bool ordered = has_outer_order_by(gold_sql);
  const bool too_many = ncol > kMaxPermutedColumns;

  std::vector<Row> gold_sorted = gold.rows();
  std::stable_sort(gold_sorted.begin(), gold_sorted.end(), row_less);

  bool unordered_hit = false;
  std::optional<VerdictReason> found;
  auto try_mapping = [&](const std::vector<std::size_t>& perm) {
    bool identity = true;
    for (std::size_t c = 0; c < perm.size(); ++c) identity = identity && perm[c] == c;
    std::vector<Row> rows = permuted(pred.rows(), perm);
    if (ordered) {
      bool same = true;
      for (std::size_t i = 0; i < rows.size() && same; ++i) same = rows_match(gold.rows()[i], rows[i]);
      if (same) {
        found = identity ? VerdictReason::exact : VerdictReason::permuted_columns;
        return true;
      }
    }
    std::stable_sort(rows.begin(), rows.end(), row_less);
    bool same = true;
    for (std::size_t i = 0; i < rows.size() && same; ++i) same = rows_match(gold_sorted[i], rows[i]);
    if (same && !ordered) {
      found = identity ? VerdictReason::exact : VerdictReason::permuted_columns;
      return true;
    }
    unordered_hit = unordered_hit || same;
    return false;
  };

  std::vector<std::size_t> identity(ncol);
  std::iota(identity.begin(), identity.end(), 0);
  if (too_many) {
    try_mapping(identity);
  } else {
    for_each_mapping(gold.rows(), pred.rows(), ncol, try_mapping);
  }
  if (found) return {true, *found, too_many};
  return {false, unordered_hit ? VerdictReason::order_mismatch : VerdictReason::value_mismatch, too_many};
}

ComparisonVerdict compare_outcomes(const sandbox::ExecutionOutcome& gold, const sandbox::ExecutionOutcome& pred,
                                   std::string_view gold_sql) {
  if (!gold.ok()) return {false, VerdictReason::gold_error_exec, false};
  if (!pred.ok()) return {false, VerdictReason::pred_error, false};
  return compare_results(gold.table(), pred.table(), gold_sql);
}

// ---------------------------------------------------------------------------
// Scoring

InstanceIndex index_instances(const std::vector<TaskInstance>& instances) {
  InstanceIndex out;
  for (const auto& i : instances) {
    if (!out.emplace(i.id, i).second) throw std::invalid_argument("duplicate instance id " + i.id);
  }
  return out;
}

ScoredRecord score_record(sandbox::Sandbox& box, const RunRecord& record, const TaskInstance& instance,
                          std::chrono::milliseconds timeout) {
  if (!instance.gold_sql) throw MissingGold(instance.id);
  sandbox::ExecOptions opts{timeout, std::nullopt};
  ScoredRecord s;
  s.instance_id = record.instance_id;
  auto g = box.execute(instance.db_id, *instance.gold_sql, opts);
  std::optional<sandbox::ExecutionOutcome> p;
  if (record.final_sql.empty()) {
    p.emplace(sandbox::ExecError{sandbox::ErrorKind::other, "empty prediction"});
  } else {
    p.emplace(box.execute(instance.db_id, record.final_sql.raw(), opts));
  }
  s.verdict = compare_outcomes(g, *p, *instance.gold_sql);
  s.outcome = s.verdict.match ? Outcome::correct : p->ok() ? Outcome::incorrect : Outcome::nonexecutable;
  if (!g.ok()) {
    s.detail = "gold: " + g.error().message;
  } else if (!p->ok()) {
    s.detail = p->error().message;
  }
  return s;
}

std::vector<ScoredRecord> score_records(const std::vector<RunRecord>& records, const InstanceIndex& instances,
                                        std::shared_ptr<const sandbox::DatabaseCatalog> catalog, unsigned threads,
                                        std::chrono::milliseconds timeout) {
  std::vector<const TaskInstance*> gold(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = instances.find(records[i].instance_id);
    if (it == instances.end() || !it->second.gold_sql) throw MissingGold(records[i].instance_id);
    gold[i] = &it->second;
  }

  std::vector<ScoredRecord> out(records.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(std::max(1u, threads));
  auto work = [&](unsigned w) {
    try {
      sandbox::Sandbox box(catalog);
      for (std::size_t i = next++; i < records.size(); i = next++) {
        out[i] = score_record(box, records[i], *gold[i], timeout);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < std::max(1u, threads); ++w) pool.emplace_back(work, w);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

double execution_accuracy(const std::vector<ScoredRecord>& scored) {
  if (scored.empty()) throw MissingData("no records to score");
  auto correct = std::count_if(scored.begin(), scored.end(), [](const auto& s) { return s.outcome == Outcome::correct; });
  return static_cast<double>(correct) / static_cast<double>(scored.size());
}

double execution_accuracy(const std::vector<RunRecord>& records, const InstanceIndex& instances,
                          std::shared_ptr<const sandbox::DatabaseCatalog> catalog, unsigned threads) {
  if (records.empty()) throw MissingData("no records to score");
  return execution_accuracy(score_records(records, instances, std::move(catalog), threads));
}

// ---------------------------------------------------------------------------
// Mann-Whitney U

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b, TestMethod method) {
  if (a.empty() || b.empty()) throw std::invalid_argument("Mann-Whitney U needs two non-empty samples");
  const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;

  // Midranks, doubled so they stay integral.
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < n1; ++i) all.emplace_back(a[i], i);
  for (std::size_t i = 0; i < n2; ++i) all.emplace_back(b[i], n1 + i);
  std::sort(all.begin(), all.end());
  std::vector<long long> rank2(n);
  double tie_term = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && all[j].first == all[i].first) ++j;
    long long twice_mid = static_cast<long long>(i + 1 + j);  // (i+1 + j) / 2 doubled
    for (std::size_t k = i; k < j; ++k) rank2[all[k].second] = twice_mid;
    double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  long long r1_2 = 0;
  for (std::size_t i = 0; i < n1; ++i) r1_2 += rank2[i];
  const long long offset2 = static_cast<long long>(n1 * (n1 + 1));
  MannWhitneyResult res;
  res.u = static_cast<double>(r1_2 - offset2) / 2.0;

  bool exact = method == TestMethod::exact || (method == TestMethod::automatic && n <= kExactLimit);
  if (exact && n > 20) throw std::invalid_argument("exact Mann-Whitney limited to 20 observations");
  res.exact = exact;
  if (all.front().first == all.back().first) {
    res.degenerate = true;
    res.p = 1.0;
    return res;
  }

  if (exact) {
    const long long u2 = r1_2 - offset2;
    std::size_t le = 0, ge = 0, total = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != n1) continue;
      long long s = 0;
      for (std::size_t k = 0; k < n; ++k) {
        if (mask & (1u << k)) s += rank2[k];
      }
      long long v = s - offset2;
      ++total;
      if (v <= u2) ++le;
      if (v >= u2) ++ge;
    }
    res.p = std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) / static_cast<double>(total));
    return res;
  }

  const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2), dn = static_cast<double>(n);
  const double mu = dn1 * dn2 / 2.0;
  const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (var <= 0) {
    res.p = 1.0;
    return res;
  }
  const double z = std::max(std::fabs(res.u - mu) - 0.5, 0.0) / std::sqrt(var);
  res.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return res;
}

std::vector<FoldReport> split_folds(const std::vector<bool>& correct, int folds) {
  if (folds < 1) throw std::invalid_argument("fold count must be positive");
  const std::size_t k = static_cast<std::size_t>(folds);
  if (correct.size() < k) {
    throw std::invalid_argument("cannot split " + std::to_string(correct.size()) + " outcomes into " +
                                std::to_string(folds) + " folds");
  }
  const std::size_t base = correct.size() / k, extra = correct.size() % k;
  std::vector<FoldReport> out;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t size = base + (f < extra ? 1 : 0);
    std::size_t hits = static_cast<std::size_t>(std::count(correct.begin() + static_cast<std::ptrdiff_t>(pos),
                                                           correct.begin() + static_cast<std::ptrdiff_t>(pos + size),
                                                           true));
    out.push_back({static_cast<int>(f + 1), size, static_cast<double>(hits) / static_cast<double>(size)});
    pos += size;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error taxonomy

std::string_view to_string(ErrorLabel l) {
  switch (l) {
    case ErrorLabel::GoldError: return "GoldError";
    case ErrorLabel::Ambiguity: return "Ambiguity";
    case ErrorLabel::DirtyDatabaseValue: return "DirtyDatabaseValue";
    case ErrorLabel::Logic: return "Logic";
    case ErrorLabel::Inaccuracy: return "Inaccuracy";
    case ErrorLabel::SemanticCorrect: return "SemanticCorrect";
    case ErrorLabel::InformationRedundancy: return "InformationRedundancy";
  }
  return "Logic";
}

ErrorLabel error_label_from_string(std::string_view s) {
  for (ErrorLabel l : kAllLabels) {
    if (to_string(l) == s) return l;
  }
  throw std::invalid_argument("unknown error label: " + std::string(s));
}

LabelMap parse_labels(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("labels file must hold a JSON object of id -> label");
  LabelMap out;
  for (const auto& [id, value] : doc.items()) {
    if (!value.is_string()) throw std::invalid_argument("label for " + id + " is not a string");
    out.emplace(id, error_label_from_string(value.get<std::string>()));
  }
  return out;
}

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", value);
  return buf;
}

std::size_t ErrorReport::count(std::string_view label) const {
  auto it = by_label.find(std::string(label));
  return it == by_label.end() ? 0 : it->second.size();
}

double ErrorReport::percent(std::string_view label) const {
  if (failures == 0) return 0;
  return std::round(1000.0 * static_cast<double>(count(label)) / static_cast<double>(failures)) / 10.0;
}

namespace {

std::vector<std::string> label_order() {
  std::vector<std::string> out;
  for (ErrorLabel l : kAllLabels) out.emplace_back(to_string(l));
  out.emplace_back("Unlabeled");
  return out;
}

}  // namespace

std::string ErrorReport::to_markdown() const {
  std::string out = "## Error analysis\n\n";
  if (failures == 0) return out + "No failed instances.\n";
  out += "Failed instances: " + std::to_string(failures) + "\n\n";
  out += "| Error type | Count | Share (%) |\n|---|---:|---:|\n";
  for (const auto& label : label_order()) {
    if (count(label) == 0) continue;
    out += "| " + label + " | " + std::to_string(count(label)) + " | " + format_percent(percent(label)) + " |\n";
  }
  for (const auto& label : label_order()) {
    if (count(label) == 0) continue;
    out += "\n### " + label + "\n\n";
    for (const auto& id : by_label.at(label)) out += "- " + id + "\n";
  }
  return out;
}

nlohmann::json ErrorReport::to_json() const {
  nlohmann::json dist = nlohmann::json::object();
  for (const auto& label : label_order()) {
    if (count(label) == 0) continue;
    dist[label] = {{"count", count(label)}, {"percent", percent(label)}, {"instances", by_label.at(label)}};
  }
  return {{"failures", failures}, {"distribution", dist}};
}

ErrorReport error_report(const std::vector<ScoredRecord>& scored, const LabelMap& labels) {
  std::map<std::string, const ScoredRecord*, std::less<>> by_id;
  for (const auto& s : scored) by_id.emplace(s.instance_id, &s);
  for (const auto& [id, _] : labels) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::invalid_argument("label for unscored instance " + id);
    if (it->second->outcome == Outcome::correct) throw LabelOnSuccess(id);
  }
  ErrorReport report;
  for (const auto& s : scored) {
    if (s.outcome == Outcome::correct) continue;
    ++report.failures;
    auto it = labels.find(s.instance_id);
    std::string label = it == labels.end() ? "Unlabeled" : std::string(to_string(it->second));
    report.by_label[label].push_back(s.instance_id);
  }
  return report;
}

}  // namespace consql::evaluator
