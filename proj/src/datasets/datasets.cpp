#include "consql/datasets.hpp"

#include <algorithm>
#include <set>

#include "consql/util.hpp"

namespace consql::datasets {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::dev: return "dev";
    case Split::test: return "test";
    case Split::train: return "train";
  }
  return "dev";
}

Split split_from_string(std::string_view s) {
  for (Split v : {Split::dev, Split::test, Split::train}) {
    if (to_string(v) == s) return v;
  }
  throw ManifestError("unknown split: " + std::string(s));
}

std::string_view to_string(Format f) { return f == Format::bird ? "bird" : "spider"; }

Format format_from_string(std::string_view s) {
  if (s == "spider") return Format::spider;
  if (s == "bird") return Format::bird;
  throw ManifestError("unknown benchmark format: " + std::string(s));
}

void BenchmarkManifest::validate() const {
  auto need = [&](const fs::path& p, std::string_view what, bool dir) {
    if (p.empty()) throw ManifestError(name + ": no " + std::string(what) + " path");
    std::error_code ec;
    bool ok = dir ? fs::is_directory(p, ec) : fs::is_regular_file(p, ec);
    if (!ok) throw ManifestError(name + ": " + std::string(what) + " not found: " + p.string());
  };
  need(questions, "questions file", false);
  need(tables, "tables file", false);
  need(database_root, "database directory", true);
}

BenchmarkManifest BenchmarkManifest::layout(Format format, const fs::path& root, Split split) {
  BenchmarkManifest m;
  m.format = format;
  m.split = split;
  std::string s(to_string(split));
  m.name = std::string(to_string(format)) + "-" + s;
  if (format == Format::bird) {
    m.questions = root / (s + ".json");
    m.tables = root / (s + "_tables.json");
    m.database_root = root / (s + "_databases");
  } else if (split == Split::test) {
    m.questions = root / "test.json";
    m.tables = root / "test_tables.json";
    m.database_root = root / "test_database";
  } else {
    m.questions = root / (split == Split::train ? "train_spider.json" : "dev.json");
    m.tables = root / "tables.json";
    m.database_root = root / "database";
  }
  return m;
}

BenchmarkManifest load_manifest(const fs::path& path, Format format, Split split) {
  std::error_code ec;
  if (fs::is_directory(path, ec)) return BenchmarkManifest::layout(format, path, split);
  if (!fs::is_regular_file(path, ec)) throw ManifestError("manifest not found: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(util::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ManifestError(path.string() + ": manifest must be a JSON object");
  auto text = [&](const char* key) -> std::optional<std::string> {
    auto it = doc.find(key);
    if (it == doc.end()) return std::nullopt;
    if (!it->is_string()) throw ManifestError(path.string() + ": \"" + key + "\" must be a string");
    return it->get<std::string>();
  };
  BenchmarkManifest m;
  m.format = text("format") ? format_from_string(*text("format")) : format;
  m.split = text("split") ? split_from_string(*text("split")) : split;
  m.name = text("name").value_or(std::string(to_string(m.format)) + "-" + std::string(to_string(m.split)));
  const fs::path base = path.parent_path();
  auto resolve = [&](const char* key) {
    auto v = text(key);
    if (!v) throw ManifestError(path.string() + ": missing \"" + key + "\"");
    fs::path p(*v);
    return p.is_absolute() ? p : base / p;
  };
  m.questions = resolve("questions");
  m.tables = resolve("tables");
  m.database_root = resolve("database_root");
  return m;
}

const DatabaseSchema* Benchmark::schema(std::string_view db_id) const {
  for (const auto& s : schemas) {
    if (s.db_id == db_id) return &s;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Questions

namespace {

std::string required_string(const json& rec, std::size_t index, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end()) throw MalformedRecord(index, std::string("missing \"") + key + "\"");
  if (!it->is_string()) throw MalformedRecord(index, std::string("\"") + key + "\" is not a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& rec, std::size_t index, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw MalformedRecord(index, std::string("\"") + key + "\" is not a string");
  return it->get<std::string>();
}

}  // namespace

std::vector<TaskInstance> parse_questions(const json& doc, std::string_view name, Format format) {
  if (!doc.is_array()) throw MalformedRecord(0, "questions file is not a JSON array");
  std::vector<TaskInstance> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& rec = doc[i];
    if (!rec.is_object()) throw MalformedRecord(i, "not an object");
    TaskInstance t;
    t.id = std::string(name) + "-" + std::to_string(i);
    t.question = required_string(rec, i, "question");
    t.db_id = required_string(rec, i, "db_id");
    if (format == Format::bird) {
      t.gold_sql = required_string(rec, i, "SQL");
      t.evidence = optional_string(rec, i, "evidence").value_or("");
      t.difficulty = optional_string(rec, i, "difficulty");
    } else {
      t.gold_sql = required_string(rec, i, "query");
    }
    if (t.db_id.empty()) throw MalformedRecord(i, "empty db_id");
    out.push_back(std::move(t));
  }
  return out;
}

json questions_to_json(const std::vector<TaskInstance>& instances, Format format) {
  json out = json::array();
  for (const auto& t : instances) {
    json rec = {{"db_id", t.db_id}, {"question", t.question}};
    if (format == Format::bird) {
      rec["SQL"] = t.gold_sql.value_or("");
      rec["evidence"] = t.evidence.value_or("");
      if (t.difficulty) rec["difficulty"] = *t.difficulty;
    } else {
      rec["query"] = t.gold_sql.value_or("");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tables

std::vector<DatabaseSchema> parse_tables(const json& doc) {
  if (!doc.is_array()) throw MalformedRecord(0, "tables file is not a JSON array");
  std::vector<DatabaseSchema> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& rec = doc[i];
    try {
      DatabaseSchema s;
      s.db_id = rec.at("db_id").get<std::string>();
      for (const auto& t : rec.at("table_names_original")) s.tables.push_back({t.get<std::string>(), {}});
      const json& cols = rec.at("column_names_original");
      const json& types = rec.at("column_types");
      if (types.size() != cols.size()) throw MalformedRecord(i, "column_types and column_names_original differ in length");
      // column index -> (table, position in table); index 0 is the "*" placeholder
      std::vector<std::pair<int, std::size_t>> where(cols.size(), {-1, 0});
      for (std::size_t c = 0; c < cols.size(); ++c) {
        int table = cols[c].at(0).get<int>();
        if (table < 0) continue;
        if (static_cast<std::size_t>(table) >= s.tables.size()) throw MalformedRecord(i, "column table index out of range");
        auto& columns = s.tables[static_cast<std::size_t>(table)].columns;
        where[c] = {table, columns.size()};
        columns.push_back({cols[c].at(1).get<std::string>(), types[c].get<std::string>(), false});
      }
      auto column_at = [&](const json& idx) -> std::pair<int, std::size_t> {
        auto c = idx.get<std::size_t>();
        if (c >= where.size() || where[c].first < 0) throw MalformedRecord(i, "key column index out of range");
        return where[c];
      };
      for (const auto& pk : rec.value("primary_keys", json::array())) {
        for (const auto& c : pk.is_array() ? pk : json::array({pk})) {
          auto [t, pos] = column_at(c);
          s.tables[static_cast<std::size_t>(t)].columns[pos].is_primary_key = true;
        }
      }
      for (const auto& fk : rec.value("foreign_keys", json::array())) {
        auto [ft, fpos] = column_at(fk.at(0));
        auto [tt, tpos] = column_at(fk.at(1));
        const auto& from = s.tables[static_cast<std::size_t>(ft)];
        const auto& to = s.tables[static_cast<std::size_t>(tt)];
        s.foreign_keys.push_back({from.name, from.columns[fpos].name, to.name, to.columns[tpos].name});
      }
      s.validate();
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw MalformedRecord(i, e.what());
    } catch (const SchemaError& e) {
      throw MalformedRecord(i, e.what());
    }
  }
  return out;
}

json tables_to_json(const std::vector<DatabaseSchema>& schemas) {
  json out = json::array();
  for (const auto& s : schemas) {
    json tables = json::array(), cols = json::array({json::array({-1, "*"})}), types = json::array({"text"});
    json pks = json::array(), fks = json::array();
    auto index_of = [&](std::string_view table, std::string_view column) -> std::size_t {
      std::size_t idx = 1;
      for (const auto& t : s.tables) {
        for (const auto& c : t.columns) {
          if (iequals(t.name, table) && iequals(c.name, column)) return idx;
          ++idx;
        }
      }
      return 0;
    };
    for (std::size_t t = 0; t < s.tables.size(); ++t) {
      tables.push_back(s.tables[t].name);
      json table_pk = json::array();
      for (const auto& c : s.tables[t].columns) {
        if (c.is_primary_key) table_pk.push_back(cols.size());
        cols.push_back(json::array({t, c.name}));
        types.push_back(c.type);
      }
      if (table_pk.size() == 1) pks.push_back(table_pk[0]);
      if (table_pk.size() > 1) pks.push_back(table_pk);
    }
    for (const auto& fk : s.foreign_keys) {
      fks.push_back(json::array({index_of(fk.from_table, fk.from_column), index_of(fk.to_table, fk.to_column)}));
    }
    out.push_back({{"db_id", s.db_id},
                   {"table_names_original", tables},
                   {"column_names_original", cols},
                   {"column_types", types},
                   {"primary_keys", pks},
                   {"foreign_keys", fks}});
  }
  return out;
}

fs::path database_file(const fs::path& root, std::string_view db_id) {
  return root / std::string(db_id) / (std::string(db_id) + ".sqlite");
}

// ---------------------------------------------------------------------------
// Loading

namespace {

json read_json(const fs::path& path) {
  try {
    return json::parse(util::read_file(path));
  } catch (const json::parse_error& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
}

}  // namespace

Benchmark load_benchmark(const BenchmarkManifest& manifest) {
  manifest.validate();
  Benchmark b;
  b.instances = parse_questions(read_json(manifest.questions), manifest.name, manifest.format);
  b.schemas = parse_tables(read_json(manifest.tables));
  b.catalog = std::make_shared<sandbox::DatabaseCatalog>();

  std::set<std::string, std::less<>> with_schema;
  for (const auto& s : b.schemas) {
    if (!with_schema.insert(s.db_id).second) throw SchemaQuestionMismatch(s.db_id, "listed twice in the tables file");
  }
  std::set<std::string, std::less<>> used;
  for (const auto& t : b.instances) {
    if (!with_schema.contains(t.db_id)) throw SchemaQuestionMismatch(t.db_id, "no schema entry");
    used.insert(t.db_id);
  }
  for (const auto& db : used) {
    fs::path file = database_file(manifest.database_root, db);
    if (!fs::is_regular_file(file)) throw SchemaQuestionMismatch(db, "database file missing: " + file.string());
    b.catalog->add(db, file);
  }
  // schema entries no question uses are still served when their file exists
  for (const auto& db : with_schema) {
    if (used.contains(db)) continue;
    fs::path file = database_file(manifest.database_root, db);
    if (fs::is_regular_file(file)) b.catalog->add(db, file);
  }
  util::log_info(manifest.name + ": " + std::to_string(b.instances.size()) + " instances over " +
                 std::to_string(used.size()) + " databases");
  return b;
}

std::vector<GoldFailure> check_gold(const Benchmark& benchmark, std::chrono::milliseconds timeout) {
  sandbox::Sandbox box(benchmark.catalog);
  std::vector<GoldFailure> out;
  for (const auto& t : benchmark.instances) {
    if (!t.gold_sql) continue;
    auto r = box.execute(t.db_id, *t.gold_sql, {timeout, std::size_t{1}});
    if (!r.ok()) {
      util::log_warn("gold SQL for " + t.id + " fails: " + r.error().message);
      out.push_back({t.id, r.error().message});
    }
  }
  return out;
}

std::vector<TaskInstance> subsample(const std::vector<TaskInstance>& instances, std::size_t n, std::uint64_t seed) {
  const std::size_t count = instances.size();
  if (n > count) throw NTooLarge(n, count);
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Lcg rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + rng.next() % (count - i);
    std::swap(order[i], order[j]);
  }
  std::vector<TaskInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(instances[order[i]]);
  return out;
}

}  // namespace consql::datasets
