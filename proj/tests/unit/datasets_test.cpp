#include <doctest.h>

#include <algorithm>
#include <set>

#include "consql/datasets.hpp"
#include "consql/util.hpp"
#include "fixtures.hpp"

using namespace consql;
using namespace consql::datasets;
using consql::testing::TempDir;
using nlohmann::json;

namespace {

const char* kTables = R"([
  {"db_id": "concert_singer",
   "table_names_original": ["stadium", "singer", "concert", "singer_in_concert"],
   "column_names_original": [[-1, "*"], [0, "Stadium_ID"], [0, "Name"], [1, "Singer_ID"], [1, "Name"], [1, "Age"],
                             [2, "concert_ID"], [2, "Stadium_ID"], [3, "concert_ID"], [3, "Singer_ID"]],
   "column_types": ["text", "number", "text", "number", "text", "number", "number", "text", "number", "text"],
   "primary_keys": [1, 3, 6, [8, 9]],
   "foreign_keys": [[7, 1], [9, 3], [8, 6]]},
  {"db_id": "pets",
   "table_names_original": ["pet"],
   "column_names_original": [[-1, "*"], [0, "id"], [0, "kind"]],
   "column_types": ["text", "number", "text"],
   "primary_keys": [1],
   "foreign_keys": []}
])";

struct Layout {
  TempDir dir;
  Layout(Format format, const json& questions) {
    auto m = manifest(format);
    std::filesystem::create_directories(m.database_root / "concert_singer");
    std::filesystem::create_directories(m.database_root / "pets");
    consql::testing::make_concert_singer(m.database_root / "concert_singer");
    consql::testing::build_database(database_file(m.database_root, "pets"),
                                    "CREATE TABLE pet (id INTEGER PRIMARY KEY, kind TEXT);"
                                    "INSERT INTO pet VALUES (1, 'cat'), (2, 'dog');");
    util::write_file_atomic(m.questions, questions.dump());
    util::write_file_atomic(m.tables, kTables);
  }
  BenchmarkManifest manifest(Format format) const { return BenchmarkManifest::layout(format, dir.path(), Split::dev); }
};

json spider_questions() {
  return json::parse(R"([
    {"db_id": "concert_singer", "query": "SELECT count(*) FROM singer", "question": "How many singers?"},
    {"db_id": "pets", "query": "SELECT kind FROM pet", "question": "Kinds?", "query_toks": ["ignored"]},
    {"db_id": "pets", "query": "SELECT nme FROM pet", "question": "Broken gold"}
  ])");
}

std::vector<TaskInstance> numbered(std::size_t n) {
  std::vector<TaskInstance> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({std::to_string(i), "q", std::nullopt, "d", "SELECT 1", std::nullopt});
  return out;
}

std::vector<std::string> ids(const std::vector<TaskInstance>& v) {
  std::vector<std::string> out;
  for (const auto& t : v) out.push_back(t.id);
  return out;
}

}  // namespace

TEST_CASE("standard layouts") {
  auto sd = BenchmarkManifest::layout(Format::spider, "/d", Split::dev);
  CHECK(sd.questions == "/d/dev.json");
  CHECK(sd.tables == "/d/tables.json");
  CHECK(sd.database_root == "/d/database");
  CHECK(sd.name == "spider-dev");
  auto bd = BenchmarkManifest::layout(Format::bird, "/b", Split::dev);
  CHECK(bd.tables == "/b/dev_tables.json");
  CHECK(bd.database_root == "/b/dev_databases");
  CHECK(BenchmarkManifest::layout(Format::spider, "/d", Split::train).questions == "/d/train_spider.json");
  CHECK_THROWS_AS(sd.validate(), ManifestError);
  CHECK(split_from_string("test") == Split::test);
  CHECK_THROWS_AS(format_from_string("wikisql"), ManifestError);
}

TEST_CASE("load a spider-format benchmark") {
  Layout l(Format::spider, spider_questions());
  Benchmark b = load_benchmark(l.manifest(Format::spider));
  REQUIRE(b.instances.size() == 3);
  CHECK(b.instances[0].id == "spider-dev-0");
  CHECK(b.instances[0].gold_sql == "SELECT count(*) FROM singer");
  CHECK_FALSE(b.instances[0].evidence.has_value());
  CHECK(b.catalog->size() == 2);

  const DatabaseSchema* cs = b.schema("concert_singer");
  REQUIRE(cs != nullptr);
  REQUIRE(cs->tables.size() == 4);
  CHECK(cs->tables[1].columns[2].name == "Age");
  CHECK(cs->tables[1].columns[0].is_primary_key);
  CHECK(cs->tables[3].columns[0].is_primary_key);
  CHECK(cs->tables[3].columns[1].is_primary_key);
  REQUIRE(cs->foreign_keys.size() == 3);
  CHECK(cs->foreign_keys[0] == ForeignKey{"concert", "Stadium_ID", "stadium", "Stadium_ID"});
}

TEST_CASE("bird format carries evidence") {
  auto q = json::parse(R"([
    {"question_id": 0, "db_id": "pets", "question": "Kinds?", "evidence": "kind means species",
     "SQL": "SELECT kind FROM pet", "difficulty": "simple"},
    {"question_id": 1, "db_id": "pets", "question": "Count?", "SQL": "SELECT count(*) FROM pet"}
  ])");
  Layout l(Format::bird, q);
  Benchmark b = load_benchmark(l.manifest(Format::bird));
  REQUIRE(b.instances.size() == 2);
  CHECK(b.instances[0].evidence == "kind means species");
  CHECK(b.instances[0].difficulty == "simple");
  CHECK(b.instances[1].evidence == "");
  CHECK(b.instances[1].gold_sql == "SELECT count(*) FROM pet");
}

TEST_CASE("cross-validation and malformed input") {
  auto q = spider_questions();
  q.push_back({{"db_id", "flights"}, {"query", "SELECT 1"}, {"question", "?"}});
  Layout unknown(Format::spider, q);
  try {
    load_benchmark(unknown.manifest(Format::spider));
    FAIL("expected a mismatch");
  } catch (const SchemaQuestionMismatch& e) {
    CHECK(e.db_id() == "flights");
  }

  Layout no_file(Format::spider, spider_questions());
  std::filesystem::remove_all(no_file.manifest(Format::spider).database_root / "pets");
  CHECK_THROWS_AS(load_benchmark(no_file.manifest(Format::spider)), SchemaQuestionMismatch);

  try {
    parse_questions(json::parse(R"([{"db_id": "a", "query": "x", "question": "q"}, {"db_id": "a", "question": "q"}])"),
                    "s", Format::spider);
    FAIL("expected a malformed record");
  } catch (const MalformedRecord& e) {
    CHECK(e.index() == 1);
  }
  CHECK_THROWS_AS(parse_questions(json::parse(R"({"a": 1})"), "s", Format::spider), MalformedRecord);
  CHECK_THROWS_AS(parse_questions(json::parse(R"([{"db_id": 3, "query": "x", "question": "q"}])"), "s", Format::spider),
                  MalformedRecord);
  CHECK_THROWS_AS(parse_questions(json::parse(R"([{"db_id": "a", "query": "x", "question": "q"}])"), "s", Format::bird),
                  MalformedRecord);
  CHECK_THROWS_AS(parse_tables(json::parse(R"([{"db_id": "a"}])")), MalformedRecord);
  CHECK_THROWS_AS(parse_tables(json::parse(R"([{"db_id": "a", "table_names_original": ["t"],
      "column_names_original": [[-1, "*"], [0, "x"]], "column_types": ["text", "text"], "primary_keys": [5]}])")),
                  MalformedRecord);

  Layout broken(Format::spider, spider_questions());
  util::write_file_atomic(broken.manifest(Format::spider).questions, "[{");
  CHECK_THROWS_AS(load_benchmark(broken.manifest(Format::spider)), ManifestError);
}

TEST_CASE("round trip through the benchmark JSON shape") {
  for (Format f : {Format::spider, Format::bird}) {
    auto q = f == Format::bird ? json::parse(R"([{"db_id": "p", "question": "a", "SQL": "x", "evidence": "e",
                                                  "difficulty": "hard"}, {"db_id": "p", "question": "b", "SQL": "y"}])")
                               : spider_questions();
    auto once = parse_questions(q, "n", f);
    auto twice = parse_questions(questions_to_json(once, f), "n", f);
    CHECK(once == twice);
  }
  auto schemas = parse_tables(json::parse(kTables));
  CHECK(parse_tables(tables_to_json(schemas)) == schemas);
}

TEST_CASE("gold failures are reported, not fatal") {
  Layout l(Format::spider, spider_questions());
  Benchmark b = load_benchmark(l.manifest(Format::spider));
  auto failures = check_gold(b);
  REQUIRE(failures.size() == 1);
  CHECK(failures[0].instance_id == "spider-dev-2");
  CHECK(failures[0].message == "no such column: nme");
}

TEST_CASE("LCG sequence") {
  Lcg rng(1);
  // state_1 = 6364136223846793005 + 1442695040888963407 = 7806831264735756412
  CHECK(rng.next() == static_cast<std::uint32_t>(7806831264735756412ULL >> 32));
}

TEST_CASE("subsample") {
  auto ten = numbered(10);
  // frozen from an independent run of the same generator
  CHECK(ids(subsample(ten, 3, 1)) == std::vector<std::string>{"8", "0", "3"});
  CHECK(ids(subsample(ten, 3, 1)) == ids(subsample(ten, 3, 1)));
  CHECK(subsample(ten, 0, 1).empty());
  CHECK_THROWS_AS(subsample(ten, 11, 1), NTooLarge);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto all = ids(subsample(ten, 10, seed));
    auto sorted = all;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == ids(numbered(10)));
    // a shorter sample is a prefix of the longer one
    auto five = ids(subsample(ten, 5, seed));
    CHECK(std::equal(five.begin(), five.end(), all.begin()));
  }
}
