#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <set>

#include "consql/prompts.hpp"
#include "consql/sandbox.hpp"
#include "consql/util.hpp"
#include "fixtures.hpp"

using namespace consql;
using namespace consql::prompts;

namespace {

// Compares against tests/golden/<name>; CONSQL_UPDATE_GOLDENS=1 rewrites it.
void check_golden(const std::string& name, const std::string& actual) {
  std::filesystem::path path = std::filesystem::path("golden") / name;
  if (const char* update = std::getenv("CONSQL_UPDATE_GOLDENS"); update && std::string(update) == "1") {
    util::write_file_atomic(path, actual);
  }
  REQUIRE_MESSAGE(std::filesystem::exists(path), "missing golden " << path);
  CHECK(util::read_file(path) == actual);
}

struct Fixture {
  consql::testing::TempDir dir;
  std::filesystem::path file = consql::testing::make_concert_singer(dir.path());
  DatabaseSchema schema = sandbox::read_schema(file, "concert_singer");
  std::string schema_text = serialize_schema(schema);
  std::string question = "Show the name and capacity of the stadium that hosted the earliest concert.";
  std::vector<std::pair<std::string, std::string>> shots = {
      {"How many singers do we have?", "SELECT count(*) FROM singer"},
      {"What is the average capacity of all stadiums?", "SELECT avg(Capacity) FROM stadium"},
  };
  std::string pred_sql =
      "SELECT T1.Name, T1.Capacity FROM stadium AS T1 JOIN concert AS T2 ON T1.Stadium_ID = T2.Stadium_ID "
      "ORDER BY T2.Year LIMIT 1";

  Bindings writer_bindings() const {
    return {{"evidence", ""}, {"question", question}, {"related_sql", format_shots(shots)}, {"schema", schema_text}};
  }
};

AgentMessage msg(Role role, std::size_t tokens, std::string tag = "") {
  std::string content = tag;
  content.resize(tokens * 4, '.');
  return AgentMessage(role, role == Role::assistant ? Author::writer() : Author::environment(), content);
}

}  // namespace

TEST_CASE("schema serialization") {
  DatabaseSchema one{"d", {{"t", {{"a", "int", false}}}}, {}};
  CHECK(serialize_schema(one) == "CREATE TABLE t (\n  a int\n);");

  DatabaseSchema fk{"d",
                    {{"t1", {{"id", "int", true}, {"b", "int", false}}}, {"t2", {{"id", "int", true}}}},
                    {{"t1", "b", "t2", "id"}}};
  std::string text = serialize_schema(fk);
  CHECK(text.find("-- t1.b references t2.id") != std::string::npos);

  Fixture f;
  check_golden("concert_singer_schema.txt", f.schema_text);
}

TEST_CASE("schema with sample rows") {
  DatabaseSchema one{"d", {{"t", {{"a", "int", false}}}}, {}};
  SampleRows rows;
  rows.emplace("t", ResultTable({"a"}, {{Cell{std::int64_t{1}}}, {Cell{std::int64_t{2}}}, {Cell{std::int64_t{3}}},
                                        {Cell{std::int64_t{4}}}}));
  std::string text = serialize_schema(one, &rows);
  CHECK(text.find("-- sample rows:") != std::string::npos);
  CHECK(text.find("3") != std::string::npos);
  CHECK(text.find("4") == std::string::npos);
}

TEST_CASE("rendered prompts match the goldens") {
  Fixture f;
  const TemplateSet t = TemplateSet::builtin();
  std::string cot = t.get(TemplateName::cot_writer).render(f.writer_bindings());
  std::string pot = t.get(TemplateName::pot_writer).render(f.writer_bindings());
  std::string inv = t.get(TemplateName::invitation)
                        .render({{"n", "3"}, {"schema", f.schema_text}, {"question", f.question}, {"pred_sql", f.pred_sql}});
  check_golden("prompt1_cot_writer.txt", cot);
  check_golden("prompt2_pot_writer.txt", pot);
  check_golden("prompt3_invitation.txt", inv);

  CHECK(cot.find("### DATABASE STRUCTURE:") != std::string::npos);
  CHECK(cot.find("### EVIDENCE: \n") != std::string::npos);
  CHECK(inv.find("You are going to invite 3 experts") != std::string::npos);
  CHECK(inv.find("### INVITATION:") != std::string::npos);
  CHECK(pot.find("### DATABASE STRUCTURE:") != std::string::npos);
  // rendering is pure
  CHECK(t.get(TemplateName::cot_writer).render(f.writer_bindings()) == cot);
}

TEST_CASE("template slots") {
  PromptTemplate p(TemplateName::debug_feedback, "a {x} b {y} {x} {{lit}} {Not} {}");
  CHECK(p.slots() == std::vector<std::string>{"x", "y"});
  CHECK(p.render({{"x", "1"}, {"y", "2"}}) == "a 1 b 2 1 {lit} {Not} {}");
  try {
    p.render({{"x", "1"}});
    FAIL("expected UnboundSlot");
  } catch (const UnboundSlot& e) {
    CHECK(e.slot() == "y");
  }
  // substituted text is not rescanned
  CHECK(p.render({{"x", "{y}"}, {"y", "2"}}) == "a {y} b 2 {y} {lit} {Not} {}");

  Rendered r = p.render_tracking({{"x", "XX"}, {"y", "2"}}, "x");
  REQUIRE(r.span);
  CHECK(r.text.substr(r.span->begin, r.span->size()) == "XX");
  CHECK(r.span->begin == 2);

  for (TemplateName name : kAllTemplates) {
    auto body = TemplateSet::builtin().get(name).body();
    CHECK_FALSE(body.empty());
  }
}

TEST_CASE("rendering leaves no slot markers") {
  const TemplateSet t = TemplateSet::builtin();
  for (TemplateName name : kAllTemplates) {
    const PromptTemplate& p = t.get(name);
    Bindings b;
    for (const auto& s : p.slots()) b.emplace(s, "<" + s + ">");
    std::string out = p.render(b);
    for (const auto& s : p.slots()) {
      CAPTURE(s);
      CHECK(out.find("{" + s + "}") == std::string::npos);
    }
  }
}

TEST_CASE("template overrides") {
  consql::testing::TempDir dir;
  util::write_file_atomic(dir / "debug_feedback.txt", "Error: {error}");
  TemplateSet t = TemplateSet::with_overrides(dir.path());
  CHECK(t.get(TemplateName::debug_feedback).render({{"error", "e"}}) == "Error: e");
  CHECK(t.get(TemplateName::invitation).body() == TemplateSet::builtin().get(TemplateName::invitation).body());
}

TEST_CASE("shot formatting") {
  CHECK(format_shots({}) == "");
  CHECK(format_shots({{"q1", "s1"}, {"q2", "s2"}}) == "QUESTION: q1\nSQL: s1\n\nQUESTION: q2\nSQL: s2");
}

TEST_CASE("fenced blocks") {
  auto one = extract_fenced("x ```sql\nSELECT 1\n``` y", "sql");
  REQUIRE(one.size() == 1);
  CHECK(one[0].content == "SELECT 1");
  CHECK_FALSE(one[0].unterminated);

  auto two = extract_fenced("```SQL\nA\n```\ntext\n```python\nB\n```\n```sql\nC\n```", "sql");
  REQUIRE(two.size() == 2);
  CHECK(two[0].content == "A");
  CHECK(two[1].content == "C");

  auto open = extract_fenced("```sql\nSELECT 2\n", "sql");
  REQUIRE(open.size() == 1);
  CHECK(open[0].unterminated);
  CHECK(open[0].content == "SELECT 2\n");
  CHECK(extract_fenced("no fences", "sql").empty());

  auto json = extract_fenced(std::string(builtin_asset("invitation")), "json");
  REQUIRE(json.size() == 1);
  int reviewers = 0;
  for (std::size_t p = 0; (p = json[0].content.find("\"Reviewer ", p)) != std::string::npos; ++p) ++reviewers;
  CHECK(reviewers == 3);
}

TEST_CASE("final SQL extraction") {
  CHECK(extract_final_sql("```python\nresult = db_dict['singer']\n```\n```sql\nSELECT * FROM singer\n```").raw() ==
        "SELECT * FROM singer");
  CHECK(extract_final_sql("SELECT name FROM singer").raw() == "SELECT name FROM singer");
  CHECK(extract_final_sql("The answer is: with x as (select 1) select * from x").raw() ==
        "with x as (select 1) select * from x");
  CHECK(extract_final_sql("```sql\nA\n```\n```sql\nB\n```").raw() == "B");
  CHECK(extract_final_sql("```sql\nA\n```\n```sql\n\n```").raw() == "A");
  CHECK_THROWS_AS(extract_final_sql("I cannot answer that."), NoSqlFound);
  // "selected" is not a keyword hit
  CHECK_THROWS_AS(extract_final_sql("I selected nothing."), NoSqlFound);
  CHECK_FALSE(extract_fenced_sql("SELECT 1"));

  std::mt19937 rng(9);
  const std::string alphabet = "SELECT abc*,()'\"\n\t=<>1;FROM";
  for (int i = 0; i < 300; ++i) {
    std::string s = "SELECT ";
    for (int j = static_cast<int>(rng() % 30); j > 0; --j) s.push_back(alphabet[rng() % alphabet.size()]);
    if (s.find("```") != std::string::npos) continue;
    while (s.back() == '\n') s.pop_back();
    CAPTURE(s);
    CHECK(extract_final_sql("Here:\n```sql\n" + s + "\n```\nDone.").raw() == s);
  }
}

TEST_CASE("truncation examples") {
  DialogueHistory h(600);
  for (int i = 0; i < 10; ++i) h.append(msg(i % 2 == 0 ? Role::user : Role::assistant, 100, std::to_string(i + 1)));
  DialogueHistory t = truncate_history(h);
  std::vector<std::string> kept;
  for (const auto& m : t.messages()) kept.push_back(m.content().substr(0, m.content().find('.')));
  CHECK(kept == std::vector<std::string>{"1", "7", "8", "9", "10"});

  DialogueHistory small(10000);
  small.append(msg(Role::user, 10));
  CHECK(truncate_history(small) == small);

  DialogueHistory tight(150);
  tight.append(msg(Role::user, 100));
  tight.append(msg(Role::assistant, 100));
  CHECK_THROWS_AS(truncate_history(tight), BudgetTooSmall);

  DialogueHistory unbounded(0);
  for (int i = 0; i < 5; ++i) unbounded.append(msg(Role::user, 1000));
  CHECK(truncate_history(unbounded) == unbounded);
}

TEST_CASE("truncation trims the schema span") {
  std::string schema(400, 's');
  std::string content = "Question?\n" + schema + "\nEnd.";
  DialogueHistory h(120);
  h.append(AgentMessage(Role::user, Author::environment(), content, Span{10, 410}));
  h.append(msg(Role::assistant, 20));
  DialogueHistory t = truncate_history(h);
  REQUIRE(t.size() == 2);
  CHECK(t.token_sum() < 120);
  const AgentMessage& first = t.messages()[0];
  CHECK(first.content().rfind("Question?\n", 0) == 0);
  CHECK(first.content().find("\nEnd.") != std::string::npos);
  CHECK(first.truncatable()->size() < 400);
  // just enough was cut
  CHECK(t.token_sum() >= 118);
}

TEST_CASE("truncation properties") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    DialogueHistory h(0);
    std::size_t n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      Role role = i == 0 ? (rng() % 4 == 0 ? Role::system : Role::user) : (i % 2 ? Role::assistant : Role::user);
      std::string text(rng() % 800, 'a' + static_cast<char>(i % 26));
      if (i <= 1 && role == Role::user && text.size() > 20 && rng() % 2) {
        h.append(AgentMessage(role, Author::environment(), text, Span{10, text.size() - 5}));
      } else {
        h.append(AgentMessage(role, role == Role::assistant ? Author::writer() : Author::environment(), text));
      }
    }
    std::size_t budget = 1 + rng() % (h.token_sum() + 50);
    DialogueHistory hb(h.messages(), budget);
    CAPTURE(trial);
    try {
      DialogueHistory t = truncate_history(hb);
      CHECK(t.token_sum() <= budget);
      CHECK(t.token_sum() <= hb.token_sum());
      CHECK(t.messages().back().content_without_span() == hb.messages().back().content_without_span());
      if (auto fu = hb.first_user_index()) {
        REQUIRE(t.first_user_index());
        const AgentMessage& before = hb.messages()[*fu];
        const AgentMessage& after = t.messages()[*t.first_user_index()];
        CHECK(after.content_without_span() == before.content_without_span());
      }
      // survivors keep their order
      std::size_t j = 0;
      for (const auto& m : t.messages()) {
        while (j < hb.size() && hb.messages()[j].content_without_span() != m.content_without_span()) ++j;
        CHECK(j < hb.size());
        ++j;
      }
    } catch (const BudgetTooSmall&) {
      std::size_t floor = estimate_tokens(hb.messages().back().content());
      if (auto fu = hb.first_user_index(); fu && *fu + 1 != hb.size()) {
        floor += estimate_tokens(hb.messages()[*fu].content_without_span());
      }
      CHECK(budget <= floor);
    }
  }
}
