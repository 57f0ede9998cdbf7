#include "consql/orchestrator.hpp"

#include <algorithm>

#include "consql/pot.hpp"
#include "consql/util.hpp"

namespace consql::orchestrator {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Reviewer panel

std::optional<std::vector<ReviewerProfile>> parse_invitation(std::string_view reply) {
  for (const auto& block : prompts::extract_fenced(reply, "json")) {
    nlohmann::ordered_json doc;
    try {
      doc = nlohmann::ordered_json::parse(block.content);
    } catch (const nlohmann::json::exception&) {
      continue;
    }
    if (!doc.is_object() || doc.empty()) continue;
    std::vector<ReviewerProfile> panel;
    bool flat = true;
    for (const auto& [key, value] : doc.items()) {
      if (!value.is_string()) {
        flat = false;
        break;
      }
      std::string handle = key;
      if (handle.rfind("Reviewer ", 0) == 0) handle = handle.substr(9);
      while (!handle.empty() && handle.front() == ' ') handle.erase(handle.begin());
      auto taken = [&](const std::string& h) {
        return std::any_of(panel.begin(), panel.end(), [&](const auto& p) { return p.handle == h; });
      };
      if (handle.empty() || taken(handle)) handle = "R" + std::to_string(panel.size() + 1);
      panel.push_back({handle, value.get<std::string>()});
    }
    if (flat) return panel;
  }
  return std::nullopt;
}

std::vector<ReviewerProfile> default_panel(int n) {
  static const char* kProfessions[] = {
      "Senior Database Engineer specialized in query correctness",
      "Data Analyst familiar with the database domain",
      "Database Administrator specialized in schema design and joins",
      "SQL Developer specialized in filtering conditions and aggregation",
      "Data Quality Engineer specialized in result validation",
  };
  std::vector<ReviewerProfile> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"D" + std::to_string(i + 1), kProfessions[i % std::size(kProfessions)]});
  }
  return out;
}

InvitationResult invite_reviewers(llm::ChatClient& client, const prompts::TemplateSet& templates,
                                  const RunConfig& config, const std::string& schema_text,
                                  const std::string& question, const std::string& pred_sql, int n) {
  InvitationResult result;
  std::string prompt = templates.get(prompts::TemplateName::invitation)
                           .render({{"n", std::to_string(n)},
                                    {"schema", schema_text},
                                    {"question", question},
                                    {"pred_sql", pred_sql}});
  llm::ChatRequest request{{{Role::user, prompt}}, config.temperature, config.max_output_tokens, config.model_name};
  std::optional<std::vector<ReviewerProfile>> panel;
  for (int attempt = 0; attempt < 2 && !panel; ++attempt) {
    ++result.calls;
    try {
      panel = parse_invitation(client.complete(request).content);
    } catch (const llm::ClientError& e) {
      util::log_warn(std::string("reviewer invitation failed: ") + e.what());
    }
  }
  if (!panel) {
    result.used_defaults = true;
    result.panel = default_panel(n);
    return result;
  }
  if (static_cast<int>(panel->size()) > n) panel->resize(static_cast<std::size_t>(n));
  for (const auto& d : default_panel(n)) {
    if (static_cast<int>(panel->size()) >= n) break;
    bool taken = std::any_of(panel->begin(), panel->end(), [&](const auto& p) { return p.handle == d.handle; });
    if (!taken) panel->push_back(d);
  }
  result.panel = std::move(*panel);
  return result;
}

std::string no_comment(const ReviewerProfile& reviewer) { return "Reviewer " + reviewer.handle + ": (no comment)"; }

std::string merge_reviews(const std::vector<ReviewerProfile>& panel, const std::vector<std::string>& comments) {
  std::string out;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "Reviewer " + panel[i].handle + " (" + panel[i].profession + "):\n" + comments.at(i);
  }
  return out;
}

int max_llm_calls(const RunConfig& c) {
  if (c.max_review_turns == 0) return 1 + c.max_debug_turns;
  return 3 + c.max_review_turns * c.max_debug_turns + c.max_review_turns * (c.n_reviewers + 1);
}

// ---------------------------------------------------------------------------
// The loop

namespace {

struct ClientFailure {
  std::string message;
};

class Run {
 public:
  Run(const RunInput& input, const RunConfig& config, const RunContext& ctx)
      : in_(input), config_(config), ctx_(ctx) {
    record_.instance_id = input.instance.id;
    record_.db_id = input.instance.db_id;
    record_.transcript = DialogueHistory(config.history_budget);
  }

  RunRecord run() {
    try {
      loop();
    } catch (const ClientFailure& f) {
      record_.termination = Termination::client_error;
      record_.error_message = f.message;
      event(LoopEvent::Kind::client_error, f.message);
    }
    record_.final_sql = y_;
    return std::move(record_);
  }

 private:
  void loop() {
    schema_text_ = prompts::serialize_schema(in_.schema, in_.sample_rows);
    auto name = config_.mode == WriterMode::pot ? prompts::TemplateName::pot_writer : prompts::TemplateName::cot_writer;
    prompts::Rendered first = ctx_.templates.get(name).render_tracking(
        {{"evidence", in_.instance.evidence.value_or("")},
         {"question", in_.instance.question},
         {"related_sql", prompts::format_shots(in_.shots)},
         {"schema", schema_text_}},
        "schema");
    append(AgentMessage(Role::user, Author::environment(), first.text, first.span));

    std::string draft = ask_writer();
    y_ = writer_sql(draft, "draft").value_or(SqlQuery());
    event(LoopEvent::Kind::writer_draft, y_.raw());

    if (!debug_loop()) return;
    if (config_.max_review_turns == 0) {
      record_.termination = Termination::review_cap;
      return;
    }
    while (record_.review_turns_used < config_.max_review_turns) {
      if (record_.panel.empty()) invite();
      std::string reviews = collect_reviews();
      append(AgentMessage(Role::user, Author::environment(),
                          ctx_.templates.get(prompts::TemplateName::revision_request).render({{"reviews", reviews}})));
      event(LoopEvent::Kind::reviews, std::to_string(record_.panel.size()) + " reviewers");

      std::string reply = ask_writer();
      ++record_.review_turns_used;
      std::optional<SqlQuery> revised = writer_sql(reply, "revision");
      if (!revised) {
        event(LoopEvent::Kind::writer_revision, "no SQL found; treated as a repeat");
        revised = y_;
      } else {
        event(LoopEvent::Kind::writer_revision, revised->raw());
      }
      if (revised->same_as(y_)) {
        record_.termination = Termination::consensus;
        event(LoopEvent::Kind::consensus, y_.normalized());
        return;
      }
      y_ = *revised;
      if (record_.review_turns_used >= config_.max_review_turns) {
        record_.termination = Termination::review_cap;
        return;
      }
      if (!debug_loop()) return;
    }
  }

  // Executes y until it runs, asking the writer for fixes. False when the
  // repair budget ran out (termination already set).
  bool debug_loop() {
    for (int j = 0;; ++j) {
      sandbox::ExecError error;
      if (y_.empty()) {
        error = {sandbox::ErrorKind::other, "no SQL query found in the response"};
      } else {
        sandbox::ExecOptions opts{std::chrono::milliseconds(config_.sql_timeout_ms), std::nullopt};
        auto outcome = ctx_.sandbox.execute(in_.instance.db_id, y_, opts);
        if (outcome.ok()) {
          table_ = outcome.table();
          event(LoopEvent::Kind::exec_ok, std::to_string(table_.row_count()) + " rows");
          return true;
        }
        error = outcome.error();
      }
      event(LoopEvent::Kind::exec_error, error.message);
      if (j >= config_.max_debug_turns) {
        record_.termination = Termination::debug_exhausted;
        record_.error_message = error.message;
        return false;
      }
      append(AgentMessage(Role::user, Author::environment(),
                          ctx_.templates.get(prompts::TemplateName::debug_feedback).render({{"error", error.message}})));
      std::string reply = ask_writer();
      ++record_.debug_turns_used;
      y_ = writer_sql(reply, "debug").value_or(SqlQuery());
      event(LoopEvent::Kind::writer_debug, y_.raw());
    }
  }

  void invite() {
    InvitationResult inv = invite_reviewers(ctx_.client, ctx_.templates, config_, schema_text_,
                                            in_.instance.question, y_.raw(), config_.n_reviewers);
    record_.llm_calls += inv.calls;
    record_.panel = inv.panel;
    std::string handles;
    for (const auto& p : record_.panel) handles += (handles.empty() ? "" : ",") + p.handle;
    event(LoopEvent::Kind::invitation, (inv.used_defaults ? "defaults: " : "") + handles);
  }

  std::string collect_reviews() {
    std::string table = sandbox::render_table(table_, config_.render_row_cap, config_.render_cell_chars);
    std::string user = ctx_.templates.get(prompts::TemplateName::reviewer_comment)
                           .render({{"schema", schema_text_},
                                    {"evidence", in_.instance.evidence.value_or("")},
                                    {"question", in_.instance.question},
                                    {"pred_sql", y_.raw()},
                                    {"result_table", table}});
    std::vector<std::string> comments;
    for (const auto& reviewer : record_.panel) {
      std::string system =
          ctx_.templates.get(prompts::TemplateName::reviewer_system).render({{"profession", reviewer.profession}});
      llm::ChatRequest request{{{Role::system, system}, {Role::user, user}}, config_.temperature,
                               config_.max_output_tokens, config_.model_name};
      ++record_.llm_calls;
      try {
        comments.push_back(ctx_.client.complete(request).content);
      } catch (const llm::ClientError& e) {
        util::log_warn("reviewer " + reviewer.handle + " failed: " + e.what());
        comments.push_back(no_comment(reviewer));
      }
    }
    return merge_reviews(record_.panel, comments);
  }

  std::string ask_writer() {
    llm::ChatRequest request;
    request.temperature = config_.temperature;
    request.max_output_tokens = config_.max_output_tokens;
    request.model_name = config_.model_name;
    for (const auto& m : record_.transcript.messages()) request.messages.push_back({m.role(), m.content()});
    ++record_.llm_calls;
    std::string reply;
    try {
      reply = ctx_.client.complete(request).content;
    } catch (const llm::ClientError& e) {
      throw ClientFailure{e.what()};
    }
    append(AgentMessage(Role::assistant, Author::writer(), reply));
    return reply;
  }

  // SQL from a writer reply. In pot mode an explicit ```sql block wins, then
  // the lowered program, then the plain-text fallback.
  std::optional<SqlQuery> writer_sql(const std::string& reply, std::string_view stage) {
    std::optional<SqlQuery> fenced = prompts::extract_fenced_sql(reply);
    if (config_.mode == WriterMode::pot) {
      std::optional<SqlQuery> lowered = lower_program(reply, !fenced.has_value(), stage);
      if (fenced) return fenced;
      if (lowered) return lowered;
    } else if (fenced) {
      return fenced;
    }
    try {
      return prompts::extract_final_sql(reply);
    } catch (const prompts::NoSqlFound&) {
      return std::nullopt;
    }
  }

  std::optional<SqlQuery> lower_program(const std::string& reply, bool as_draft, std::string_view stage) {
    PotAudit audit;
    try {
      pot::Program program = pot::parse_codeblocks(reply);
      audit.program = pot::pretty_print(program);
      audit.lowered_sql = pot::lower_to_sql(program, in_.schema).raw();
    } catch (const pot::NoCodeFound&) {
      return std::nullopt;
    } catch (const pot::PotError& e) {
      audit.error = std::string(stage) + ": " + e.what();
      record_.pot_audit.push_back(std::move(audit));
      return std::nullopt;
    }
    audit.used_as_draft = as_draft;
    SqlQuery sql(audit.lowered_sql);
    record_.pot_audit.push_back(std::move(audit));
    return sql;
  }

  void append(AgentMessage m) {
    record_.transcript.append(std::move(m));
    try {
      record_.transcript = prompts::truncate_history(record_.transcript);
    } catch (const prompts::BudgetTooSmall& e) {
      throw ClientFailure{std::string("history budget too small: ") + e.what()};
    }
  }

  void event(LoopEvent::Kind kind, std::string detail) { record_.events.push_back({kind, std::move(detail)}); }

  const RunInput& in_;
  const RunConfig& config_;
  const RunContext& ctx_;
  RunRecord record_;
  std::string schema_text_;
  SqlQuery y_;
  ResultTable table_;
};

}  // namespace

RunRecord run_review_loop(const RunInput& input, const RunConfig& config, const RunContext& context) {
  config.validate();
  return Run(input, config, context).run();
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json optional_string(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

}  // namespace

json record_to_json(const RunRecord& r) {
  json messages = json::array();
  for (const auto& m : r.transcript.messages()) {
    json span = nullptr;
    if (m.truncatable()) span = json::array({m.truncatable()->begin, m.truncatable()->end});
    messages.push_back({{"role", to_string(m.role())},
                        {"author", author_to_string(m.author())},
                        {"content", m.content()},
                        {"span", span}});
  }
  json events = json::array();
  for (const auto& e : r.events) events.push_back({{"kind", to_string(e.kind)}, {"detail", e.detail}});
  json panel = json::array();
  for (const auto& p : r.panel) panel.push_back({{"handle", p.handle}, {"profession", p.profession}});
  json audit = json::array();
  for (const auto& a : r.pot_audit) {
    audit.push_back({{"program", a.program},
                     {"lowered_sql", a.lowered_sql},
                     {"error", a.error},
                     {"used_as_draft", a.used_as_draft}});
  }
  return {{"instance_id", r.instance_id},
          {"db_id", r.db_id},
          {"transcript", {{"budget", r.transcript.budget()}, {"messages", messages}}},
          {"events", events},
          {"panel", panel},
          {"debug_turns_used", r.debug_turns_used},
          {"review_turns_used", r.review_turns_used},
          {"llm_calls", r.llm_calls},
          {"final_sql", r.final_sql.raw()},
          {"termination", to_string(r.termination)},
          {"outcome", r.outcome ? json(std::string(to_string(*r.outcome))) : json(nullptr)},
          {"error_label", optional_string(r.error_label)},
          {"error_message", r.error_message},
          {"pot_audit", audit}};
}

RunRecord record_from_json(const json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("run record must be a JSON object");
  RunRecord r;
  r.instance_id = doc.at("instance_id").get<std::string>();
  r.db_id = doc.at("db_id").get<std::string>();
  const json& t = doc.at("transcript");
  std::vector<AgentMessage> messages;
  for (const auto& m : t.at("messages")) {
    std::optional<Span> span;
    if (!m.at("span").is_null()) span = Span{m["span"].at(0).get<std::size_t>(), m["span"].at(1).get<std::size_t>()};
    messages.emplace_back(role_from_string(m.at("role").get<std::string>()),
                          author_from_string(m.at("author").get<std::string>()), m.at("content").get<std::string>(),
                          span);
  }
  r.transcript = DialogueHistory(std::move(messages), t.at("budget").get<std::size_t>());
  for (const auto& e : doc.at("events")) {
    r.events.push_back({loop_event_kind_from_string(e.at("kind").get<std::string>()), e.at("detail").get<std::string>()});
  }
  for (const auto& p : doc.at("panel")) {
    r.panel.push_back({p.at("handle").get<std::string>(), p.at("profession").get<std::string>()});
  }
  r.debug_turns_used = doc.at("debug_turns_used").get<int>();
  r.review_turns_used = doc.at("review_turns_used").get<int>();
  r.llm_calls = doc.at("llm_calls").get<int>();
  r.final_sql = SqlQuery(doc.at("final_sql").get<std::string>());
  r.termination = termination_from_string(doc.at("termination").get<std::string>());
  if (!doc.at("outcome").is_null()) r.outcome = outcome_from_string(doc["outcome"].get<std::string>());
  if (!doc.at("error_label").is_null()) r.error_label = doc["error_label"].get<std::string>();
  r.error_message = doc.at("error_message").get<std::string>();
  for (const auto& a : doc.at("pot_audit")) {
    r.pot_audit.push_back({a.at("program").get<std::string>(), a.at("lowered_sql").get<std::string>(),
                           a.at("error").get<std::string>(), a.at("used_as_draft").get<bool>()});
  }
  return r;
}

}  // namespace consql::orchestrator
