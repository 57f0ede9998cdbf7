#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "consql/core.hpp"
#include "consql/llm_client.hpp"
#include "consql/prompts.hpp"
#include "consql/sandbox.hpp"

namespace consql::orchestrator {

using Shot = std::pair<std::string, std::string>;  // (question, sql)

/// Everything one run needs besides the configuration.
struct RunContext {
  llm::ChatClient& client;
  sandbox::Sandbox& sandbox;
  const prompts::TemplateSet& templates;
};

struct RunInput {
  const TaskInstance& instance;
  const DatabaseSchema& schema;
  std::vector<Shot> shots;
  const prompts::SampleRows* sample_rows = nullptr;
};

/// Reviewer panel from an invitation reply: the ```json fence parsed as a flat
/// object of strings, entries in document order, "Reviewer X" keys giving
/// handle X. nullopt when there is no such object.
std::optional<std::vector<ReviewerProfile>> parse_invitation(std::string_view reply);

/// n built-in reviewers with handles D1..Dn.
std::vector<ReviewerProfile> default_panel(int n);

struct InvitationResult {
  std::vector<ReviewerProfile> panel;
  int calls = 0;
  bool used_defaults = false;
};

/// Asks the writer model for n reviewer professions. One retry on an
/// unusable reply or client failure, then defaults; a short panel is padded
/// with defaults and a long one cut to n.
InvitationResult invite_reviewers(llm::ChatClient& client, const prompts::TemplateSet& templates,
                                  const RunConfig& config, const std::string& schema_text,
                                  const std::string& question, const std::string& pred_sql, int n);

/// Placeholder comment for a reviewer whose call failed.
std::string no_comment(const ReviewerProfile& reviewer);

/// Reviewer comments in panel order, each under a
/// "Reviewer <handle> (<profession>):" header, separated by blank lines.
std::string merge_reviews(const std::vector<ReviewerProfile>& panel, const std::vector<std::string>& comments);

/// Upper bound on LLM calls for one run: draft, invitation with one retry,
/// a full debug loop before each review turn except the last, and n
/// reviewers plus the revision per review turn.
int max_llm_calls(const RunConfig& config);

/// Writer/reviewer loop for one instance. Drafts SQL, repairs it against the
/// database until it executes, then asks the reviewer panel for comments and
/// the writer for a revision until the revision equals the reviewed query
/// (consensus), the review cap is reached, or repairs run out. Client
/// failures end the run with termination=client_error; nothing is thrown
/// for model or SQL misbehaviour.
RunRecord run_review_loop(const RunInput& input, const RunConfig& config, const RunContext& context);

// ---------------------------------------------------------------------------
// Records as JSON

nlohmann::json record_to_json(const RunRecord& record);
/// Throws std::invalid_argument (or a json exception) on malformed input.
RunRecord record_from_json(const nlohmann::json& doc);

}  // namespace consql::orchestrator
