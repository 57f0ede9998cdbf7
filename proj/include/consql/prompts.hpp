#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "consql/core.hpp"

namespace consql::prompts {

enum class TemplateName {
  cot_writer,
  pot_writer,
  invitation,
  reviewer_system,
  reviewer_comment,
  revision_request,
  debug_feedback,
};
inline constexpr TemplateName kAllTemplates[] = {
    TemplateName::cot_writer,       TemplateName::pot_writer,       TemplateName::invitation,
    TemplateName::reviewer_system,  TemplateName::reviewer_comment, TemplateName::revision_request,
    TemplateName::debug_feedback,
};
std::string_view to_string(TemplateName t);

using Bindings = std::map<std::string, std::string, std::less<>>;

class UnboundSlot : public std::runtime_error {
 public:
  explicit UnboundSlot(std::string slot)
      : std::runtime_error("template slot {" + slot + "} is not bound"), slot_(std::move(slot)) {}
  const std::string& slot() const { return slot_; }

 private:
  std::string slot_;
};

struct Rendered {
  std::string text;
  /// Byte range of the first substitution of the tracked slot, if requested.
  std::optional<Span> span;
};

/// Template text with `{slot}` markers (lowercase identifiers). `{{` and `}}`
/// produce literal braces; any other brace is literal.
class PromptTemplate {
 public:
  PromptTemplate(TemplateName name, std::string body) : name_(name), body_(std::move(body)) {}

  TemplateName name() const { return name_; }
  const std::string& body() const { return body_; }

  /// Slot names in order of first appearance.
  std::vector<std::string> slots() const;

  std::string render(const Bindings& bindings) const;
  Rendered render_tracking(const Bindings& bindings, std::string_view tracked_slot) const;

 private:
  TemplateName name_;
  std::string body_;
};

/// The full set of templates. Built-in bodies are compiled into the binary
/// from assets/prompts; a directory may override any subset.
class TemplateSet {
 public:
  static TemplateSet builtin();
  /// Files named <template>.txt in `dir` replace the built-in body.
  static TemplateSet with_overrides(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateName name) const;

 private:
  std::vector<PromptTemplate> templates_;
};

/// Built-in asset text by file stem, as embedded at build time.
std::string_view builtin_asset(std::string_view stem);

// ---------------------------------------------------------------------------

using SampleRows = std::map<std::string, ResultTable, std::less<>>;

/// CREATE TABLE blocks in catalog order with key annotations as comments.
std::string serialize_schema(const DatabaseSchema& schema, const SampleRows* sample_rows = nullptr);

/// "QUESTION: ...\nSQL: ..." blocks separated by blank lines.
std::string format_shots(const std::vector<std::pair<std::string, std::string>>& shots);

struct FencedBlock {
  std::string content;
  bool unterminated = false;
};

/// Every ```tag fence in order. Tag comparison is case-insensitive; an empty
/// tag selects untagged fences.
std::vector<FencedBlock> extract_fenced(std::string_view text, std::string_view tag);

class NoSqlFound : public std::runtime_error {
 public:
  NoSqlFound() : std::runtime_error("no SQL found in response") {}
};

/// Last non-empty ```sql fence; otherwise the text from the first SELECT/WITH
/// keyword to the end. Throws NoSqlFound.
SqlQuery extract_final_sql(std::string_view text);

/// Like extract_final_sql but only looks at ```sql fences.
std::optional<SqlQuery> extract_fenced_sql(std::string_view text);

class BudgetTooSmall : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Brings the history strictly below its budget (one token stays free for the
/// reply). Evicts the oldest messages outside the first user message and the
/// last four, then trims the schema span of the first user message, then
/// evicts from the last four except the final message. A budget of 0 means
/// unbounded.
DialogueHistory truncate_history(const DialogueHistory& history);

}  // namespace consql::prompts
