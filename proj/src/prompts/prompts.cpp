#include "consql/prompts.hpp"

#include <algorithm>
#include <cctype>

#include "consql/util.hpp"

namespace consql::prompts {
namespace {

bool is_slot_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; }

// Length of a `{ident}` marker starting at body[i], or 0.
std::size_t slot_length(std::string_view body, std::size_t i) {
  if (body[i] != '{' || i + 1 >= body.size()) return 0;
  std::size_t j = i + 1;
  if (!(body[j] >= 'a' && body[j] <= 'z')) return 0;
  while (j < body.size() && is_slot_char(body[j])) ++j;
  if (j >= body.size() || body[j] != '}') return 0;
  return j + 1 - i;
}

template <typename OnText, typename OnSlot>
void scan_template(std::string_view body, OnText on_text, OnSlot on_slot) {
  std::size_t i = 0;
  std::size_t text_start = 0;
  auto flush = [&](std::size_t end) {
    if (end > text_start) on_text(body.substr(text_start, end - text_start));
  };
  while (i < body.size()) {
    char c = body[i];
    if ((c == '{' || c == '}') && i + 1 < body.size() && body[i + 1] == c) {
      flush(i);
      on_text(body.substr(i, 1));
      i += 2;
      text_start = i;
    } else if (std::size_t len = slot_length(body, i); len > 0) {
      flush(i);
      on_slot(body.substr(i + 1, len - 2));
      i += len;
      text_start = i;
    } else {
      ++i;
    }
  }
  flush(body.size());
}

std::string_view strip_one_newline(std::string_view s) {
  if (!s.empty() && s.back() == '\n') s.remove_suffix(1);
  return s;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string one_line(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\n') {
      out += "\\n";
    } else if (c == '\r') {
      out += "\\r";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(TemplateName t) {
  switch (t) {
    case TemplateName::cot_writer: return "cot_writer";
    case TemplateName::pot_writer: return "pot_writer";
    case TemplateName::invitation: return "invitation";
    case TemplateName::reviewer_system: return "reviewer_system";
    case TemplateName::reviewer_comment: return "reviewer_comment";
    case TemplateName::revision_request: return "revision_request";
    case TemplateName::debug_feedback: return "debug_feedback";
  }
  return "unknown";
}

std::vector<std::string> PromptTemplate::slots() const {
  std::vector<std::string> out;
  scan_template(body_, [](std::string_view) {}, [&](std::string_view slot) {
    if (std::find(out.begin(), out.end(), slot) == out.end()) out.emplace_back(slot);
  });
  return out;
}

Rendered PromptTemplate::render_tracking(const Bindings& bindings,
                                         std::string_view tracked_slot) const {
  Rendered r;
  r.text.reserve(body_.size() * 2);
  scan_template(
      body_, [&](std::string_view text) { r.text.append(text); },
      [&](std::string_view slot) {
        auto it = bindings.find(slot);
        if (it == bindings.end()) throw UnboundSlot(std::string(slot));
        std::size_t begin = r.text.size();
        r.text.append(it->second);
        if (!r.span && !tracked_slot.empty() && slot == tracked_slot) {
          r.span = Span{begin, r.text.size()};
        }
      });
  return r;
}

std::string PromptTemplate::render(const Bindings& bindings) const {
  return render_tracking(bindings, {}).text;
}

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  for (TemplateName t : kAllTemplates) {
    set.templates_.emplace_back(t, std::string(strip_one_newline(builtin_asset(to_string(t)))));
  }
  return set;
}

TemplateSet TemplateSet::with_overrides(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("template directory not found: " + dir.string());
  }
  TemplateSet set = builtin();
  for (auto& tmpl : set.templates_) {
    auto path = dir / (std::string(to_string(tmpl.name())) + ".txt");
    if (std::filesystem::exists(path)) {
      tmpl = PromptTemplate(tmpl.name(), std::string(strip_one_newline(util::read_file(path))));
    }
  }
  return set;
}

const PromptTemplate& TemplateSet::get(TemplateName name) const {
  for (const auto& t : templates_) {
    if (t.name() == name) return t;
  }
  throw std::out_of_range("template not loaded: " + std::string(to_string(name)));
}

// ---------------------------------------------------------------------------

std::string serialize_schema(const DatabaseSchema& schema, const SampleRows* sample_rows) {
  std::string out;
  for (const auto& table : schema.tables) {
    if (!out.empty()) out += "\n\n";
    out += "CREATE TABLE " + quote_identifier(table.name) + " (\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
      const Column& col = table.columns[i];
      out += "  " + quote_identifier(col.name);
      if (!col.type.empty()) out += " " + col.type;
      if (i + 1 < table.columns.size()) out += ",";
      if (col.is_primary_key) out += " -- primary key";
      out += "\n";
    }
    out += ");";
    for (const auto& fk : schema.foreign_keys) {
      if (!iequals(fk.from_table, table.name)) continue;
      out += "\n-- " + fk.from_table + "." + fk.from_column + " references " + fk.to_table + "." +
             fk.to_column;
    }
    if (sample_rows == nullptr) continue;
    auto it = sample_rows->find(table.name);
    if (it == sample_rows->end() || it->second.row_count() == 0) continue;
    const ResultTable& rows = it->second;
    out += "\n-- sample rows:";
    std::string header;
    for (const auto& c : rows.columns()) header += (header.empty() ? "" : " | ") + c;
    out += "\n-- " + one_line(header);
    for (std::size_t r = 0; r < std::min<std::size_t>(3, rows.row_count()); ++r) {
      std::string line;
      for (std::size_t c = 0; c < rows.column_count(); ++c) {
        if (c > 0) line += " | ";
        line += cell_to_text(rows.rows()[r][c]);
      }
      out += "\n-- " + one_line(line);
    }
  }
  return out;
}

std::string format_shots(const std::vector<std::pair<std::string, std::string>>& shots) {
  std::string out;
  for (const auto& [question, sql] : shots) {
    if (!out.empty()) out += "\n\n";
    out += "QUESTION: " + question + "\nSQL: " + sql;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<FencedBlock> extract_fenced(std::string_view text, std::string_view tag) {
  std::vector<FencedBlock> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t i = open + 3;
    std::size_t tag_start = i;
    while (i < text.size() && !is_space(text[i]) && text[i] != '`') ++i;
    std::string_view found_tag = text.substr(tag_start, i - tag_start);
    // Content starts after the rest of the opening line's blanks and newline.
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r')) ++i;
    if (i < text.size() && text[i] == '\n') ++i;
    std::size_t close = text.find("```", i);
    bool unterminated = close == std::string_view::npos;
    std::size_t content_end = unterminated ? text.size() : close;
    if (iequals(found_tag, tag)) {
      std::string_view content = text.substr(i, content_end - i);
      if (!unterminated) {
        if (!content.empty() && content.back() == '\n') content.remove_suffix(1);
        if (!content.empty() && content.back() == '\r') content.remove_suffix(1);
      }
      out.push_back({std::string(content), unterminated});
    }
    if (unterminated) break;
    pos = close + 3;
  }
  return out;
}

std::optional<SqlQuery> extract_fenced_sql(std::string_view text) {
  auto blocks = extract_fenced(text, "sql");
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    if (!trim(it->content).empty()) return SqlQuery(it->content);
  }
  return std::nullopt;
}

SqlQuery extract_final_sql(std::string_view text) {
  if (auto fenced = extract_fenced_sql(text)) return *fenced;
  auto word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i > 0 && word_char(text[i - 1])) continue;
    for (std::string_view kw : {std::string_view("select"), std::string_view("with")}) {
      if (i + kw.size() > text.size()) continue;
      if (!iequals(text.substr(i, kw.size()), kw)) continue;
      if (i + kw.size() < text.size() && word_char(text[i + kw.size()])) continue;
      std::string_view rest = text.substr(i);
      while (!rest.empty() && (is_space(rest.back()) || rest.back() == '`')) rest.remove_suffix(1);
      return SqlQuery(std::string(rest));
    }
  }
  throw NoSqlFound();
}

// ---------------------------------------------------------------------------

DialogueHistory truncate_history(const DialogueHistory& history) {
  const std::size_t budget = history.budget();
  if (budget == 0 || history.token_sum() < budget) return history;

  std::vector<AgentMessage> msgs = history.messages();
  const std::optional<std::size_t> first_user = history.first_user_index();

  std::size_t floor = estimate_tokens(msgs.back().content());
  if (first_user && *first_user != msgs.size() - 1) {
    floor += estimate_tokens(msgs[*first_user].content_without_span());
  } else if (first_user) {
    floor = estimate_tokens(msgs.back().content_without_span());
  }
  if (budget <= floor) {
    throw BudgetTooSmall("history budget " + std::to_string(budget) +
                         " cannot hold the first user message and the latest message (" +
                         std::to_string(floor) + " tokens)");
  }

  // Indices refer to the original history; `alive` tracks survivors.
  std::vector<bool> alive(msgs.size(), true);
  std::size_t sum = history.token_sum();
  auto over = [&] { return sum >= budget; };
  const std::size_t n = msgs.size();
  auto is_first_user = [&](std::size_t i) { return first_user && i == *first_user; };

  // Phase 1: oldest messages outside the protected set.
  for (std::size_t i = 0; i < n && over(); ++i) {
    if (is_first_user(i) || i + 4 >= n) continue;
    alive[i] = false;
    sum -= msgs[i].token_estimate();
  }

  // Phase 2: schema span of the first user message, from its tail.
  if (over() && first_user && msgs[*first_user].truncatable()) {
    AgentMessage& m = msgs[*first_user];
    while (over() && m.truncatable()->size() > 0) {
      std::size_t excess = sum - (budget - 1);
      AgentMessage trimmed = m.with_span_trimmed(std::max<std::size_t>(1, excess * 4));
      if (trimmed.content().size() == m.content().size()) break;
      sum = sum - m.token_estimate() + trimmed.token_estimate();
      m = std::move(trimmed);
    }
  }

  // Phase 3: the protected tail, oldest first, never the final message.
  for (std::size_t i = 0; i + 1 < n && over(); ++i) {
    if (!alive[i] || is_first_user(i)) continue;
    alive[i] = false;
    sum -= msgs[i].token_estimate();
  }

  std::vector<AgentMessage> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) kept.push_back(std::move(msgs[i]));
  }
  return DialogueHistory(std::move(kept), budget);
}

}  // namespace consql::prompts
