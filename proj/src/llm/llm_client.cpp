#include "consql/llm_client.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include "consql/util.hpp"

namespace consql::llm {

using json = nlohmann::json;

void ChatRequest::validate() const {
  if (messages.empty()) throw std::invalid_argument("chat request has no messages");
  if (messages.front().role == Role::assistant) {
    throw std::invalid_argument("first chat message must be a system or user message");
  }
}

ProviderError::ProviderError(int status, std::string body)
    : ClientError("provider error (status " + std::to_string(status) + "): " + body),
      status_(status),
      body_(std::move(body)) {}

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

FinishReason finish_reason_from_string(std::string_view s) {
  if (s == "stop") return FinishReason::stop;
  if (s == "length") return FinishReason::length;
  return FinishReason::error;
}

// ---------------------------------------------------------------------------
// Mock

MockScript MockScript::from_json(const json& entries) {
  if (!entries.is_array()) throw std::invalid_argument("mock script must be a JSON array");
  std::vector<MockEntry> out;
  for (const auto& e : entries) {
    MockEntry entry;
    if (e.is_string()) {
      entry.matcher = "*";
      entry.response = e.get<std::string>();
    } else {
      entry.matcher = e.value("match", std::string("*"));
      entry.response = e.value("response", std::string());
      if (e.contains("error")) entry.error = e.at("error").get<std::string>();
    }
    out.push_back(std::move(entry));
  }
  return MockScript(std::move(out));
}

const MockEntry& MockScript::next(const ChatRequest& request) {
  if (exhausted()) throw MockExhausted();
  const MockEntry& entry = entries_[cursor_];
  if (entry.matcher != "*") {
    const std::string& last = request.messages.back().content;
    if (last.find(entry.matcher) == std::string::npos) throw MockMismatch(entry.matcher);
  }
  ++cursor_;
  return entry;
}

ChatResponse MockClient::complete(const ChatRequest& request) {
  request.validate();
  std::lock_guard lock(mutex_);
  requests_.push_back(request);
  const MockEntry& entry = script_.next(request);
  if (entry.error) throw ProviderError(500, *entry.error);
  ChatResponse response;
  response.content = entry.response;
  response.finish_reason = FinishReason::stop;
  int prompt = 0;
  for (const auto& m : request.messages) prompt += static_cast<int>(estimate_tokens(m.content));
  response.usage = {prompt, static_cast<int>(estimate_tokens(entry.response)), true};
  return response;
}

std::size_t MockClient::calls() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

std::vector<ChatRequest> MockClient::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t MockClient::cursor() const {
  std::lock_guard lock(mutex_);
  return script_.cursor();
}

MockScriptBook MockScriptBook::from_json(const json& doc) {
  MockScriptBook book;
  if (doc.is_array()) {
    book.shared_ = MockScript::from_json(doc);
  } else if (doc.is_object()) {
    for (const auto& [key, value] : doc.items()) {
      if (key == "default") {
        book.shared_ = MockScript::from_json(value);
      } else {
        book.per_instance_.emplace(key, MockScript::from_json(value));
      }
    }
  } else {
    throw std::invalid_argument("mock script file must hold an array or an object of arrays");
  }
  return book;
}

MockScriptBook MockScriptBook::load(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(util::read_file(path));
  } catch (const json::exception& e) {
    throw std::runtime_error("cannot parse mock script " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

MockScript MockScriptBook::script_for(const std::string& instance_id) const {
  if (auto it = per_instance_.find(instance_id); it != per_instance_.end()) return it->second;
  if (shared_) return *shared_;
  throw std::out_of_range("no mock script for instance " + instance_id);
}

// ---------------------------------------------------------------------------
// Cache

std::string cache_key(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json key = {{"model", request.model_name},
              {"temperature", request.temperature},
              {"messages", std::move(messages)}};
  return util::sha256_hex(key.dump());
}

CachedClient::CachedClient(std::shared_ptr<ChatClient> inner, std::filesystem::path cache_dir)
    : inner_(std::move(inner)), dir_(std::move(cache_dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path CachedClient::entry_path(const ChatRequest& request) const {
  auto key = cache_key(request);
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<ChatResponse> CachedClient::lookup(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    auto doc = json::parse(util::read_file(path));
    ChatResponse r;
    r.content = doc.at("content").get<std::string>();
    r.finish_reason = finish_reason_from_string(doc.at("finish_reason").get<std::string>());
    r.usage.prompt_tokens = doc.at("prompt_tokens").get<int>();
    r.usage.completion_tokens = doc.at("completion_tokens").get<int>();
    r.usage.estimated = doc.value("usage_estimated", true);
    return r;
  } catch (const std::exception& e) {
    ++corrupt_;
    util::log_warn("cache entry " + path.string() + " is unreadable, refetching: " + e.what());
    return std::nullopt;
  }
}

ChatResponse CachedClient::complete(const ChatRequest& request) {
  request.validate();
  auto path = entry_path(request);
  if (auto hit = lookup(path)) {
    ++hits_;
    return *hit;
  }
  ++misses_;
  ChatResponse response = inner_->complete(request);
  json doc = {{"content", response.content},
              {"finish_reason", to_string(response.finish_reason)},
              {"prompt_tokens", response.usage.prompt_tokens},
              {"completion_tokens", response.usage.completion_tokens},
              {"usage_estimated", response.usage.estimated},
              {"model", request.model_name}};
  util::write_file_atomic(path, doc.dump(2));
  return response;
}

}  // namespace consql::llm
