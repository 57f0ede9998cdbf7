#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "consql/core.hpp"

namespace consql::llm {

struct ChatMessage {
  Role role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string model_name;

  /// Throws std::invalid_argument unless non-empty and led by system/user.
  void validate() const;
};

enum class FinishReason { stop, length, error };

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  bool estimated = true;
};

struct ChatResponse {
  std::string content;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  int retries = 0;
};

/// Base of every failure a client surfaces. The orchestrator records these as
/// client_error terminations.
class ClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProviderError : public ClientError {
 public:
  ProviderError(int status, std::string body);
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

class MockExhausted : public ClientError {
 public:
  MockExhausted() : ClientError("mock script exhausted") {}
};

class MockMismatch : public ClientError {
 public:
  explicit MockMismatch(const std::string& matcher)
      : ClientError("mock script entry '" + matcher + "' does not match the request") {}
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Remote chat-completions backend
// ---------------------------------------------------------------------------

struct RemoteConfig {
  std::string base_url = "https://api.openai.com";
  std::string api_key;
  std::string model_name = "gpt-4";
  std::chrono::milliseconds backoff_base{1000};
  int max_retries = 3;
  std::chrono::seconds timeout{120};

  /// Reads CONSQL_BASE_URL, CONSQL_API_KEY (or OPENAI_API_KEY), CONSQL_MODEL.
  static RemoteConfig from_env();
};

/// POST {base_url}/v1/chat/completions, bearer auth. Transport failures,
/// 429 and 5xx are retried with exponential backoff (base, 2*base, 4*base).
class RemoteClient : public ChatClient {
 public:
  explicit RemoteClient(RemoteConfig config);
  ChatResponse complete(const ChatRequest& request) override;

  const RemoteConfig& config() const { return config_; }

  static nlohmann::json request_body(const ChatRequest& request);
  static ChatResponse parse_response(const std::string& body);

 private:
  RemoteConfig config_;
};

/// POST {base_url}/v1/embeddings with the same retry policy. Thread-safe.
class RemoteEmbeddingClient {
 public:
  RemoteEmbeddingClient(RemoteConfig config, std::string embedding_model);
  std::vector<float> embed(std::string_view text) const;
  const std::string& model() const { return model_; }

  static std::vector<float> parse_embedding(const std::string& body);

 private:
  RemoteConfig config_;
  std::string model_;
};

// ---------------------------------------------------------------------------
// Scripted mock
// ---------------------------------------------------------------------------

struct MockEntry {
  std::string matcher;   // "*" or a substring of the last request message
  std::string response;  // returned content
  std::optional<std::string> error;  // when set, the call fails with ProviderError
};

/// Replies with the scripted entries in order. The entry under the cursor must
/// match the request; running past the end is an error.
class MockScript {
 public:
  MockScript() = default;
  explicit MockScript(std::vector<MockEntry> entries) : entries_(std::move(entries)) {}

  static MockScript from_json(const nlohmann::json& entries);

  const std::vector<MockEntry>& entries() const { return entries_; }
  std::size_t cursor() const { return cursor_; }
  bool exhausted() const { return cursor_ >= entries_.size(); }

  /// Consumes the next entry; throws MockExhausted / MockMismatch.
  const MockEntry& next(const ChatRequest& request);

 private:
  std::vector<MockEntry> entries_;
  std::size_t cursor_ = 0;
};

class MockClient : public ChatClient {
 public:
  explicit MockClient(MockScript script) : script_(std::move(script)) {}
  ChatResponse complete(const ChatRequest& request) override;

  std::size_t calls() const;
  std::vector<ChatRequest> requests() const;
  std::size_t cursor() const;

 private:
  mutable std::mutex mutex_;
  MockScript script_;
  std::vector<ChatRequest> requests_;
};

/// Mock scripts for a batch: either one script every instance replays from the
/// start, or per-instance scripts keyed by instance id with an optional
/// "default".
class MockScriptBook {
 public:
  static MockScriptBook load(const std::filesystem::path& path);
  static MockScriptBook from_json(const nlohmann::json& doc);

  /// Throws std::out_of_range when neither the id nor a default is present.
  MockScript script_for(const std::string& instance_id) const;

 private:
  std::optional<MockScript> shared_;
  std::map<std::string, MockScript> per_instance_;
};

// ---------------------------------------------------------------------------
// Content-addressed response cache
// ---------------------------------------------------------------------------

class CacheCorrupt : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SHA-256 over model name, temperature and the serialized messages.
std::string cache_key(const ChatRequest& request);

/// One JSON file per key. An unreadable entry is treated as a miss and
/// rewritten.
class CachedClient : public ChatClient {
 public:
  CachedClient(std::shared_ptr<ChatClient> inner, std::filesystem::path cache_dir);
  ChatResponse complete(const ChatRequest& request) override;

  std::filesystem::path entry_path(const ChatRequest& request) const;
  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  std::size_t corrupt_entries() const { return corrupt_.load(); }

 private:
  std::optional<ChatResponse> lookup(const std::filesystem::path& path);

  std::shared_ptr<ChatClient> inner_;
  std::filesystem::path dir_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
  std::atomic<std::size_t> corrupt_{0};
};

/// Counts calls that reach the wrapped client.
class CountingClient : public ChatClient {
 public:
  explicit CountingClient(std::shared_ptr<ChatClient> inner) : inner_(std::move(inner)) {}
  ChatResponse complete(const ChatRequest& request) override {
    ++count_;
    return inner_->complete(request);
  }
  std::size_t count() const { return count_.load(); }

 private:
  std::shared_ptr<ChatClient> inner_;
  std::atomic<std::size_t> count_{0};
};

std::string_view to_string(FinishReason r);
FinishReason finish_reason_from_string(std::string_view s);

}  // namespace consql::llm
