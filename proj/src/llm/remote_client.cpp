// Remote chat-completions transport. Kept in its own translation unit so only
// one file pays for compiling cpp-httplib.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <thread>

#include "consql/llm_client.hpp"

namespace consql::llm {

using json = nlohmann::json;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return (v != nullptr && *v != '\0') ? std::string(v) : std::move(fallback);
}

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // request path
};

// Splits base_url into origin and path prefix; "/v1/<route>" is appended
// unless the prefix already ends in "/v1".
Endpoint split_url(const std::string& base_url, std::string_view route) {
  auto scheme_end = base_url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = base_url.find('/', host_start);
  Endpoint ep;
  ep.origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0) {
    ep.path = prefix + "/" + std::string(route);
  } else {
    ep.path = prefix + "/v1/" + std::string(route);
  }
  return ep;
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

RemoteConfig RemoteConfig::from_env() {
  RemoteConfig c;
  c.base_url = env_or("CONSQL_BASE_URL", c.base_url);
  c.api_key = env_or("CONSQL_API_KEY", env_or("OPENAI_API_KEY", ""));
  c.model_name = env_or("CONSQL_MODEL", c.model_name);
  return c;
}

RemoteClient::RemoteClient(RemoteConfig config) : config_(std::move(config)) {}

json RemoteClient::request_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return {{"model", request.model_name},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_output_tokens},
          {"stream", false}};
}

ChatResponse RemoteClient::parse_response(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw ProviderError(200, "unparseable response body: " + std::string(e.what()));
  }
  if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    throw ProviderError(200, "response has no choices: " + body.substr(0, 500));
  }
  const auto& choice = doc["choices"][0];
  ChatResponse r;
  const auto& message = choice.value("message", json::object());
  if (message.contains("content") && message["content"].is_string()) {
    r.content = message["content"].get<std::string>();
  }
  std::string finish = choice.value("finish_reason", std::string("stop"));
  r.finish_reason = finish == "length" ? FinishReason::length
                    : finish == "stop"  ? FinishReason::stop
                                        : FinishReason::error;
  if (r.finish_reason == FinishReason::stop && r.content.empty()) r.finish_reason = FinishReason::error;
  if (doc.contains("usage") && doc["usage"].is_object()) {
    r.usage.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
    r.usage.completion_tokens = doc["usage"].value("completion_tokens", 0);
    r.usage.estimated = false;
  } else {
    r.usage.completion_tokens = static_cast<int>(estimate_tokens(r.content));
  }
  return r;
}

namespace {

struct Reply {
  std::string body;
  int retries = 0;
};

// POST with retries on transport errors, 429 and 5xx.
Reply post_with_retry(const RemoteConfig& config, std::string_view route, const std::string& body) {
  const Endpoint ep = split_url(config.base_url, route);
  int last_status = 0;
  std::string last_body;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config.backoff_base * (1 << (attempt - 1)));

    httplib::Client cli(ep.origin);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(config.timeout));
    cli.set_read_timeout(config.timeout);
    cli.set_write_timeout(config.timeout);
    httplib::Headers headers;
    if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);

    auto res = cli.Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_status = 0;
      last_body = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return {res->body, attempt};
    last_status = res->status;
    last_body = res->body;
    if (!retryable(res->status)) break;
  }
  throw ProviderError(last_status, last_body);
}

}  // namespace

ChatResponse RemoteClient::complete(const ChatRequest& request) {
  request.validate();
  Reply reply = post_with_retry(config_, "chat/completions", request_body(request).dump());
  ChatResponse r = parse_response(reply.body);
  r.retries = reply.retries;
  return r;
}

RemoteEmbeddingClient::RemoteEmbeddingClient(RemoteConfig config, std::string embedding_model)
    : config_(std::move(config)), model_(std::move(embedding_model)) {}

std::vector<float> RemoteEmbeddingClient::embed(std::string_view text) const {
  json body = {{"model", model_}, {"input", std::string(text)}};
  Reply reply = post_with_retry(config_, "embeddings", body.dump());
  return parse_embedding(reply.body);
}

std::vector<float> RemoteEmbeddingClient::parse_embedding(const std::string& body) {
  try {
    json doc = json::parse(body);
    const auto& v = doc.at("data").at(0).at("embedding");
    std::vector<float> out;
    out.reserve(v.size());
    for (const auto& x : v) out.push_back(x.get<float>());
    if (out.empty()) throw ProviderError(200, "empty embedding");
    return out;
  } catch (const json::exception& e) {
    throw ProviderError(200, "unparseable embedding response: " + std::string(e.what()));
  }
}

}  // namespace consql::llm
