#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace consql::llm {
class RemoteEmbeddingClient;
}

namespace consql::selector {

using Shot = std::pair<std::string, std::string>;  // (question, sql)

struct EmbeddedExample {
  std::string question;
  std::string sql;
  std::vector<float> vector;  // unit length
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Unit vector for non-empty text; throws std::invalid_argument on empty input.
  virtual std::vector<float> embed(std::string_view text) const = 0;
  /// Identifies the backend and its parameters (part of the sidecar hash).
  virtual std::string id() const = 0;
};

inline constexpr std::size_t kTrigramDimension = 512;

/// Offline backend: character trigrams of the lowercased, space-padded text,
/// hashed (FNV-1a, 32 bit) into 512 buckets, counted, L2-normalized.
class TrigramEmbedder : public Embedder {
 public:
  std::vector<float> embed(std::string_view text) const override;
  std::string id() const override { return "trigram-fnv1a-512"; }

  /// Bucket of one trigram (exposed for tests).
  static std::size_t bucket(std::string_view trigram);
  /// Trigrams embed() counts for `text`.
  static std::vector<std::string> trigrams(std::string_view text);
};

/// Remote backend through an embeddings endpoint.
class RemoteEmbedder : public Embedder {
 public:
  explicit RemoteEmbedder(std::shared_ptr<const llm::RemoteEmbeddingClient> client);
  std::vector<float> embed(std::string_view text) const override;
  std::string id() const override;

 private:
  std::shared_ptr<const llm::RemoteEmbeddingClient> client_;
};

/// Cosine similarity; 0 when either vector is zero.
double cosine(const std::vector<float>& a, const std::vector<float>& b);

/// Top-k pool entries by cosine similarity to `query`, ties broken by lower
/// pool index, returned least similar first so the closest example sits next
/// to the question in the prompt. k larger than the pool returns the whole
/// pool with a warning.
std::vector<Shot> select_shots(const std::vector<float>& query, const std::vector<EmbeddedExample>& pool,
                               std::size_t k);

/// Embeds every example, spreading the work over `threads` workers.
std::vector<EmbeddedExample> embed_pool(const std::vector<Shot>& examples, const Embedder& embedder,
                                        unsigned threads);

/// Hash of the examples and the embedder id; a sidecar is reused only when
/// it carries the same hash.
std::string pool_hash(const std::vector<Shot>& examples, const Embedder& embedder);

class SidecarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary sidecar: magic "CSQE", version, dimension, count, 64-char hash,
/// row-major float32 vectors, then 2*count+1 uint64 offsets into a string
/// blob holding each question and sql in turn. Little-endian.
void save_sidecar(const std::filesystem::path& path, const std::vector<EmbeddedExample>& pool,
                  std::string_view hash);
/// nullopt when the file is missing or carries a different hash; throws
/// SidecarError when it is malformed.
std::optional<std::vector<EmbeddedExample>> load_sidecar(const std::filesystem::path& path,
                                                         std::string_view expected_hash);

/// Selection over a fixed training pool. If the primary backend fails while
/// embedding the pool, the whole pool and all later queries use the offline
/// backend. A query the primary backend cannot embed gets no shots (with a
/// warning). select() is thread-safe.
class ShotSelector {
 public:
  ShotSelector(std::vector<Shot> examples, std::shared_ptr<const Embedder> primary, unsigned threads = 1,
               std::optional<std::filesystem::path> sidecar = std::nullopt);

  std::vector<Shot> select(std::string_view question, std::size_t k) const;

  const std::vector<EmbeddedExample>& pool() const { return pool_; }
  const Embedder& embedder() const { return *embedder_; }
  bool fell_back() const { return fell_back_; }

 private:
  std::vector<EmbeddedExample> load_or_embed(const std::vector<Shot>& examples, unsigned threads,
                                             const std::optional<std::filesystem::path>& sidecar);

  std::shared_ptr<const Embedder> embedder_;
  std::vector<EmbeddedExample> pool_;
  bool fell_back_ = false;
};

}  // namespace consql::selector
