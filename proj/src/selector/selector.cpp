#include "consql/selector.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <thread>

#include "consql/llm_client.hpp"
#include "consql/util.hpp"

namespace consql::selector {

static_assert(std::endian::native == std::endian::little, "sidecar format assumes a little-endian host");

namespace {

std::vector<float> normalized(std::vector<double> v) {
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  std::vector<float> out(v.size());
  if (norm == 0) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

// Splits UTF-8 text into characters; invalid bytes stand alone.
std::vector<std::string> characters(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    if (i + len > s.size()) len = 1;
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

std::vector<std::string> TrigramEmbedder::trigrams(std::string_view text) {
  // lowercase, collapse whitespace, pad with one space on each side
  std::string norm = " ";
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (norm.back() != ' ') norm.push_back(' ');
    } else {
      norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (norm.back() != ' ') norm.push_back(' ');

  std::vector<std::string> chars = characters(norm);
  std::vector<std::string> out;
  if (chars.size() < 3) {
    out.push_back(norm);
    return out;
  }
  for (std::size_t i = 0; i + 3 <= chars.size(); ++i) out.push_back(chars[i] + chars[i + 1] + chars[i + 2]);
  return out;
}

std::size_t TrigramEmbedder::bucket(std::string_view trigram) {
  std::uint32_t h = 2166136261u;
  for (char c : trigram) {
    h ^= static_cast<unsigned char>(c);
    h *= 16777619u;
  }
  return h % kTrigramDimension;
}

std::vector<float> TrigramEmbedder::embed(std::string_view text) const {
  if (text.empty()) throw std::invalid_argument("cannot embed empty text");
  std::vector<double> counts(kTrigramDimension, 0.0);
  for (const auto& t : trigrams(text)) counts[bucket(t)] += 1.0;
  return normalized(std::move(counts));
}

RemoteEmbedder::RemoteEmbedder(std::shared_ptr<const llm::RemoteEmbeddingClient> client)
    : client_(std::move(client)) {}

std::vector<float> RemoteEmbedder::embed(std::string_view text) const {
  if (text.empty()) throw std::invalid_argument("cannot embed empty text");
  std::vector<float> raw = client_->embed(text);
  return normalized(std::vector<double>(raw.begin(), raw.end()));
}

std::string RemoteEmbedder::id() const { return "remote:" + client_->model(); }

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("vectors differ in dimension");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::vector<Shot> select_shots(const std::vector<float>& query, const std::vector<EmbeddedExample>& pool,
                               std::size_t k) {
  if (k == 0) return {};
  if (k > pool.size()) {
    util::log_warn("requested " + std::to_string(k) + " shots from a pool of " + std::to_string(pool.size()) +
                   "; using the whole pool");
    k = pool.size();
  }
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) scored.emplace_back(cosine(query, pool[i].vector), i);
  auto better = [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);

  std::vector<Shot> out;
  for (std::size_t i = k; i-- > 0;) {
    const auto& e = pool[scored[i].second];
    out.emplace_back(e.question, e.sql);
  }
  return out;
}

std::vector<EmbeddedExample> embed_pool(const std::vector<Shot>& examples, const Embedder& embedder,
                                        unsigned threads) {
  std::vector<EmbeddedExample> out(examples.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(examples.size())));
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    for (unsigned w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < examples.size(); i += threads) {
            out[i] = {examples[i].first, examples[i].second, embedder.embed(examples[i].first)};
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::string pool_hash(const std::vector<Shot>& examples, const Embedder& embedder) {
  std::string data = embedder.id();
  for (const auto& [q, s] : examples) {
    data.push_back('\0');
    data += q;
    data.push_back('\0');
    data += s;
  }
  return util::sha256_hex(data);
}

// ---------------------------------------------------------------------------
// Sidecar

namespace {

constexpr char kMagic[4] = {'C', 'S', 'Q', 'E'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }
  std::string_view take(std::size_t n) {
    if (n > data_.size() - pos_) throw SidecarError("embedding sidecar is truncated");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_sidecar(const std::filesystem::path& path, const std::vector<EmbeddedExample>& pool, std::string_view hash) {
  if (hash.size() != 64) throw std::invalid_argument("sidecar hash must be 64 hex characters");
  std::uint32_t dim = pool.empty() ? 0 : static_cast<std::uint32_t>(pool[0].vector.size());
  std::string out(kMagic, 4);
  put(out, kVersion);
  put(out, dim);
  put(out, static_cast<std::uint32_t>(pool.size()));
  out += hash;
  for (const auto& e : pool) {
    if (e.vector.size() != dim) throw std::invalid_argument("pool vectors differ in dimension");
    for (float f : e.vector) put(out, f);
  }
  std::string blob;
  put(out, std::uint64_t{0});
  for (const auto& e : pool) {
    blob += e.question;
    put(out, static_cast<std::uint64_t>(blob.size()));
    blob += e.sql;
    put(out, static_cast<std::uint64_t>(blob.size()));
  }
  out += blob;
  util::write_file_atomic(path, out);
}

std::optional<std::vector<EmbeddedExample>> load_sidecar(const std::filesystem::path& path,
                                                         std::string_view expected_hash) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::string data = util::read_file(path);
  Reader r(data);
  if (r.take(4) != std::string_view(kMagic, 4)) throw SidecarError("not an embedding sidecar: " + path.string());
  if (r.get<std::uint32_t>() != kVersion) throw SidecarError("unsupported sidecar version");
  auto dim = r.get<std::uint32_t>();
  auto count = r.get<std::uint32_t>();
  if (r.take(64) != expected_hash) return std::nullopt;

  std::vector<EmbeddedExample> pool(count);
  for (auto& e : pool) {
    e.vector.resize(dim);
    for (auto& f : e.vector) f = r.get<float>();
  }
  std::vector<std::uint64_t> offsets(2 * static_cast<std::size_t>(count) + 1);
  for (auto& o : offsets) o = r.get<std::uint64_t>();
  std::string_view blob = r.take(offsets.back());
  if (!r.done()) throw SidecarError("trailing bytes in embedding sidecar");
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    if (offsets[i] > offsets[i + 1]) throw SidecarError("embedding sidecar offsets are not monotone");
  }
  for (std::size_t i = 0; i < count; ++i) {
    pool[i].question = std::string(blob.substr(offsets[2 * i], offsets[2 * i + 1] - offsets[2 * i]));
    pool[i].sql = std::string(blob.substr(offsets[2 * i + 1], offsets[2 * i + 2] - offsets[2 * i + 1]));
  }
  return pool;
}

// ---------------------------------------------------------------------------

ShotSelector::ShotSelector(std::vector<Shot> examples, std::shared_ptr<const Embedder> primary, unsigned threads,
                           std::optional<std::filesystem::path> sidecar)
    : embedder_(std::move(primary)) {
  try {
    pool_ = load_or_embed(examples, threads, sidecar);
  } catch (const llm::ClientError& e) {
    util::log_warn(std::string("embedding backend failed (") + e.what() + "); using the offline trigram embedder");
    embedder_ = std::make_shared<TrigramEmbedder>();
    fell_back_ = true;
    pool_ = load_or_embed(examples, threads, sidecar);
  }
}

std::vector<EmbeddedExample> ShotSelector::load_or_embed(const std::vector<Shot>& examples, unsigned threads,
                                                         const std::optional<std::filesystem::path>& sidecar) {
  std::string hash = pool_hash(examples, *embedder_);
  if (sidecar) {
    try {
      if (auto cached = load_sidecar(*sidecar, hash)) return *cached;
    } catch (const SidecarError& e) {
      util::log_warn(std::string(e.what()) + "; recomputing");
    }
  }
  auto pool = embed_pool(examples, *embedder_, threads);
  if (sidecar) save_sidecar(*sidecar, pool, hash);
  return pool;
}

std::vector<Shot> ShotSelector::select(std::string_view question, std::size_t k) const {
  if (k == 0) return {};
  std::vector<float> query;
  try {
    query = embedder_->embed(question);
  } catch (const llm::ClientError& e) {
    util::log_warn(std::string("could not embed question (") + e.what() + "); no shots");
    return {};
  }
  return select_shots(query, pool_, k);
}

}  // namespace consql::selector
