#include "consql/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "consql/llm_client.hpp"
#include "consql/orchestrator.hpp"
#include "consql/prompts.hpp"
#include "consql/sandbox.hpp"
#include "consql/selector.hpp"
#include "consql/util.hpp"

namespace consql::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void CliConfig::validate() const {
  if (manifest.empty()) throw ConfigError("no manifest given");
  if (backend == Backend::mock && mock_script.empty()) throw ConfigError("the mock backend needs mock_script");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (embedder != "trigram" && embedder != "remote") throw ConfigError("unknown embedder: " + embedder);
  try {
    run.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys{
      "manifest",        "format",           "split",           "backend",        "mock_script",
      "cache_dir",       "out_dir",          "workers",         "subsample",      "seed",
      "shot_pool",       "embedder",         "embedding_model", "templates_dir",  "sample_rows",
      "max_review_turns", "max_debug_turns", "n_reviewers",     "k_shots",        "mode",
      "temperature",     "max_output_tokens", "model",          "history_budget", "render_row_cap",
      "render_cell_chars", "sql_timeout_ms",
  };
  return keys;
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw ConfigError("invalid value for " + std::string(key) + ": " + std::string(value));
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    double v = std::stod(std::string(value), &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid value for " + std::string(key) + ": " + std::string(value));
}

template <typename F>
auto wrap(std::string_view key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

}  // namespace

void apply_setting(CliConfig& c, std::string_view key, std::string_view value) {
  auto path = [&] { return fs::path(std::string(value)); };
  auto count = [&] { return parse_number<int>(key, value); };
  auto size = [&] { return parse_number<std::size_t>(key, value); };
  if (key == "manifest") c.manifest = path();
  else if (key == "format") c.format = wrap(key, [&] { return datasets::format_from_string(value); });
  else if (key == "split") c.split = wrap(key, [&] { return datasets::split_from_string(value); });
  else if (key == "backend") {
    if (value == "mock") c.backend = Backend::mock;
    else if (value == "remote") c.backend = Backend::remote;
    else throw ConfigError("unknown backend: " + std::string(value));
  } else if (key == "mock_script") c.mock_script = path();
  else if (key == "cache_dir") c.cache_dir = value.empty() ? std::nullopt : std::optional(path());
  else if (key == "out_dir") c.out_dir = path();
  else if (key == "workers") c.workers = parse_number<unsigned>(key, value);
  else if (key == "subsample") c.subsample = size();
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "shot_pool") c.shot_pool = value.empty() ? std::nullopt : std::optional(path());
  else if (key == "embedder") c.embedder = std::string(value);
  else if (key == "embedding_model") c.embedding_model = std::string(value);
  else if (key == "templates_dir") c.templates_dir = value.empty() ? std::nullopt : std::optional(path());
  else if (key == "sample_rows") c.sample_rows = size();
  else if (key == "max_review_turns") c.run.max_review_turns = count();
  else if (key == "max_debug_turns") c.run.max_debug_turns = count();
  else if (key == "n_reviewers") c.run.n_reviewers = count();
  else if (key == "k_shots") c.run.k_shots = count();
  else if (key == "mode") c.run.mode = wrap(key, [&] { return writer_mode_from_string(value); });
  else if (key == "temperature") c.run.temperature = parse_real(key, value);
  else if (key == "max_output_tokens") c.run.max_output_tokens = count();
  else if (key == "model") c.run.model_name = std::string(value);
  else if (key == "history_budget") c.run.history_budget = size();
  else if (key == "render_row_cap") c.run.render_row_cap = size();
  else if (key == "render_cell_chars") c.run.render_cell_chars = size();
  else if (key == "sql_timeout_ms") c.run.sql_timeout_ms = count();
  else throw ConfigError("unknown setting: " + std::string(key));
}

void load_config_file(CliConfig& config, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    std::string_view rest = trim(line);
    if (rest.empty() || rest.front() == '#') continue;
    auto eq = rest.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    std::string_view key = trim(rest.substr(0, eq));
    std::string_view value = trim(rest.substr(eq + 1));
    if (!value.empty() && (value.front() == '"' || value.front() == '\'')) {
      auto close = value.find(value.front(), 1);
      if (close == std::string_view::npos) {
        throw ConfigError(path.string() + ":" + std::to_string(number) + ": unterminated string");
      }
      value = value.substr(1, close - 1);
    } else if (auto hash = value.find('#'); hash != std::string_view::npos) {
      value = trim(value.substr(0, hash));
    }
    try {
      apply_setting(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Records and summaries

std::vector<RunRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read records file " + path.string());
  std::vector<RunRecord> out;
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(orchestrator::record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

void write_records(const fs::path& path, const std::vector<RunRecord>& records) {
  std::string text;
  for (const auto& r : records) text += orchestrator::record_to_json(r).dump() + "\n";
  util::write_file_atomic(path, text);
}

BatchSummary summarize(std::string benchmark, const std::vector<RunRecord>& records) {
  BatchSummary s;
  s.benchmark = std::move(benchmark);
  s.instances = records.size();
  long review = 0, debug = 0;
  for (const auto& r : records) {
    ++s.terminations[std::string(to_string(r.termination))];
    if (r.termination == Termination::client_error) ++s.client_errors;
    review += r.review_turns_used;
    debug += r.debug_turns_used;
    s.total_llm_calls += r.llm_calls;
    if (r.outcome) {
      ++s.scored;
      if (*r.outcome == Outcome::correct) ++s.correct;
    }
  }
  if (s.scored) s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.scored);
  if (s.instances) {
    s.mean_review_turns = static_cast<double>(review) / static_cast<double>(s.instances);
    s.mean_debug_turns = static_cast<double>(debug) / static_cast<double>(s.instances);
  }
  return s;
}

json BatchSummary::to_json() const {
  return {{"benchmark", benchmark},
          {"instances", instances},
          {"scored", scored},
          {"correct", correct},
          {"accuracy", accuracy},
          {"terminations", terminations},
          {"mean_review_turns", mean_review_turns},
          {"mean_debug_turns", mean_debug_turns},
          {"total_llm_calls", total_llm_calls},
          {"client_errors", client_errors}};
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string BatchSummary::to_markdown() const {
  std::string out = "# Run report: " + benchmark + "\n\n| Metric | Value |\n|---|---:|\n";
  out += "| Instances | " + std::to_string(instances) + " |\n";
  out += "| Scored | " + std::to_string(scored) + " |\n";
  out += "| Correct | " + std::to_string(correct) + " |\n";
  out += "| Execution accuracy (%) | " + evaluator::format_percent(100.0 * accuracy) + " |\n";
  out += "| Mean review turns | " + fixed(mean_review_turns, 2) + " |\n";
  out += "| Mean debug turns | " + fixed(mean_debug_turns, 2) + " |\n";
  out += "| LLM calls | " + std::to_string(total_llm_calls) + " |\n";
  out += "| Client errors | " + std::to_string(client_errors) + " |\n";
  out += "\n## Termination\n\n| Reason | Count |\n|---|---:|\n";
  for (const auto& [reason, n] : terminations) out += "| " + reason + " | " + std::to_string(n) + " |\n";
  return out;
}

// ---------------------------------------------------------------------------
// run

namespace {

json config_json(const CliConfig& c) {
  const RunConfig& r = c.run;
  return {{"max_review_turns", r.max_review_turns}, {"max_debug_turns", r.max_debug_turns},
          {"n_reviewers", r.n_reviewers},           {"k_shots", r.k_shots},
          {"mode", to_string(r.mode)},              {"temperature", r.temperature},
          {"max_output_tokens", r.max_output_tokens}, {"model", r.model_name},
          {"history_budget", r.history_budget},     {"subsample", c.subsample ? json(*c.subsample) : json()},
          {"seed", c.seed},                         {"embedder", c.embedder}};
}

std::unique_ptr<selector::ShotSelector> build_selector(const CliConfig& c) {
  if (c.run.k_shots == 0) return nullptr;
  if (!c.shot_pool) {
    util::log_warn("k_shots is " + std::to_string(c.run.k_shots) + " but no shot_pool is set; running without shots");
    return nullptr;
  }
  auto pool_manifest = datasets::load_manifest(*c.shot_pool, c.format, datasets::Split::train);
  pool_manifest.validate();
  json doc = json::parse(util::read_file(pool_manifest.questions));
  std::vector<selector::Shot> examples;
  for (const auto& t : datasets::parse_questions(doc, pool_manifest.name, pool_manifest.format)) {
    if (t.gold_sql) examples.emplace_back(t.question, *t.gold_sql);
  }
  std::shared_ptr<const selector::Embedder> embedder;
  if (c.embedder == "remote") {
    auto client = std::make_shared<const llm::RemoteEmbeddingClient>(llm::RemoteConfig::from_env(), c.embedding_model);
    embedder = std::make_shared<selector::RemoteEmbedder>(client);
  } else {
    embedder = std::make_shared<selector::TrigramEmbedder>();
  }
  std::optional<fs::path> sidecar;
  if (c.cache_dir) sidecar = *c.cache_dir / "shot_pool.bin";
  return std::make_unique<selector::ShotSelector>(std::move(examples), embedder, c.workers, sidecar);
}

std::map<std::string, prompts::SampleRows> sample_rows_for(const datasets::Benchmark& b,
                                                          const std::vector<TaskInstance>& instances,
                                                          std::size_t rows) {
  std::map<std::string, prompts::SampleRows> out;
  if (rows == 0) return out;
  sandbox::Sandbox box(b.catalog);
  for (const auto& t : instances) {
    if (out.contains(t.db_id)) continue;
    auto& db = out[t.db_id];
    for (const auto& table : b.schema(t.db_id)->tables) {
      auto r = box.execute(t.db_id, "SELECT * FROM " + quote_identifier(table.name) + " LIMIT " + std::to_string(rows),
                           {std::chrono::milliseconds(5000), rows});
      if (r.ok()) db.emplace(table.name, r.table());
    }
  }
  return out;
}

// Single consumer that owns the records file while workers run.
class RecordSink {
 public:
  explicit RecordSink(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw ConfigError("cannot write " + path.string());
    thread_ = std::jthread([this] { drain(); });
  }
  ~RecordSink() { close(); }

  void push(std::string line) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(line));
    }
    cv_.notify_one();
  }
  void close() {
    {
      std::lock_guard lock(mutex_);
      done_ = true;
    }
    cv_.notify_one();
    if (thread_.joinable()) thread_.join();
  }

 private:
  void drain() {
    std::unique_lock lock(mutex_);
    for (;;) {
      cv_.wait(lock, [this] { return done_ || !queue_.empty(); });
      while (!queue_.empty()) {
        std::string line = std::move(queue_.front());
        queue_.pop_front();
        lock.unlock();
        out_ << line << '\n';
        out_.flush();
        lock.lock();
      }
      if (done_) return;
    }
  }

  std::ofstream out_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  bool done_ = false;
  std::jthread thread_;
};

RunRecord failed_record(const TaskInstance& t, std::string message) {
  RunRecord r;
  r.instance_id = t.id;
  r.db_id = t.db_id;
  r.termination = Termination::client_error;
  r.error_message = std::move(message);
  return r;
}

}  // namespace

RunResult cmd_run(const CliConfig& config) {
  config.validate();
  auto manifest = datasets::load_manifest(config.manifest, config.format, config.split);
  datasets::Benchmark bench = datasets::load_benchmark(manifest);
  std::vector<TaskInstance> instances =
      config.subsample ? datasets::subsample(bench.instances, *config.subsample, config.seed) : bench.instances;
  if (config.subsample) {
    // keep benchmark order so outputs line up with the question file
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < bench.instances.size(); ++i) position[bench.instances[i].id] = i;
    std::sort(instances.begin(), instances.end(),
              [&](const auto& a, const auto& b) { return position[a.id] < position[b.id]; });
  }

  std::optional<llm::MockScriptBook> book;
  std::shared_ptr<llm::ChatClient> shared_client;
  if (config.backend == Backend::mock) {
    book = llm::MockScriptBook::load(config.mock_script);
  } else {
    shared_client = std::make_shared<llm::RemoteClient>(llm::RemoteConfig::from_env());
    if (config.cache_dir) shared_client = std::make_shared<llm::CachedClient>(shared_client, *config.cache_dir / "llm");
  }
  const prompts::TemplateSet templates =
      config.templates_dir ? prompts::TemplateSet::with_overrides(*config.templates_dir) : prompts::TemplateSet::builtin();
  auto shots = build_selector(config);
  const auto samples = sample_rows_for(bench, instances, config.sample_rows);

  fs::create_directories(config.out_dir);
  const fs::path records_path = config.out_dir / "records.jsonl";
  std::vector<RunRecord> records(instances.size());
  std::atomic<std::size_t> next{0}, finished{0};
  {
    RecordSink sink(records_path);
    auto work = [&] {
      sandbox::Sandbox box(bench.catalog);
      for (std::size_t i = next++; i < instances.size(); i = next++) {
        const TaskInstance& inst = instances[i];
        RunRecord rec;
        try {
          std::shared_ptr<llm::ChatClient> client = shared_client;
          if (book) {
            client = std::make_shared<llm::MockClient>(book->script_for(inst.id));
            if (config.cache_dir) client = std::make_shared<llm::CachedClient>(client, *config.cache_dir / "llm");
          }
          orchestrator::RunInput input{inst, *bench.schema(inst.db_id),
                                       shots ? shots->select(inst.question, config.run.k_shots)
                                             : std::vector<orchestrator::Shot>{},
                                       samples.contains(inst.db_id) ? &samples.at(inst.db_id) : nullptr};
          orchestrator::RunContext context{*client, box, templates};
          rec = orchestrator::run_review_loop(input, config.run, context);
        } catch (const std::exception& e) {
          rec = failed_record(inst, e.what());
        }
        if (inst.gold_sql) {
          auto scored = evaluator::score_record(box, rec, inst, std::chrono::milliseconds(config.run.sql_timeout_ms));
          rec.outcome = scored.outcome;
          if (scored.verdict.reason == evaluator::VerdictReason::gold_error_exec) {
            util::log_warn("gold SQL for " + inst.id + " fails: " + scored.detail);
          }
        }
        sink.push(orchestrator::record_to_json(rec).dump());
        std::size_t done = ++finished;
        util::log_info("[" + std::to_string(done) + "/" + std::to_string(instances.size()) + "] " + inst.id + " " +
                       std::string(to_string(rec.termination)));
        records[i] = std::move(rec);
      }
    };
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(config.workers, std::max<std::size_t>(1, instances.size())); ++w) {
      pool.emplace_back(work);
    }
  }
  // the streamed file is in completion order; settle it into benchmark order
  write_records(records_path, records);

  RunResult result{summarize(manifest.name, records), std::move(records)};
  json summary = result.summary.to_json();
  summary["config"] = config_json(config);
  util::write_file_atomic(config.out_dir / "summary.json", summary.dump(2) + "\n");
  util::write_file_atomic(config.out_dir / "report.md", result.summary.to_markdown());
  return result;
}

// ---------------------------------------------------------------------------
// eval

namespace {

std::vector<evaluator::ScoredRecord> score_file(const std::vector<RunRecord>& records,
                                                const evaluator::InstanceIndex& index,
                                                const datasets::Benchmark& bench, unsigned workers) {
  for (const auto& r : records) {
    if (!index.contains(r.instance_id)) {
      throw MismatchedIds("record " + r.instance_id + " is not in benchmark " +
                          (bench.instances.empty() ? std::string("(empty)") : bench.instances.front().id));
    }
  }
  return evaluator::score_records(records, index, bench.catalog, workers);
}

std::vector<bool> correct_flags(const std::vector<evaluator::ScoredRecord>& scored) {
  std::vector<bool> out;
  for (const auto& s : scored) out.push_back(s.outcome == Outcome::correct);
  return out;
}

}  // namespace

EvalResult cmd_eval(const EvalOptions& options) {
  auto manifest = datasets::load_manifest(options.manifest, options.format, options.split);
  datasets::Benchmark bench = datasets::load_benchmark(manifest);
  auto index = evaluator::index_instances(bench.instances);
  auto records = read_records(options.records);
  if (records.empty()) throw evaluator::MissingData("no records in " + options.records.string());

  EvalResult res;
  res.scored = score_file(records, index, bench, options.workers);
  res.accuracy = evaluator::execution_accuracy(res.scored);
  for (const auto& s : res.scored) {
    const auto& inst = index.at(s.instance_id);
    if (!inst.difficulty) continue;
    auto& [hit, total] = res.by_difficulty[*inst.difficulty];
    ++total;
    hit += s.outcome == Outcome::correct;
  }
  if (options.labels) {
    json doc;
    try {
      doc = json::parse(util::read_file(*options.labels));
    } catch (const json::exception& e) {
      throw ConfigError(options.labels->string() + ": " + e.what());
    }
    res.errors = evaluator::error_report(res.scored, evaluator::parse_labels(doc));
  }
  if (options.compare) {
    auto other = score_file(read_records(*options.compare), index, bench, options.workers);
    res.compare_accuracy = evaluator::execution_accuracy(other);
    res.folds = evaluator::split_folds(correct_flags(res.scored), options.folds);
    res.compare_folds = evaluator::split_folds(correct_flags(other), options.folds);
    std::vector<double> a, b;
    for (const auto& f : res.folds) a.push_back(f.accuracy);
    for (const auto& f : res.compare_folds) b.push_back(f.accuracy);
    res.test = evaluator::mann_whitney_u(a, b);
  }

  std::string md = "# Evaluation: " + manifest.name + "\n\n";
  md += "Records: " + options.records.string() + "\n\n";
  std::size_t correct = 0;
  for (const auto& s : res.scored) correct += s.outcome == Outcome::correct;
  md += "Execution accuracy: " + evaluator::format_percent(100.0 * res.accuracy) + "% (" + std::to_string(correct) +
        "/" + std::to_string(res.scored.size()) + ")\n";
  if (!res.by_difficulty.empty()) {
    md += "\n## By difficulty\n\n| Difficulty | Correct | Total | EA (%) |\n|---|---:|---:|---:|\n";
    for (const auto& [name, ct] : res.by_difficulty) {
      md += "| " + name + " | " + std::to_string(ct.first) + " | " + std::to_string(ct.second) + " | " +
            evaluator::format_percent(100.0 * static_cast<double>(ct.first) / static_cast<double>(ct.second)) + " |\n";
    }
  }
  if (res.errors) md += "\n" + res.errors->to_markdown();
  if (res.test) {
    md += "\n## Significance\n\nCompared with " + options.compare->string() + " (EA " +
          evaluator::format_percent(100.0 * *res.compare_accuracy) + "%)\n\n| Fold | EA (%) | Other EA (%) |\n|---:|---:|---:|\n";
    for (std::size_t f = 0; f < res.folds.size(); ++f) {
      md += "| " + std::to_string(res.folds[f].fold) + " | " + evaluator::format_percent(100.0 * res.folds[f].accuracy) +
            " | " + evaluator::format_percent(100.0 * res.compare_folds[f].accuracy) + " |\n";
    }
    char line[160];
    std::snprintf(line, sizeof line, "\nMann-Whitney U = %.1f, two-sided p = %.4g (%s)\n", res.test->u, res.test->p,
                  res.test->exact ? "exact" : "normal approximation");
    md += line;
  }
  res.report = md;

  fs::path out = options.out_dir.value_or(options.records.parent_path() / "eval");
  fs::create_directories(out);
  json summary = {{"benchmark", manifest.name}, {"records", res.scored.size()}, {"correct", correct},
                  {"accuracy", res.accuracy}};
  if (!res.by_difficulty.empty()) {
    for (const auto& [name, ct] : res.by_difficulty) summary["by_difficulty"][name] = {ct.first, ct.second};
  }
  if (res.errors) summary["errors"] = res.errors->to_json();
  if (res.test) {
    summary["comparison"] = {{"accuracy", *res.compare_accuracy}, {"u", res.test->u}, {"p", res.test->p},
                             {"exact", res.test->exact}};
  }
  util::write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  util::write_file_atomic(out / "report.md", md);
  return res;
}

// ---------------------------------------------------------------------------
// sweep

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::k_shots: return "k_shots";
    case SweepAxis::n_reviewers: return "n_reviewers";
    case SweepAxis::mode: return "mode";
  }
  return "mode";
}

SweepAxis sweep_axis_from_string(std::string_view s) {
  for (SweepAxis a : {SweepAxis::k_shots, SweepAxis::n_reviewers, SweepAxis::mode}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown sweep axis: " + std::string(s) + " (k_shots, n_reviewers or mode)");
}

std::string method_label(const RunConfig& config) {
  std::string mode = config.mode == WriterMode::cot ? "CoT" : "PoT";
  if (config.max_review_turns == 0) return mode;
  return std::to_string(config.n_reviewers) + "R-Lp + " + mode;
}

std::vector<SweepRow> cmd_sweep(const CliConfig& config, SweepAxis axis, const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<SweepRow> rows;
  for (const auto& value : values) {
    CliConfig c = config;
    apply_setting(c, to_string(axis), value);
    c.out_dir = config.out_dir / (std::string(to_string(axis)) + "-" + value);
    SweepRow row;
    row.value = value;
    row.method = method_label(c.run);
    switch (axis) {
      case SweepAxis::mode: row.label = c.run.mode == WriterMode::cot ? "CoT" : "PoT"; break;
      case SweepAxis::n_reviewers: row.label = std::to_string(c.run.n_reviewers) + "R-Lp"; break;
      case SweepAxis::k_shots: row.label = std::to_string(c.run.k_shots) + "-shot"; break;
    }
    row.summary = cmd_run(c).summary;
    rows.push_back(std::move(row));
  }
  fs::create_directories(config.out_dir);
  util::write_file_atomic(config.out_dir / "sweep.md", sweep_table(axis, rows));
  json doc = json::array();
  for (const auto& r : rows) {
    doc.push_back({{"label", r.label}, {"method", r.method}, {"value", r.value}, {"summary", r.summary.to_json()}});
  }
  util::write_file_atomic(config.out_dir / "sweep.json", doc.dump(2) + "\n");
  return rows;
}

std::string sweep_table(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::string out = "# Sweep over " + std::string(to_string(axis)) + "\n\n";
  out += "| Method | Configuration | EA (%) | Consensus | Mean review turns | LLM calls |\n";
  out += "|---|---|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    auto it = r.summary.terminations.find("consensus");
    std::size_t consensus = it == r.summary.terminations.end() ? 0 : it->second;
    out += "| " + r.label + " | " + r.method + " | " + evaluator::format_percent(100.0 * r.summary.accuracy) + " | " +
           std::to_string(consensus) + " | " + fixed(r.summary.mean_review_turns, 2) + " | " +
           std::to_string(r.summary.total_llm_calls) + " |\n";
  }
  return out;
}

}  // namespace consql::cli
