#include "dbsa_cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "dbsa/ablation.hpp"
#include "dbsa/error.hpp"
#include "dbsa/fixtures.hpp"
#include "dbsa/http_client.hpp"
#include "dbsa/mock.hpp"
#include "dbsa/pipeline.hpp"
#include "dbsa/random.hpp"
#include "dbsa/reporting.hpp"

namespace dbsa::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string prompt;
  std::string prompt_file;
  std::string fixture;

  std::string endpoint;
  std::string embedding_endpoint;
  std::string embedding_model = "text-embedding-ada-002";
  std::string model = "mock";
  double temperature = 1.0;
  int max_tokens = 256;
  std::size_t samples = 40;
  std::optional<std::size_t> perturbed_samples;
  double timeout_s = 60.0;
  std::size_t max_retries = 3;
  std::size_t concurrency = 4;
  std::size_t backoff_ms = 500;
  std::string api_key_env = "DBSA_API_KEY";

  std::string neighbors = "synonyms";
  std::size_t k = 3;
  std::string mode = "embedding_energy";
  std::string metric = "cosine";
  std::optional<std::size_t> permutations;
  std::uint64_t seed = 0;
  bool resample_baseline = false;
  bool fisher = false;
  bool normalize_by_distance = false;
  bool add_one = false;

  std::string cache_dir;
  bool no_cache = false;
  bool quiet = false;

  std::vector<std::string> formats{"ansi"};
  std::string output;
  std::optional<std::size_t> top_k;
  double alpha = 0.05;
  bool show_p_values = false;
  int decimals = 2;
  std::vector<std::string> suppress;
  bool dry_run = false;

  std::vector<std::string> model_endpoints;
  std::vector<std::string> metrics{"cosine", "l1", "l2"};
  std::vector<std::size_t> sizes{4, 8, 16, 32, 40};
  std::size_t repeats = 5;
  std::string out_prefix;

  bool list_fixtures = false;
  std::string fixtures_dir = "fixtures";
};

class Logger {
 public:
  Logger(std::ostream& err, bool quiet) : err_(err), quiet_(quiet) {}

  void info(std::string_view msg) {
    if (!quiet_) write("info", msg);
  }
  void warn(std::string_view msg) { write("warn", msg); }
  void error(std::string_view msg) { write("error", msg); }

  std::function<void(std::string_view)> sink() {
    return [this](std::string_view msg) { warn(msg); };
  }

 private:
  void write(std::string_view level, std::string_view msg) {
    std::lock_guard lock(mutex_);
    err_ << "dbsa level=" << level << " msg=\"" << msg << "\"\n";
  }

  std::ostream& err_;
  bool quiet_;
  std::mutex mutex_;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out.flush()) throw ConfigError("cannot write " + path.string());
}

GenerationConfig generation_config(const Options& o, std::string endpoint) {
  GenerationConfig g;
  g.endpoint_url = std::move(endpoint);
  g.model_name = o.model;
  g.temperature = o.temperature;
  g.max_output_tokens = o.max_tokens;
  g.sample_count_n = o.samples;
  g.timeout = std::chrono::milliseconds(static_cast<long long>(o.timeout_s * 1000.0));
  g.max_retries = o.max_retries;
  g.max_concurrent_requests = o.concurrency;
  g.retry_backoff = std::chrono::milliseconds(o.backoff_ms);
  g.api_key_env = o.api_key_env;
  return g;
}

RunConfig run_config(const Options& o) {
  RunConfig c;
  c.generation = generation_config(o, o.endpoint);
  c.perturbed_sample_count = o.perturbed_samples;
  c.k = o.k;
  try {
    c.mode = parse_mode(o.mode);
    c.metric = parse_metric(o.metric);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  c.permutations = o.permutations;
  c.run_seed = o.seed;
  c.resample_baseline_per_unit = o.resample_baseline;
  c.fisher_combination = o.fisher;
  c.normalize_by_distance = o.normalize_by_distance;
  c.add_one_smoothing = o.add_one;
  c.validate();
  return c;
}

bool is_http(std::string_view endpoint) {
  return endpoint.starts_with("http://") || endpoint.starts_with("https://");
}

void check_endpoint(std::string_view endpoint) {
  if (endpoint.empty()) {
    throw ConfigError("no endpoint configured; pass --endpoint mock:FILE or an http(s) URL");
  }
  if (!endpoint.starts_with("mock:") && !is_http(endpoint)) {
    throw ConfigError("unsupported endpoint '" + std::string(endpoint) +
                      "'; expected mock:FILE or an http(s) URL");
  }
}

/// Generator and embedder behind one endpoint.
class Clients {
 public:
  Clients(const Options& o, const std::string& endpoint,
          const std::shared_ptr<RequestLimiter>& limiter) {
    check_endpoint(endpoint);
    if (endpoint.starts_with("mock:")) {
      mock_ = std::make_unique<MockBackend>(load_mock_backend(endpoint.substr(5)));
      return;
    }
    const std::string key = api_key_from_env(o.api_key_env);
    http_generator_ = std::make_unique<HttpGenerator>(endpoint, key);
    HttpEmbedderOptions eo;
    eo.endpoint_url = o.embedding_endpoint.empty() ? endpoint : o.embedding_endpoint;
    eo.model = o.embedding_model;
    eo.api_key = key;
    eo.timeout = std::chrono::milliseconds(static_cast<long long>(o.timeout_s * 1000.0));
    eo.max_retries = o.max_retries;
    eo.retry_backoff = std::chrono::milliseconds(o.backoff_ms);
    eo.limiter = limiter;
    http_embedder_ = std::make_unique<HttpEmbedder>(std::move(eo));
  }

  Generator& generator() {
    return mock_ ? static_cast<Generator&>(mock_->generator) : *http_generator_;
  }
  Embedder& embedder() {
    return mock_ ? static_cast<Embedder&>(mock_->embedder) : *http_embedder_;
  }

 private:
  std::unique_ptr<MockBackend> mock_;
  std::unique_ptr<Generator> http_generator_;
  std::unique_ptr<Embedder> http_embedder_;
};

/// Stand-in for providers that would need network access during a dry run.
class AssumedNeighbors : public NeighborProvider {
 public:
  explicit AssumedNeighbors(std::string description) : description_(std::move(description)) {}

  NeighborSet neighbors(std::string_view token, std::string_view, std::size_t k) override {
    NeighborSet set{std::string(token), {}, NeighborProviderKind::generator_synonyms};
    for (std::size_t i = 0; i < k; ++i) set.neighbors.push_back({fmt::format("<{}>", i), {}});
    return set;
  }
  NeighborProviderKind kind() const noexcept override {
    return NeighborProviderKind::generator_synonyms;
  }
  std::string describe() const override { return description_; }

 private:
  std::string description_;
};

std::unique_ptr<NeighborProvider> make_neighbors(const Options& o, const RunConfig& config,
                                                 Clients* clients,
                                                 const std::shared_ptr<RequestLimiter>& limiter,
                                                 SampleCache* cache) {
  const std::string& spec = o.neighbors;
  if (spec.starts_with("static:")) {
    const std::string path = spec.substr(7);
    return std::make_unique<StaticNeighborProvider>(StaticNeighborTable::load(path), path);
  }
  if (spec.starts_with("knn:")) {
    const std::string path = spec.substr(4);
    auto lexicon = load_lexicon(path);
    if (clients == nullptr) return std::make_unique<AssumedNeighbors>(spec);
    return std::make_unique<KnnNeighborProvider>(std::move(lexicon), clients->embedder(),
                                                 config.metric, path);
  }
  if (spec == "synonyms") {
    if (clients == nullptr) return std::make_unique<AssumedNeighbors>(spec);
    return std::make_unique<SynonymNeighborProvider>(
        Sampler(clients->generator(), config.generation, limiter, cache),
        derive_seed(config.run_seed, "synonyms"));
  }
  throw ConfigError("unknown neighbor source '" + spec +
                    "'; expected static:FILE, knn:LEXICON or synonyms");
}

std::unique_ptr<SampleCache> make_cache(const Options& o) {
  if (o.no_cache || o.cache_dir.empty()) return nullptr;
  return std::make_unique<SampleCache>(fs::path(o.cache_dir));
}

std::string resolve_prompt(const Options& o) {
  const int given = !o.prompt.empty() + !o.prompt_file.empty() + !o.fixture.empty();
  if (given != 1) throw ConfigError("give exactly one of --prompt, --prompt-file or --fixture");
  if (!o.prompt.empty()) return o.prompt;
  if (!o.fixture.empty()) {
    try {
      return std::string(fixtures::prompt(o.fixture));
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  }
  std::string text = read_file(o.prompt_file);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

std::string_view extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::ansi: return "txt";
    case ReportFormat::html: return "html";
    case ReportFormat::json: return "json";
  }
  return "txt";
}

int cmd_dry_run(const Options& o, const std::string& prompt, const RunConfig& config,
                std::ostream& out) {
  const bool offline_neighbors =
      o.neighbors.starts_with("static:") ||
      (o.neighbors.starts_with("knn:") && o.endpoint.starts_with("mock:"));
  std::unique_ptr<Clients> clients;
  if (offline_neighbors && o.neighbors.starts_with("knn:")) {
    clients = std::make_unique<Clients>(o, o.endpoint, nullptr);
  }
  auto provider = make_neighbors(o, config, clients.get(), nullptr, nullptr);
  const WorkPlan plan = plan_dbsa(prompt, config, *provider);
  out << "tokens: " << plan.tokens << "\n"
      << "unique_tokens: " << plan.unique_tokens << "\n"
      << "tokens_without_neighbors: " << plan.tokens_without_neighbors << "\n"
      << "units: " << plan.units << "\n"
      << "baseline_sampling_calls: " << plan.baseline_sampling_calls << "\n"
      << "perturbed_sampling_calls: " << plan.perturbed_sampling_calls << "\n"
      << "sampling_calls: " << plan.baseline_sampling_calls + plan.perturbed_sampling_calls
      << "\n"
      << "generation_requests: " << plan.generation_requests << "\n"
      << "neighbors: "
      << (offline_neighbors ? "exact" : "assumed k per token (upper bound)") << "\n";
  return kExitOk;
}

int cmd_analyze(const Options& o, std::ostream& out, Logger& log) {
  const std::string prompt = resolve_prompt(o);
  const RunConfig config = run_config(o);

  RenderOptions render_options;
  render_options.top_k = o.top_k;
  render_options.alpha = o.alpha;
  render_options.show_p_values = o.show_p_values;
  render_options.decimals = o.decimals;
  render_options.suppressed = {o.suppress.begin(), o.suppress.end()};
  std::vector<ReportFormat> formats;
  try {
    render_options.validate();
    for (const auto& f : o.formats) formats.push_back(parse_format(f));
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (formats.size() > 1 && o.output.empty()) {
    throw ConfigError("several formats need --output as a file stem");
  }

  if (o.dry_run) {
    check_endpoint(o.endpoint);
    return cmd_dry_run(o, prompt, config, out);
  }

  auto limiter = std::make_shared<RequestLimiter>(config.generation.max_concurrent_requests);
  auto cache = make_cache(o);
  Clients clients(o, o.endpoint, limiter);
  auto provider = make_neighbors(o, config, &clients, limiter, cache.get());

  log.info(fmt::format("analyze tokens={} n={} m={} k={} mode={} metric={} seed={}",
                       tokenize(prompt).size(), config.n(), config.m(), config.k,
                       to_string(config.mode), to_string(config.metric), config.run_seed));
  Backends backends{clients.generator(), clients.embedder(), *provider, cache.get(), limiter, {},
                    log.sink()};

  SensitivityReport report;
  try {
    report = run_dbsa(prompt, config, backends);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    log.error(fmt::format("run failed: {}", e.what()));
    return kExitFailure;
  }

  for (ReportFormat f : formats) {
    render_options.format = f;
    const std::string bytes = render(report, render_options);
    if (o.output.empty()) {
      out << bytes;
    } else {
      fs::path path = o.output;
      if (formats.size() > 1) path += fmt::format(".{}", extension(f));
      write_file(path, bytes);
      log.info(fmt::format("wrote {}", path.string()));
    }
  }

  const std::size_t skipped = report.skipped_tokens();
  const std::size_t failed = report.failed_units();
  if (!report.tokens.empty() && skipped == report.tokens.size()) {
    log.error("every token was skipped");
    return kExitFailure;
  }
  if (skipped > 0 || failed > 0) {
    log.warn(fmt::format("partial result skipped_tokens={} failed_units={}", skipped, failed));
    return kExitPartial;
  }
  return kExitOk;
}

struct LabeledEndpoint {
  std::string label;
  std::string endpoint;
};

std::vector<LabeledEndpoint> model_endpoints(const Options& o) {
  std::vector<LabeledEndpoint> out;
  for (const auto& spec : o.model_endpoints) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--model-endpoint expects LABEL=ENDPOINT, got '" + spec + "'");
    }
    out.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
  }
  return out;
}

int finish_ablation(const Options& o, const AblationResult& result, std::ostream& out,
                    Logger& log) {
  for (const auto& w : result.warnings) log.warn(w);
  if (o.out_prefix.empty()) {
    out << ablation_to_csv(result);
  } else {
    write_file(o.out_prefix + ".csv", ablation_to_csv(result));
    write_file(o.out_prefix + ".json", ablation_to_json(result).dump(2) + "\n");
    log.info(fmt::format("wrote {}.csv and {}.json", o.out_prefix, o.out_prefix));
  }
  return result.warnings.empty() ? kExitOk : kExitPartial;
}

int cmd_ablate(const Options& o, const std::string& kind, std::ostream& out, Logger& log) {
  const std::string prompt = resolve_prompt(o);
  const RunConfig config = run_config(o);
  auto cache = make_cache(o);

  std::vector<LabeledEndpoint> specs = model_endpoints(o);
  if (specs.empty()) {
    check_endpoint(o.endpoint);
    specs.push_back({o.model, o.endpoint});
    if (kind == "mc-sweep") specs.push_back({o.model + "-2", o.endpoint});
  }

  std::vector<std::unique_ptr<Clients>> clients;
  std::vector<ModelBackend> models;
  for (const auto& s : specs) {
    clients.push_back(std::make_unique<Clients>(o, s.endpoint, nullptr));
    GenerationConfig g = generation_config(o, s.endpoint);
    g.model_name = s.label;
    models.push_back({s.label, &clients.back()->generator(), &clients.back()->embedder(), g});
  }

  // Neighbors come from the first model so every model sees the same sets.
  auto limiter = std::make_shared<RequestLimiter>(config.generation.max_concurrent_requests);
  RunConfig neighbor_config = config;
  neighbor_config.generation = models.front().generation;
  auto provider = make_neighbors(o, neighbor_config, clients.front().get(), limiter, cache.get());
  const AblationContext context{*provider, cache.get(), log.sink()};

  try {
    if (kind == "cross-model") {
      if (models.size() < 2) throw ConfigError("cross-model needs at least two --model-endpoint");
      return finish_ablation(o, cross_model_matrix(prompt, models, config, context), out, log);
    }
    if (kind == "metrics") {
      std::vector<DistanceMetric> metrics;
      for (const auto& m : o.metrics) metrics.push_back(parse_metric(m));
      return finish_ablation(o, metric_agreement(prompt, models.front(), config, metrics, context),
                             out, log);
    }
    if (models.size() != 2) throw ConfigError("mc-sweep needs exactly two models");
    return finish_ablation(
        o, mc_sweep(prompt, models[0], models[1], o.sizes, o.repeats, config, context), out, log);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    log.error(fmt::format("ablation failed: {}", e.what()));
    return kExitFailure;
  }
}

int cmd_fixtures(const Options& o, std::ostream& out, Logger& log) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& p : fixtures::prompts()) {
    files.emplace_back(fmt::format("{}.txt", p.name), std::string(p.text) + "\n");
  }
  for (auto name : fixtures::table_names()) {
    files.emplace_back(fmt::format("{}_neighbors.json", name),
                       fixtures::neighbor_table(name).dump(2) + "\n");
  }
  if (o.list_fixtures) {
    for (const auto& [name, content] : files) out << name << "\n";
    return kExitOk;
  }
  for (const auto& [name, content] : files) write_file(fs::path(o.fixtures_dir) / name, content);
  log.info(fmt::format("wrote {} fixture files to {}", files.size(), o.fixtures_dir));
  return kExitOk;
}

void add_run_options(CLI::App& app, Options& o) {
  auto* input = app.add_option_group("input");
  input->add_option("--prompt", o.prompt, "Prompt text");
  input->add_option("--prompt-file", o.prompt_file, "File holding the prompt");
  input->add_option("--fixture", o.fixture, "Bundled prompt: legal, medical, trading, manufacturing");

  app.add_option("--endpoint", o.endpoint, "mock:FILE or OpenAI-compatible base URL")
      ->envname("DBSA_ENDPOINT");
  app.add_option("--embedding-endpoint", o.embedding_endpoint, "Embeddings base URL");
  app.add_option("--embedding-model", o.embedding_model, "Embedding model name");
  app.add_option("--model", o.model, "Generator model name");
  app.add_option("--temperature", o.temperature, "Sampling temperature");
  app.add_option("--max-tokens", o.max_tokens, "Maximum output tokens per draw");
  app.add_option("-n,--samples", o.samples, "Baseline sample count n");
  app.add_option("-m,--perturbed-samples", o.perturbed_samples, "Perturbed sample count m");
  app.add_option("--timeout", o.timeout_s, "Request timeout in seconds");
  app.add_option("--max-retries", o.max_retries, "Retries per draw");
  app.add_option("--concurrency", o.concurrency, "Maximum requests in flight");
  app.add_option("--backoff-ms", o.backoff_ms, "Initial retry delay in milliseconds");
  app.add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key");

  app.add_option("--neighbors", o.neighbors, "static:FILE, knn:LEXICON or synonyms");
  app.add_option("-k,--neighbor-count", o.k, "Neighbors per token");
  app.add_option("--mode", o.mode, "embedding_energy, sim1d_mean, sim1d_emd, sim1d_energy");
  app.add_option("--metric", o.metric, "cosine, l1 or l2");
  app.add_option("--permutations", o.permutations, "Permutation count");
  app.add_option("--seed", o.seed, "Run seed");
  app.add_flag("--resample-baseline-per-unit", o.resample_baseline,
               "Draw a fresh baseline sample for every unit");
  app.add_flag("--fisher", o.fisher, "Combine unit p-values with Fisher's method");
  app.add_flag("--normalize-by-distance", o.normalize_by_distance,
               "Divide unit effects by neighbor distance");
  app.add_flag("--add-one", o.add_one, "Add-one smoothing of permutation p-values");

  app.add_option("--cache-dir", o.cache_dir, "Response cache directory")->envname("DBSA_CACHE_DIR");
  app.add_flag("--no-cache", o.no_cache, "Disable the on-disk cache");
  app.add_flag("-q,--quiet", o.quiet, "Only warnings and errors on stderr");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Token-level distribution-based sensitivity analysis", "dbsa"};
  app.set_config("--config", "", "TOML configuration file");
  app.require_subcommand(1);
  app.fallthrough();
  add_run_options(app, o);

  auto* analyze = app.add_subcommand("analyze", "Score every token of a prompt");
  analyze->add_option("-f,--format", o.formats, "ansi, html, json (comma separated)")
      ->delimiter(',');
  analyze->add_option("-o,--output", o.output, "Output path (file stem for several formats)");
  analyze->add_option("--top-k", o.top_k, "Append a top-k table");
  analyze->add_option("--alpha", o.alpha, "Significance level");
  analyze->add_flag("--show-p-values", o.show_p_values, "Show omega and p per token");
  analyze->add_option("--decimals", o.decimals, "Decimals in tables");
  analyze->add_option("--suppress", o.suppress, "Tokens never highlighted")->delimiter(',');
  analyze->add_flag("--dry-run", o.dry_run, "Print the work plan without sampling");

  auto* ablate = app.add_subcommand("ablate", "Cross-model, metric and sample-size ablations");
  ablate->require_subcommand(1);
  ablate->fallthrough();
  ablate->add_option("--model-endpoint", o.model_endpoints, "LABEL=ENDPOINT, repeatable");
  ablate->add_option("--out-prefix", o.out_prefix, "Write PREFIX.csv and PREFIX.json");
  auto* cross = ablate->add_subcommand("cross-model", "Spearman agreement between models");
  auto* metrics = ablate->add_subcommand("metrics", "Agreement between distance metrics");
  metrics->add_option("--metrics", o.metrics, "Metrics to compare")->delimiter(',');
  auto* sweep = ablate->add_subcommand("mc-sweep", "Agreement as the sample size grows");
  sweep->add_option("--sizes", o.sizes, "Ascending sample sizes")->delimiter(',');
  sweep->add_option("--repeats", o.repeats, "Repeats per sample size");
  for (auto* sub : {cross, metrics, sweep}) sub->fallthrough();

  auto* fixtures_cmd = app.add_subcommand("fixtures", "Write the bundled prompts and tables");
  fixtures_cmd->add_flag("--list", o.list_fixtures, "List fixture files without writing");
  fixtures_cmd->add_option("--out", o.fixtures_dir, "Target directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "dbsa level=error msg=\"" << e.what() << "\"\n";
    return kExitConfig;
  }

  Logger log(err, o.quiet);
  try {
    if (*analyze) return cmd_analyze(o, out, log);
    if (*fixtures_cmd) return cmd_fixtures(o, out, log);
    for (auto* sub : {cross, metrics, sweep}) {
      if (*sub) return cmd_ablate(o, sub->get_name(), out, log);
    }
    log.error("unknown subcommand");
    return kExitConfig;
  } catch (const ConfigError& e) {
    log.error(e.what());
    return kExitConfig;
  } catch (const ArgumentError& e) {
    log.error(e.what());
    return kExitConfig;
  } catch (const Error& e) {
    log.error(e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    log.error(e.what());
    return kExitFailure;
  }
}

}  // namespace dbsa::cli
