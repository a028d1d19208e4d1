#include "dbsa/clients.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <thread>

#include <fmt/format.h>

#include "dbsa/cache.hpp"
#include "dbsa/digest.hpp"
#include "dbsa/error.hpp"
#include "dbsa/random.hpp"

namespace dbsa {

void GenerationConfig::validate() const {
  if (sample_count_n < 2) {
    throw ConfigError("sample_count_n must be >= 2 (got " + std::to_string(sample_count_n) + ")");
  }
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (max_concurrent_requests < 1) throw ConfigError("max_concurrent_requests must be >= 1");
  if (max_output_tokens < 1) throw ConfigError("max_output_tokens must be >= 1");
}

RequestLimiter::RequestLimiter(std::size_t capacity) : available_(std::max<std::size_t>(1, capacity)) {}

void RequestLimiter::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [this] { return available_ > 0; });
  --available_;
}

void RequestLimiter::release() {
  {
    std::lock_guard lock(mutex_);
    ++available_;
  }
  cv_.notify_one();
}

std::string config_digest(const GenerationConfig& config) {
  return sha256_hex(fmt::format("model={}\ntemperature={:.17g}\nmax_output_tokens={}\n",
                                config.model_name, config.temperature,
                                config.max_output_tokens));
}

std::string cache_key(std::string_view prompt, const GenerationConfig& config, std::uint64_t seed) {
  return sha256_hex(fmt::format("prompt={}\n{}n={}\nseed={}\n", prompt, config_digest(config),
                                config.sample_count_n, seed));
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string api_key_from_env(const std::string& name) {
  const char* value = std::getenv(name.c_str());
  if (value == nullptr || *value == '\0') {
    throw ConfigError("environment variable " + name + " is not set (API key required)");
  }
  return value;
}

Sampler::Sampler(Generator& generator, GenerationConfig config,
                 std::shared_ptr<RequestLimiter> limiter, SampleCache* cache)
    : generator_(generator),
      config_(std::move(config)),
      limiter_(limiter ? std::move(limiter)
                       : std::make_shared<RequestLimiter>(config_.max_concurrent_requests)),
      cache_(cache) {}

SampleSet Sampler::sample(std::string_view prompt, std::uint64_t seed,
                          std::optional<std::size_t> count) const {
  GenerationConfig cfg = config_;
  if (count) cfg.sample_count_n = *count;
  const std::size_t n = cfg.sample_count_n;

  std::string key;
  std::unique_lock<std::mutex> key_lock;
  if (cache_ != nullptr) {
    key = cache_key(prompt, cfg, seed);
    key_lock = std::unique_lock(cache_->key_mutex(key));
    if (auto hit = cache_->load_samples(key)) return *std::move(hit);
  }

  std::vector<std::string> responses(n);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> completed{0};
  std::atomic<std::size_t> retries{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  const auto worker = [&] {
    for (;;) {
      if (failed.load()) return;
      const std::size_t j = next.fetch_add(1);
      if (j >= n) return;
      const GenerationRequest request{prompt, cfg, derive_seed(seed, j)};
      auto delay = cfg.retry_backoff;
      for (std::size_t attempt = 0;; ++attempt) {
        try {
          RequestLimiter::Guard guard(limiter_.get());
          responses[j] = generator_.generate(request);
          completed.fetch_add(1);
          break;
        } catch (const TransientError& e) {
          if (attempt >= cfg.max_retries) {
            std::lock_guard lock(error_mutex);
            if (!failed.exchange(true)) {
              error = std::make_exception_ptr(SamplingError(
                  fmt::format("draw {} failed after {} retries: {}", j, attempt, e.what()),
                  completed.load()));
            }
            return;
          }
          retries.fetch_add(1);
          std::this_thread::sleep_for(delay);
          delay = std::min<std::chrono::milliseconds>(delay * 2, std::chrono::seconds(30));
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    }
  };

  const std::size_t threads = std::min(cfg.max_concurrent_requests, n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  SampleSet out;
  out.prompt = std::string(prompt);
  out.responses = std::move(responses);
  out.provenance = {cfg.model_name, seed, utc_timestamp(), retries.load()};
  if (cache_ != nullptr) cache_->store_samples(key, out, config_digest(cfg));
  return out;
}

SampleSet sample(std::string_view prompt, const GenerationConfig& config, Generator& generator,
                 std::uint64_t seed) {
  config.validate();
  return Sampler(generator, config).sample(prompt, seed);
}

Matrix embed(std::span<const std::string> texts, Embedder& embedder) {
  if (texts.empty()) throw ArgumentError("empty batch");
  Matrix out = embedder.embed(texts);
  if (out.rows() != texts.size()) {
    throw ConsistencyError(fmt::format("embedder returned {} rows for {} texts", out.rows(),
                                       texts.size()));
  }
  if (out.cols() == 0) throw ConsistencyError("embedder returned zero-dimensional vectors");
  return out;
}

CachingEmbedder::CachingEmbedder(Embedder& inner, SampleCache* disk) : inner_(inner), disk_(disk) {}

Matrix CachingEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw ArgumentError("empty batch");
  const std::string model = inner_.model_id();

  std::vector<std::string> missing;
  {
    std::lock_guard lock(mutex_);
    for (const auto& t : texts) {
      if (entries_.contains(t)) continue;
      if (disk_ != nullptr) {
        if (auto v = disk_->load_embedding(model, t)) {
          entries_.emplace(t, *std::move(v));
          continue;
        }
      }
      if (std::find(missing.begin(), missing.end(), t) == missing.end()) missing.push_back(t);
    }
  }

  if (!missing.empty()) {
    const Matrix fresh = dbsa::embed(missing, inner_);
    std::lock_guard lock(mutex_);
    misses_ += missing.size();
    for (std::size_t i = 0; i < missing.size(); ++i) {
      const auto row = fresh.row(i);
      std::vector<double> v(row.begin(), row.end());
      if (disk_ != nullptr) disk_->store_embedding(model, missing[i], v);
      entries_.insert_or_assign(missing[i], std::move(v));
    }
  }

  Matrix out;
  std::lock_guard lock(mutex_);
  for (const auto& t : texts) out.append_row(entries_.at(t));
  return out;
}

std::size_t CachingEmbedder::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

}  // namespace dbsa
