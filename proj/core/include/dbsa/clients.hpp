#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dbsa/matrix.hpp"

namespace dbsa {

class SampleCache;

/// Sampling parameters for one generator endpoint.
struct GenerationConfig {
  /// Base URL of an OpenAI-compatible API (".../v1"), or "mock:<file>".
  std::string endpoint_url;
  std::string model_name = "mock";
  double temperature = 1.0;
  int max_output_tokens = 256;
  std::size_t sample_count_n = 40;
  std::chrono::milliseconds timeout{60'000};
  /// Retries after the first attempt of a single draw.
  std::size_t max_retries = 3;
  std::size_t max_concurrent_requests = 4;
  /// First retry delay; doubles on each further retry.
  std::chrono::milliseconds retry_backoff{500};
  /// Environment variable holding the API key.
  std::string api_key_env = "DBSA_API_KEY";

  /// Throws ConfigError on n < 2, negative temperature or zero concurrency.
  void validate() const;
};

struct SampleProvenance {
  std::string model_name;
  std::uint64_t seed = 0;
  std::string timestamp;
  /// Total retries spent across all draws.
  std::size_t retries = 0;

  friend bool operator==(const SampleProvenance&, const SampleProvenance&) = default;
};

/// Monte Carlo sample of generator responses for one prompt.
struct SampleSet {
  std::string prompt;
  std::vector<std::string> responses;
  std::optional<Matrix> embeddings;
  SampleProvenance provenance;

  friend bool operator==(const SampleSet&, const SampleSet&) = default;
};

struct GenerationRequest {
  std::string_view prompt;
  const GenerationConfig& config;
  /// Seed of this draw; deterministic generators must honor it.
  std::uint64_t seed = 0;
};

/// One stateless draw from a stochastic text generator. Implementations
/// throw TransientError for retryable failures and ConfigError for requests
/// that can never succeed.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string generate(const GenerationRequest& request) = 0;
};

/// Maps texts to fixed-dimension vectors, one row per text.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Matrix embed(std::span<const std::string> texts) = 0;
  /// Identifier used in cache keys and provenance.
  virtual std::string model_id() const = 0;
};

/// Caps the number of requests in flight across every thread sharing it.
class RequestLimiter {
 public:
  explicit RequestLimiter(std::size_t capacity);

  void acquire();
  void release();

  class Guard {
   public:
    explicit Guard(RequestLimiter* limiter) : limiter_(limiter) {
      if (limiter_) limiter_->acquire();
    }
    ~Guard() {
      if (limiter_) limiter_->release();
    }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    RequestLimiter* limiter_;
  };

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t available_;
};

/// Stable content hash over (prompt, model, temperature, max tokens, n, seed).
std::string cache_key(std::string_view prompt, const GenerationConfig& config, std::uint64_t seed);

/// Digest of the sampling parameters alone (no prompt, no seed).
std::string config_digest(const GenerationConfig& config);

/// Draws Monte Carlo samples through a Generator with retries, a shared
/// concurrency limit and an optional response cache. Draw j of a sample set
/// with seed s uses derive_seed(s, j), so scheduling never changes results.
class Sampler {
 public:
  Sampler(Generator& generator, GenerationConfig config,
          std::shared_ptr<RequestLimiter> limiter = nullptr, SampleCache* cache = nullptr);

  /// Draws `count` responses (config().sample_count_n when absent).
  SampleSet sample(std::string_view prompt, std::uint64_t seed,
                   std::optional<std::size_t> count = std::nullopt) const;

  const GenerationConfig& config() const noexcept { return config_; }

 private:
  Generator& generator_;
  GenerationConfig config_;
  std::shared_ptr<RequestLimiter> limiter_;
  SampleCache* cache_;
};

/// n independent draws for `prompt`; see Sampler.
SampleSet sample(std::string_view prompt, const GenerationConfig& config, Generator& generator,
                 std::uint64_t seed);

/// Embeds `texts`, checking the batch is nonempty and the result is one row
/// per text with a single dimension.
Matrix embed(std::span<const std::string> texts, Embedder& embedder);

/// Embedder decorator with an in-memory (and optionally on-disk) per-text
/// cache. Cache hits never reach the wrapped embedder.
class CachingEmbedder : public Embedder {
 public:
  explicit CachingEmbedder(Embedder& inner, SampleCache* disk = nullptr);

  Matrix embed(std::span<const std::string> texts) override;
  std::string model_id() const override { return inner_.model_id(); }

  std::size_t misses() const;

 private:
  Embedder& inner_;
  SampleCache* disk_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::vector<double>> entries_;
  std::size_t misses_ = 0;
};

/// ISO-8601 UTC timestamp of the current time.
std::string utc_timestamp();

/// Value of the environment variable `name`; ConfigError naming it if unset.
std::string api_key_from_env(const std::string& name);

}  // namespace dbsa
