#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "dbsa/cache.hpp"
#include "dbsa/clients.hpp"
#include "dbsa/error.hpp"
#include "dbsa/mock.hpp"

using namespace dbsa;
using namespace std::chrono_literals;

namespace {

// Fails transiently on the first `failures` calls for each seed.
class FlakyGenerator : public Generator {
 public:
  explicit FlakyGenerator(int failures) : failures_(failures) {}
  std::string generate(const GenerationRequest& request) override {
    std::lock_guard lock(mutex_);
    if (attempts_[request.seed]++ < failures_) throw TransientError("429 Too Many Requests");
    return "ok";
  }

 private:
  int failures_;
  std::mutex mutex_;
  std::map<std::uint64_t, int> attempts_;
};

class RejectingGenerator : public Generator {
 public:
  std::string generate(const GenerationRequest&) override { throw ConfigError("401 bad key"); }
};

class SlowGenerator : public Generator {
 public:
  std::string generate(const GenerationRequest&) override {
    const int now = ++in_flight_;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    std::this_thread::sleep_for(5ms);
    --in_flight_;
    return "slow";
  }
  int peak() const { return peak_; }

 private:
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

GenerationConfig fast_config(std::size_t n) {
  GenerationConfig c;
  c.sample_count_n = n;
  c.retry_backoff = 1ms;
  c.max_concurrent_requests = 4;
  return c;
}

}  // namespace

TEST(GenerationConfig, Validation) {
  GenerationConfig c;
  EXPECT_NO_THROW(c.validate());
  c.sample_count_n = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.temperature = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.max_concurrent_requests = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(CacheKey, StableAndSensitive) {
  GenerationConfig c;
  EXPECT_EQ(cache_key("prompt", c, 1), cache_key("prompt", c, 1));
  EXPECT_NE(cache_key("prompt", c, 1), cache_key("prompt!", c, 1));
  EXPECT_NE(cache_key("prompt", c, 1), cache_key("prompt", c, 2));
  GenerationConfig hot = c;
  hot.temperature = 0.7;
  EXPECT_NE(cache_key("prompt", c, 1), cache_key("prompt", hot, 1));
  GenerationConfig concurrent = c;
  concurrent.max_concurrent_requests = 9;
  EXPECT_EQ(cache_key("prompt", c, 1), cache_key("prompt", concurrent, 1));
}

TEST(Sampler, RetriesTransientFailures) {
  FlakyGenerator gen(2);
  const auto s = sample("p", fast_config(5), gen, 3);
  EXPECT_EQ(s.responses.size(), 5u);
  EXPECT_EQ(s.provenance.retries, 10u);
}

TEST(Sampler, GivesUpAfterMaxRetries) {
  FlakyGenerator gen(10);
  auto cfg = fast_config(3);
  cfg.max_retries = 2;
  try {
    sample("p", cfg, gen, 3);
    FAIL();
  } catch (const SamplingError& e) {
    EXPECT_EQ(e.completed(), 0u);
  }
}

TEST(Sampler, PermanentErrorsAreNotRetried) {
  RejectingGenerator gen;
  EXPECT_THROW(sample("p", fast_config(3), gen, 1), ConfigError);
}

TEST(Sampler, RespectsConcurrencyLimit) {
  SlowGenerator gen;
  auto cfg = fast_config(24);
  cfg.max_concurrent_requests = 3;
  sample("p", cfg, gen, 1);
  EXPECT_LE(gen.peak(), 3);
  EXPECT_GE(gen.peak(), 2);
}

TEST(Sampler, SharedLimiterCapsAcrossSamplers) {
  SlowGenerator gen;
  auto limiter = std::make_shared<RequestLimiter>(2);
  auto cfg = fast_config(10);
  const Sampler a(gen, cfg, limiter), b(gen, cfg, limiter);
  std::jthread t1([&] { a.sample("x", 1); });
  std::jthread t2([&] { b.sample("y", 2); });
  t1.join();
  t2.join();
  EXPECT_LE(gen.peak(), 2);
}

TEST(Sampler, ResultsIndependentOfConcurrency) {
  MockGenerator gen({}, {{"a", 1}, {"b", 1}, {"c", 1}});
  auto one = fast_config(30);
  one.max_concurrent_requests = 1;
  auto many = fast_config(30);
  many.max_concurrent_requests = 8;
  EXPECT_EQ(sample("p", one, gen, 5).responses, sample("p", many, gen, 5).responses);
}

TEST(Sampler, CacheHitSkipsGenerator) {
  MockGenerator inner({}, {{"a", 1}, {"b", 1}});
  CountingGenerator counting(inner);
  SampleCache cache;
  const Sampler sampler(counting, fast_config(6), nullptr, &cache);
  const auto first = sampler.sample("p", 9);
  const auto second = sampler.sample("p", 9);
  EXPECT_EQ(first.responses, second.responses);
  EXPECT_EQ(counting.total_calls(), 6u);
}

TEST(CachingEmbedder, EmbedsEachTextOnce) {
  MockEmbedder inner({"a", "b"});
  CachingEmbedder caching(inner);
  const std::vector<std::string> texts{"a b", "a", "a b"};
  const Matrix first = caching.embed(texts);
  EXPECT_EQ(first, (Matrix{{1, 1}, {1, 0}, {1, 1}}));
  caching.embed(texts);
  EXPECT_EQ(caching.misses(), 2u);
}

TEST(ApiKey, MissingVariableNamed) {
  ::unsetenv("DBSA_TEST_MISSING_KEY");
  try {
    api_key_from_env("DBSA_TEST_MISSING_KEY");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("DBSA_TEST_MISSING_KEY"), std::string::npos);
  }
  ::setenv("DBSA_TEST_PRESENT_KEY", "k", 1);
  EXPECT_EQ(api_key_from_env("DBSA_TEST_PRESENT_KEY"), "k");
}
