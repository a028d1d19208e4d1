#include <gtest/gtest.h>

#include <fstream>

#include "dbsa/cache.hpp"
#include "dbsa/clients.hpp"
#include "dbsa/mock.hpp"
#include "test_support.hpp"

using namespace dbsa;

TEST(SampleCache, DiskRoundTripAcrossInstances) {
  support::TempDir dir;
  MockGenerator gen({}, {{"x", 1}, {"y", 1}});
  GenerationConfig cfg;
  cfg.sample_count_n = 8;
  SampleSet first;
  {
    SampleCache cache(dir.path());
    first = Sampler(gen, cfg, nullptr, &cache).sample("prompt", 4);
  }
  SampleCache reopened(dir.path());
  const auto loaded = reopened.load_samples(cache_key("prompt", cfg, 4));
  ASSERT_TRUE(loaded.has_value());
  EXPECT_EQ(*loaded, first);
}

TEST(SampleCache, CorruptFileIsAMiss) {
  support::TempDir dir;
  SampleCache cache(dir.path());
  { std::ofstream(dir.path() / "deadbeef.json") << "{not json"; }
  EXPECT_FALSE(cache.load_samples("deadbeef").has_value());
}

TEST(SampleCache, EmbeddingsPersist) {
  support::TempDir dir;
  {
    SampleCache cache(dir.path());
    cache.store_embedding("model", "text", {1.0, 2.5});
  }
  SampleCache reopened(dir.path());
  EXPECT_EQ(reopened.load_embedding("model", "text"), (std::vector<double>{1.0, 2.5}));
  EXPECT_FALSE(reopened.load_embedding("other", "text").has_value());
}

TEST(SampleCache, NeverStoresApiKey) {
  support::TempDir dir;
  ::setenv("DBSA_CACHE_TEST_KEY", "sk-secret-value", 1);
  MockGenerator gen({}, {{"x", 1}});
  GenerationConfig cfg;
  cfg.api_key_env = "DBSA_CACHE_TEST_KEY";
  SampleCache cache(dir.path());
  Sampler(gen, cfg, nullptr, &cache).sample("prompt", 1);
  for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
    std::ifstream in(entry.path());
    std::string content((std::istreambuf_iterator<char>(in)), {});
    EXPECT_EQ(content.find("sk-secret-value"), std::string::npos);
  }
}
