#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dbsa/error.hpp"
#include "dbsa/mock.hpp"
#include "dbsa/pipeline.hpp"
#include "test_support.hpp"

using namespace dbsa;
using namespace dbsa::support;

namespace {

RunConfig small_config(std::size_t n = 10, std::size_t concurrency = 2) {
  RunConfig cfg;
  cfg.generation.sample_count_n = n;
  cfg.generation.max_concurrent_requests = concurrency;
  cfg.k = 1;
  cfg.permutations = 99;
  cfg.run_seed = 11;
  return cfg;
}

SensitivityReport run(std::string_view prompt, const RunConfig& cfg, Generator& g, Embedder& e,
                      NeighborProvider& nb) {
  return run_dbsa(prompt, cfg, Backends{g, e, nb});
}

const TokenSensitivity& find(const SensitivityReport& r, std::string_view token) {
  auto it = std::find_if(r.tokens.begin(), r.tokens.end(),
                         [&](const TokenSensitivity& t) { return t.token == token; });
  if (it == r.tokens.end()) throw std::runtime_error("missing token");
  return *it;
}

class ScaledEmbedder : public Embedder {
 public:
  ScaledEmbedder(Embedder& inner, double factor) : inner_(inner), factor_(factor) {}
  Matrix embed(std::span<const std::string> texts) override {
    Matrix m = inner_.embed(texts);
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) *= factor_;
    return m;
  }
  std::string model_id() const override { return inner_.model_id() + "*"; }

 private:
  Embedder& inner_;
  double factor_;
};

SensitivityReport synthetic_report(const std::vector<std::pair<std::string, double>>& omegas) {
  SensitivityReport r;
  std::size_t pos = 0;
  for (const auto& [token, omega] : omegas) {
    TokenSensitivity t;
    t.token = token;
    t.positions = {pos++};
    t.omega = omega;
    t.p_value = omega > 0.5 ? 0.01 : 0.5;
    r.tokens.push_back(t);
  }
  return r;
}

}  // namespace

TEST(RunConfigValidation, RejectsBadValues) {
  RunConfig cfg = small_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.perturbed_sample_count = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.permutations = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.mode = EffectMode::sim1d_mean;
  cfg.normalize_by_distance = true;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config(1);
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(RunConfigValidation, DefaultsFollowMode) {
  RunConfig cfg;
  EXPECT_EQ(cfg.m(), 40u);
  EXPECT_EQ(cfg.effective_permutations(), 500u);
  cfg.mode = EffectMode::sim1d_emd;
  EXPECT_EQ(cfg.effective_permutations(), 1000u);
}

TEST(Intensities, MinMaxExamples) {
  EXPECT_EQ(normalize_intensities({{"a", 0.0}, {"b", 0.5}, {"c", 1.0}}),
            (std::map<std::string, int>{{"a", 0}, {"b", 50}, {"c", 100}}));
  EXPECT_EQ(normalize_intensities({{"a", 3.0}}), (std::map<std::string, int>{{"a", 0}}));
  EXPECT_EQ(normalize_intensities({{"a", 2.0}, {"b", 2.0}}),
            (std::map<std::string, int>{{"a", 0}, {"b", 0}}));
  EXPECT_EQ(normalize_intensities({{"a", 0.0}, {"b", 0.125}, {"c", 1.0}}).at("b"), 13);
  EXPECT_TRUE(normalize_intensities({}).empty());
}

TEST(TopK, TiesKeepPromptOrder) {
  const auto r = synthetic_report({{"w", 0.2}, {"x", 0.9}, {"y", 0.2}, {"z", 0.9}});
  const auto top = top_k_table(r, 3, 0.05);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].token, "x");
  EXPECT_EQ(top[1].token, "z");
  EXPECT_EQ(top[2].token, "w");
  EXPECT_TRUE(top[0].significant);
  EXPECT_FALSE(top[2].significant);
  EXPECT_EQ(top_k_table(r, 10, 0.05).size(), 4u);
  EXPECT_EQ(top_k_table(synthetic_report({{"only", 0.0}}), 5, 0.05).size(), 1u);
}

TEST(TopK, SkippedExcludedOnRequest) {
  auto r = synthetic_report({{"a", 0.3}, {"b", 0.0}});
  r.tokens[1].skipped = true;
  EXPECT_EQ(top_k_table(r, 5, 0.05, false).size(), 1u);
  EXPECT_EQ(top_k_table(r, 5, 0.05, true).size(), 2u);
}

TEST(UnitId, StableAndDistinct) {
  const auto a = make_unit_id("p", 0, "x");
  EXPECT_EQ(a.size(), 16u);
  EXPECT_EQ(a, make_unit_id("p", 0, "x"));
  EXPECT_NE(a, make_unit_id("p", 1, "x"));
  EXPECT_NE(a, make_unit_id("p", 0, "y"));
  EXPECT_NE(a, make_unit_id("q", 0, "x"));
}

TEST(Pipeline, PlantedTokenDominates) {
  auto backend = planted_backend();
  auto nb = inline_neighbors({{"mild", {"slight"}}, {"congestive", {"acute"}}, {"edema", {"swelling"}}});
  const auto r = run("mild congestive edema", small_config(12), backend.generator,
                     backend.embedder, nb);
  ASSERT_EQ(r.tokens.size(), 3u);
  const auto& c = find(r, "congestive");
  EXPECT_LT(c.p_value, 0.05);
  EXPECT_GT(c.omega, find(r, "mild").omega);
  EXPECT_GT(c.omega, find(r, "edema").omega);
  EXPECT_EQ(r.normalized_intensity.at("congestive"), 100);
  EXPECT_EQ(c.per_unit.size(), 1u);
  EXPECT_EQ(c.per_unit[0].record.perturbed_prompt, "mild acute edema");
}

TEST(Pipeline, NullBackendGivesValidPValues) {
  auto backend = null_backend();
  auto nb = synthetic_neighbors({"x", "is", "y"});
  auto cfg = small_config(8);
  cfg.k = 3;
  const auto r = run("x is y", cfg, backend.generator, backend.embedder, nb);
  for (const auto& t : r.tokens) {
    EXPECT_FALSE(t.skipped);
    EXPECT_EQ(t.per_unit.size(), 3u);
    for (const auto& u : t.per_unit) {
      EXPECT_GT(u.test.p_value, 0.0);
      EXPECT_LE(u.test.p_value, 1.0);
      EXPECT_GE(u.test.effect_size, -1e-12);
    }
  }
}

TEST(Pipeline, RepeatedTokenAveragesOccurrences) {
  MockGenerator g({{PromptMatcher{PromptMatcher::Kind::equals, "z y x"},
                    {{"asthma inhaler", 1.0}, {"copd lung", 1.0}}}},
                  {{"heart failure", 1.0}, {"fluid edema", 1.0}});
  auto backend = planted_backend();
  auto nb = inline_neighbors({{"x", {"z"}}, {"y", {"w"}}});
  const auto r = run("x y x", small_config(10), g, backend.embedder, nb);
  ASSERT_EQ(r.tokens.size(), 2u);
  const auto& x = r.tokens[0];
  EXPECT_EQ(x.positions, (std::vector<std::size_t>{0, 2}));
  ASSERT_EQ(x.per_occurrence.size(), 2u);
  EXPECT_GT(x.per_occurrence[0].mean_effect, x.per_occurrence[1].mean_effect);
  EXPECT_NEAR(x.omega, (x.per_occurrence[0].mean_effect + x.per_occurrence[1].mean_effect) / 2,
              1e-12);
  EXPECT_NEAR(x.p_value, (x.per_unit[0].test.p_value + x.per_unit[1].test.p_value) / 2, 1e-12);
}

TEST(Pipeline, MissingNeighborsSkipToken) {
  auto backend = planted_backend();
  auto nb = inline_neighbors({{"congestive", {"acute"}}});
  const auto r = run("mild congestive", small_config(6), backend.generator, backend.embedder, nb);
  const auto& mild = find(r, "mild");
  EXPECT_TRUE(mild.skipped);
  EXPECT_EQ(mild.skip_reason, "no perturbation available");
  EXPECT_EQ(mild.omega, 0.0);
  EXPECT_EQ(mild.p_value, 1.0);
  EXPECT_EQ(r.skipped_tokens(), 1u);
  EXPECT_FALSE(find(r, "congestive").skipped);
}

TEST(Pipeline, FailedUnitsAreRecorded) {
  struct Broken : Generator {
    MockGenerator inner{{}, {{"heart failure", 1.0}}};
    std::string generate(const GenerationRequest& r) override {
      if (r.prompt.find("acute") != std::string_view::npos) throw ConfigError("refused");
      return inner.generate(r);
    }
  } g;
  auto backend = planted_backend();
  auto nb = inline_neighbors({{"mild", {"slight"}}, {"congestive", {"acute"}}});
  const auto r = run("mild congestive", small_config(4), g, backend.embedder, nb);
  EXPECT_EQ(r.failed_units(), 1u);
  const auto& c = find(r, "congestive");
  EXPECT_TRUE(c.skipped);
  EXPECT_TRUE(c.per_unit[0].failed);
  EXPECT_NE(c.per_unit[0].error.find("refused"), std::string::npos);
  EXPECT_FALSE(find(r, "mild").skipped);
}

TEST(Pipeline, DeterministicAcrossConcurrency) {
  auto backend = planted_backend();
  auto nb = synthetic_neighbors({"mild", "congestive", "edema"});
  auto cfg1 = small_config(6, 1);
  cfg1.k = 2;
  auto cfg8 = cfg1;
  cfg8.generation.max_concurrent_requests = 8;
  const auto a = run("mild congestive edema", cfg1, backend.generator, backend.embedder, nb);
  const auto b = run("mild congestive edema", cfg8, backend.generator, backend.embedder, nb);
  EXPECT_EQ(a, b);
  auto cfg_other = cfg1;
  cfg_other.run_seed = 12;
  EXPECT_NE(a, run("mild congestive edema", cfg_other, backend.generator, backend.embedder, nb));
}

TEST(PipelineProperty, OmegaWithinUnitRange) {
  const std::vector<std::pair<std::string, double>> q{{"a", 0.1}, {"b", 0.5}, {"c", 0.9}};
  auto backend = graded_backend(q);
  auto nb = synthetic_neighbors({"a", "b", "c"});
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto cfg = small_config(8);
    cfg.k = 3;
    cfg.run_seed = seed;
    const auto r = run("a b c", cfg, backend.generator, backend.embedder, nb);
    for (const auto& t : r.tokens) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& u : t.per_unit) {
        lo = std::min(lo, u.test.effect_size);
        hi = std::max(hi, u.test.effect_size);
      }
      EXPECT_GE(t.omega, lo - 1e-12);
      EXPECT_LE(t.omega, hi + 1e-12);
    }
  }
}

TEST(PipelineProperty, ScalingEmbeddingsScalesEffectsOnly) {
  const std::vector<std::pair<std::string, double>> q{{"a", 0.2}, {"b", 0.8}};
  auto backend = graded_backend(q);
  ScaledEmbedder scaled(backend.embedder, 3.0);
  auto nb = synthetic_neighbors({"a", "b"});
  auto cfg = small_config(8);
  cfg.metric = DistanceMetric::l2;
  const auto base = run("a b", cfg, backend.generator, backend.embedder, nb);
  const auto big = run("a b", cfg, backend.generator, scaled, nb);
  for (std::size_t i = 0; i < base.tokens.size(); ++i) {
    EXPECT_NEAR(big.tokens[i].omega, 3.0 * base.tokens[i].omega, 1e-9);
    EXPECT_EQ(big.tokens[i].p_value, base.tokens[i].p_value);
  }
  EXPECT_EQ(big.normalized_intensity, base.normalized_intensity);
}

TEST(Pipeline, FisherAndResamplingOptions) {
  auto backend = planted_backend();
  auto nb = synthetic_neighbors({"mild", "congestive"});
  auto cfg = small_config(6);
  cfg.k = 3;
  cfg.fisher_combination = true;
  cfg.resample_baseline_per_unit = true;
  CountingGenerator counting(backend.generator);
  const auto r = run("mild congestive", cfg, counting, backend.embedder, nb);
  EXPECT_EQ(r.baseline_sample_digest, "resampled-per-unit");
  EXPECT_EQ(counting.calls_for("mild congestive"), 6u * 6u);
  std::vector<double> ps;
  for (const auto& u : r.tokens[0].per_unit) ps.push_back(u.test.p_value);
  EXPECT_DOUBLE_EQ(r.tokens[0].p_value, fisher_combine(ps));
  EXPECT_EQ(r.run_config.at("p_value_aggregate"), "fisher");
}

TEST(Plan, CountsMatchExecution) {
  auto backend = planted_backend();
  auto nb = inline_neighbors({{"mild", {"slight", "faint"}}, {"edema", {"swelling"}}});
  auto cfg = small_config(5);
  cfg.k = 2;
  cfg.perturbed_sample_count = 3;
  const std::string prompt = "mild edema and mild pain";
  const auto plan = plan_dbsa(prompt, cfg, nb);
  EXPECT_EQ(plan.tokens, 5u);
  EXPECT_EQ(plan.unique_tokens, 4u);
  EXPECT_EQ(plan.tokens_without_neighbors, 2u);
  EXPECT_EQ(plan.units, 5u);
  EXPECT_EQ(plan.baseline_sampling_calls, 1u);
  EXPECT_EQ(plan.perturbed_sampling_calls, 5u);
  EXPECT_EQ(plan.generation_requests, 5u + 15u);
  CountingGenerator counting(backend.generator);
  run(prompt, cfg, counting, backend.embedder, nb);
  EXPECT_EQ(counting.total_calls(), plan.generation_requests);
}
