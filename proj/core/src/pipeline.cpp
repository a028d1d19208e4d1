#include "dbsa/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "dbsa/digest.hpp"
#include "dbsa/error.hpp"
#include "dbsa/random.hpp"

namespace dbsa {

using nlohmann::ordered_json;

namespace {

struct TokenPlan {
  std::size_t unique_slot = 0;
  std::optional<NeighborSet> neighbors;
  std::string skip_reason;
};

std::string digest_responses(const std::vector<std::string>& responses) {
  std::string joined;
  for (const auto& r : responses) {
    joined += r;
    joined.push_back('\0');
  }
  return sha256_hex(joined);
}

ordered_json describe_run(const RunConfig& c, const Backends& b, const std::string& embedder_id) {
  return ordered_json{
      {"n", c.n()},
      {"m", c.m()},
      {"k", c.k},
      {"mode", to_string(c.mode)},
      {"metric", to_string(c.metric)},
      {"permutations", c.effective_permutations()},
      {"run_seed", c.run_seed},
      {"provider", b.provider_description.empty() ? b.neighbors.describe()
                                                  : b.provider_description},
      {"model", c.generation.model_name},
      {"temperature", c.generation.temperature},
      {"max_output_tokens", c.generation.max_output_tokens},
      {"embedding_model", embedder_id},
      {"resample_baseline_per_unit", c.resample_baseline_per_unit},
      {"p_value_aggregate", c.fisher_combination ? "fisher" : "mean unit p-value"},
      {"normalize_by_distance", c.normalize_by_distance},
      {"add_one_smoothing", c.add_one_smoothing},
  };
}

// Neighbor acquisition per unique token; failures become skip reasons.
std::vector<TokenPlan> acquire_neighbors(const TokenizedPrompt& tokenized, std::string_view prompt,
                                         std::size_t k, NeighborProvider& provider,
                                         const std::function<void(std::string_view)>& log) {
  std::vector<TokenPlan> plans;
  plans.reserve(tokenized.unique_index.size());
  for (std::size_t u = 0; u < tokenized.unique_index.size(); ++u) {
    TokenPlan plan;
    plan.unique_slot = u;
    const auto& token = tokenized.unique_index[u].text;
    try {
      NeighborSet set = provider.neighbors(token, prompt, k);
      if (set.empty()) {
        plan.skip_reason = "no perturbation available";
      } else {
        plan.neighbors = std::move(set);
      }
    } catch (const Error& e) {
      plan.skip_reason = std::string("neighbor acquisition failed: ") + e.what();
    }
    if (!plan.skip_reason.empty() && log) {
      log(fmt::format("token skipped token=\"{}\" reason=\"{}\"", token, plan.skip_reason));
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

void RunConfig::validate() const {
  generation.validate();
  if (k < 1) throw ConfigError("k must be >= 1");
  if (m() < 1) throw ConfigError("perturbed sample count m must be >= 1");
  if (effective_permutations() < 1) throw ConfigError("permutations must be >= 1");
  if (normalize_by_distance && is_sim1d(mode)) {
    throw ConfigError("distance normalization is only defined for embedding_energy mode, not " +
                      std::string(to_string(mode)));
  }
}

std::size_t SensitivityReport::skipped_tokens() const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](const auto& t) { return t.skipped; }));
}

std::size_t SensitivityReport::failed_units() const {
  std::size_t failed = 0;
  for (const auto& t : tokens) {
    for (const auto& u : t.per_unit) failed += u.failed ? 1 : 0;
  }
  return failed;
}

std::string make_unit_id(std::string_view prompt, std::size_t position, std::string_view neighbor) {
  const std::string prompt_digest = sha256_hex(prompt);
  return sha256_hex(fmt::format("{}\n{}\n{}", prompt_digest, position, neighbor)).substr(0, 16);
}

SensitivityReport run_dbsa(std::string_view prompt, const RunConfig& config,
                           const Backends& backends) {
  config.validate();
  const TokenizedPrompt tokenized = tokenize(prompt);

  auto limiter = backends.limiter ? backends.limiter
                                  : std::make_shared<RequestLimiter>(
                                        config.generation.max_concurrent_requests);
  const Sampler sampler(backends.generator, config.generation, limiter, backends.cache);
  CachingEmbedder embedder(backends.embedder, backends.cache);

  SensitivityReport report;
  report.prompt = std::string(prompt);
  report.run_config = describe_run(config, backends, backends.embedder.model_id());

  std::optional<Matrix> baseline_embeddings;
  if (config.resample_baseline_per_unit) {
    report.baseline_sample_digest = "resampled-per-unit";
  } else if (!tokenized.empty()) {
    const SampleSet baseline =
        sampler.sample(prompt, derive_seed(config.run_seed, "baseline"), config.n());
    baseline_embeddings = embed(baseline.responses, embedder);
    report.baseline_sample_digest = digest_responses(baseline.responses);
  }

  const auto plans =
      acquire_neighbors(tokenized, prompt, config.k, backends.neighbors, backends.log);

  // Units in (unique token, position, neighbor) order.
  std::vector<UnitResult> units;
  std::vector<std::size_t> unit_owner;
  for (const auto& plan : plans) {
    if (!plan.neighbors) continue;
    const auto& unique = tokenized.unique_index[plan.unique_slot];
    for (std::size_t pos : unique.positions) {
      for (const auto& nb : plan.neighbors->neighbors) {
        UnitResult u;
        u.record.token = unique.text;
        u.record.position = pos;
        u.record.neighbor = nb.token;
        u.record.perturbed_prompt = tokenized.replace_token(pos, nb.token);
        u.record.neighbor_distance = nb.distance;
        u.record.unit_id = make_unit_id(prompt, pos, nb.token);
        u.seed = derive_seed(config.run_seed, u.record.unit_id);
        units.push_back(std::move(u));
        unit_owner.push_back(plan.unique_slot);
      }
    }
  }

  PermutationOptions perm;
  perm.permutations = config.effective_permutations();
  perm.add_one_smoothing = config.add_one_smoothing;

  const auto run_unit = [&](UnitResult& unit) {
    try {
      Matrix baseline_local;
      const Matrix* base = nullptr;
      if (config.resample_baseline_per_unit) {
        const SampleSet b = sampler.sample(prompt, derive_seed(unit.seed, "baseline"), config.n());
        baseline_local = embed(b.responses, embedder);
        base = &baseline_local;
      } else {
        base = &*baseline_embeddings;
      }
      const SampleSet perturbed = sampler.sample(unit.record.perturbed_prompt,
                                                 derive_seed(unit.seed, "perturbed"), config.m());
      const Matrix pert = embed(perturbed.responses, embedder);

      PermutationOptions opts = perm;
      opts.seed = derive_seed(unit.seed, "permutation");
      if (config.mode == EffectMode::embedding_energy) {
        unit.test = permutation_test_energy(*base, pert, config.metric, opts);
      } else {
        const auto sims = build_similarity_distributions(*base, pert, config.metric);
        unit.test = sim1d_test(sims.p0, sims.p1, config.mode, opts);
        unit.test.metric = config.metric;
      }
      if (config.normalize_by_distance && unit.record.neighbor_distance &&
          *unit.record.neighbor_distance > 0.0) {
        unit.test.effect_size /= *unit.record.neighbor_distance;
      }
    } catch (const Error& e) {
      unit.failed = true;
      unit.error = e.what();
      if (backends.log) {
        backends.log(fmt::format("unit failed unit_id={} token=\"{}\" position={} error=\"{}\"",
                                 unit.record.unit_id, unit.record.token, unit.record.position,
                                 e.what()));
      }
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(config.generation.max_concurrent_requests, units.size());
  if (workers <= 1) {
    for (auto& u : units) run_unit(u);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < units.size(); i = next.fetch_add(1)) {
          run_unit(units[i]);
        }
      });
    }
  }

  // Deterministic reduction in prompt order.
  std::map<std::string, double> omegas;
  for (const auto& plan : plans) {
    const auto& unique = tokenized.unique_index[plan.unique_slot];
    TokenSensitivity ts;
    ts.token = unique.text;
    ts.positions = unique.positions;
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (unit_owner[i] == plan.unique_slot) ts.per_unit.push_back(units[i]);
    }

    std::vector<double> occurrence_effects;
    std::vector<double> occurrence_p;
    std::vector<double> all_p;
    for (std::size_t pos : unique.positions) {
      std::vector<double> effects;
      std::vector<double> ps;
      for (const auto& u : ts.per_unit) {
        if (u.record.position != pos || u.failed) continue;
        effects.push_back(u.test.effect_size);
        ps.push_back(u.test.p_value);
      }
      if (effects.empty()) continue;
      OccurrenceSensitivity occ{pos, mean(effects), mean(ps), effects.size()};
      occurrence_effects.push_back(occ.mean_effect);
      occurrence_p.push_back(occ.mean_p_value);
      all_p.insert(all_p.end(), ps.begin(), ps.end());
      ts.per_occurrence.push_back(occ);
    }

    if (!plan.neighbors) {
      ts.skipped = true;
      ts.skip_reason = plan.skip_reason;
    } else if (ts.per_occurrence.empty()) {
      ts.skipped = true;
      ts.skip_reason = "all perturbation units failed";
      if (backends.log) {
        backends.log(fmt::format("token skipped token=\"{}\" reason=\"{}\"", ts.token,
                                 ts.skip_reason));
      }
    }
    if (ts.skipped) {
      ts.omega = 0.0;
      ts.p_value = 1.0;
    } else {
      ts.omega = mean(occurrence_effects);
      ts.p_value = config.fisher_combination ? fisher_combine(all_p) : mean(occurrence_p);
    }
    omegas[ts.token] = ts.omega;
    report.tokens.push_back(std::move(ts));
  }

  if (!omegas.empty()) report.normalized_intensity = normalize_intensities(omegas);
  return report;
}

WorkPlan plan_dbsa(std::string_view prompt, const RunConfig& config, NeighborProvider& neighbors) {
  config.validate();
  const TokenizedPrompt tokenized = tokenize(prompt);
  const auto plans = acquire_neighbors(tokenized, prompt, config.k, neighbors, {});
  WorkPlan plan;
  plan.tokens = tokenized.size();
  plan.unique_tokens = tokenized.unique_index.size();
  for (const auto& p : plans) {
    if (!p.neighbors) {
      ++plan.tokens_without_neighbors;
      continue;
    }
    plan.units += tokenized.unique_index[p.unique_slot].positions.size() * p.neighbors->size();
  }
  plan.baseline_sampling_calls =
      config.resample_baseline_per_unit ? plan.units : (tokenized.empty() ? 0 : 1);
  plan.perturbed_sampling_calls = plan.units;
  plan.generation_requests =
      plan.baseline_sampling_calls * config.n() + plan.perturbed_sampling_calls * config.m();
  return plan;
}

std::vector<TopKEntry> top_k_table(const SensitivityReport& report, std::size_t k, double alpha,
                                   bool include_skipped) {
  std::vector<TopKEntry> rows;
  for (const auto& t : report.tokens) {
    if (t.skipped && !include_skipped) continue;
    rows.push_back({t.token, t.omega, t.p_value, t.p_value < alpha});
  }
  // report.tokens is already in first-occurrence order.
  std::stable_sort(rows.begin(), rows.end(),
                   [](const TopKEntry& a, const TopKEntry& b) { return a.omega > b.omega; });
  if (rows.size() > k) rows.resize(k);
  return rows;
}

std::map<std::string, int> normalize_intensities(const std::map<std::string, double>& omegas) {
  std::map<std::string, int> out;
  if (omegas.empty()) return out;
  double lo = omegas.begin()->second;
  double hi = lo;
  for (const auto& [t, w] : omegas) {
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  const double range = hi - lo;
  for (const auto& [t, w] : omegas) {
    if (!(range > 0.0)) {
      out[t] = 0;
      continue;
    }
    const double scaled = (w - lo) / range * 100.0;
    out[t] = std::clamp(static_cast<int>(std::floor(scaled + 0.5)), 0, 100);
  }
  return out;
}

}  // namespace dbsa
