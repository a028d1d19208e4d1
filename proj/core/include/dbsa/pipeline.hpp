#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dbsa/cache.hpp"
#include "dbsa/clients.hpp"
#include "dbsa/neighbors.hpp"
#include "dbsa/statistics.hpp"
#include "dbsa/tokenization.hpp"

namespace dbsa {

/// Parameters of one sensitivity run.
struct RunConfig {
  GenerationConfig generation;
  /// Perturbed sample size m; defaults to n.
  std::optional<std::size_t> perturbed_sample_count;
  std::size_t k = 3;
  EffectMode mode = EffectMode::embedding_energy;
  DistanceMetric metric = DistanceMetric::cosine_distance;
  /// Defaults to default_permutations(mode).
  std::optional<std::size_t> permutations;
  std::uint64_t run_seed = 0;
  /// Draw a fresh baseline sample for every unit instead of once per run.
  bool resample_baseline_per_unit = false;
  /// Combine unit p-values with Fisher's method instead of averaging them.
  bool fisher_combination = false;
  /// Divide each unit's effect by its neighbor distance when one is known.
  bool normalize_by_distance = false;
  bool add_one_smoothing = false;

  std::size_t n() const noexcept { return generation.sample_count_n; }
  std::size_t m() const noexcept { return perturbed_sample_count.value_or(n()); }
  std::size_t effective_permutations() const noexcept {
    return permutations.value_or(default_permutations(mode));
  }

  /// ConfigError on invalid values or combinations.
  void validate() const;
};

/// One (position, neighbor) substitution.
struct PerturbationRecord {
  std::string token;
  std::size_t position = 0;
  std::string neighbor;
  std::string perturbed_prompt;
  std::optional<double> neighbor_distance;
  std::string unit_id;

  friend bool operator==(const PerturbationRecord&, const PerturbationRecord&) = default;
};

struct UnitResult {
  PerturbationRecord record;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  /// Valid when !failed. effect_size is divided by the neighbor distance when
  /// distance normalization is on.
  TestResult test;

  friend bool operator==(const UnitResult&, const UnitResult&) = default;
};

struct OccurrenceSensitivity {
  std::size_t position = 0;
  double mean_effect = 0.0;
  double mean_p_value = 1.0;
  std::size_t units = 0;

  friend bool operator==(const OccurrenceSensitivity&, const OccurrenceSensitivity&) = default;
};

struct TokenSensitivity {
  std::string token;
  std::vector<std::size_t> positions;
  /// Mean over occurrences of the per-occurrence mean effect.
  double omega = 0.0;
  /// Mean unit p-value (or Fisher-combined p-value when enabled).
  double p_value = 1.0;
  std::vector<OccurrenceSensitivity> per_occurrence;
  std::vector<UnitResult> per_unit;
  bool skipped = false;
  std::string skip_reason;

  friend bool operator==(const TokenSensitivity&, const TokenSensitivity&) = default;
};

inline constexpr int kReportSchemaVersion = 1;

struct SensitivityReport {
  std::string prompt;
  /// Unique tokens in first-occurrence order.
  std::vector<TokenSensitivity> tokens;
  std::string baseline_sample_digest;
  nlohmann::ordered_json run_config;
  std::map<std::string, int> normalized_intensity;

  std::size_t skipped_tokens() const;
  std::size_t failed_units() const;

  friend bool operator==(const SensitivityReport&, const SensitivityReport&) = default;
};

/// Clients a run talks to. The embedder is wrapped in a per-run CachingEmbedder.
struct Backends {
  Generator& generator;
  Embedder& embedder;
  NeighborProvider& neighbors;
  SampleCache* cache = nullptr;
  /// Shared request limit; created from max_concurrent_requests when null.
  std::shared_ptr<RequestLimiter> limiter;
  /// Free-form descriptions recorded in run_config.
  std::string provider_description;
  /// Receives one line per notable event (skips, unit failures).
  std::function<void(std::string_view)> log;
};

/// Unit identifier: hash of (prompt digest, position, neighbor).
std::string make_unit_id(std::string_view prompt, std::size_t position, std::string_view neighbor);

/// Token-level distribution-based sensitivity analysis.
///
/// For every unique token, every occurrence and every neighbor, samples the
/// perturbed prompt, embeds both sample sets, runs the configured test, then
/// averages effects and p-values per occurrence and per token.
SensitivityReport run_dbsa(std::string_view prompt, const RunConfig& config,
                           const Backends& backends);

/// Work a run would do, computed without any sampling.
struct WorkPlan {
  std::size_t tokens = 0;
  std::size_t unique_tokens = 0;
  std::size_t tokens_without_neighbors = 0;
  std::size_t units = 0;
  std::size_t baseline_sampling_calls = 0;
  std::size_t perturbed_sampling_calls = 0;
  std::size_t generation_requests = 0;
};

WorkPlan plan_dbsa(std::string_view prompt, const RunConfig& config, NeighborProvider& neighbors);

struct TopKEntry {
  std::string token;
  double omega = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

/// Tokens by omega descending (ties in prompt order); significant = p < alpha.
std::vector<TopKEntry> top_k_table(const SensitivityReport& report, std::size_t k, double alpha,
                                   bool include_skipped = true);

/// Min-max scaling to 0..100, rounded half up; a constant map scales to 0.
std::map<std::string, int> normalize_intensities(const std::map<std::string, double>& omegas);

}  // namespace dbsa
