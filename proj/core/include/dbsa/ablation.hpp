#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dbsa/pipeline.hpp"

namespace dbsa {

enum class AblationKind { cross_model, metric_agreement, mc_sweep };

std::string_view to_string(AblationKind kind) noexcept;

/// One model under comparison. Pointers must outlive the ablation call.
struct ModelBackend {
  std::string label;
  Generator* generator = nullptr;
  Embedder* embedder = nullptr;
  GenerationConfig generation;
};

struct AblationContext {
  NeighborProvider& neighbors;
  SampleCache* cache = nullptr;
  std::function<void(std::string_view)> log;
};

/// Matrix results are row_labels x column_labels. mc_sweep rows are sample
/// sizes with columns mean, sd and one column per repeat. Undefined entries are NaN.
struct AblationResult {
  AblationKind kind = AblationKind::cross_model;
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  std::vector<std::vector<double>> values;
  std::vector<nlohmann::ordered_json> run_configs;
  std::vector<std::string> warnings;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
};

/// Spearman correlation of omegas over tokens present and unskipped in both
/// reports. UndefinedCorrelationError when fewer than two tokens align or
/// either side is constant.
double omega_agreement(const SensitivityReport& a, const SensitivityReport& b);

AblationResult cross_model_matrix(std::string_view prompt, const std::vector<ModelBackend>& models,
                                  const RunConfig& shared, const AblationContext& context);

AblationResult metric_agreement(std::string_view prompt, const ModelBackend& model,
                                const RunConfig& shared, const std::vector<DistanceMetric>& metrics,
                                const AblationContext& context);

AblationResult mc_sweep(std::string_view prompt, const ModelBackend& first,
                        const ModelBackend& second, const std::vector<std::size_t>& sample_sizes,
                        std::size_t repeats, const RunConfig& shared,
                        const AblationContext& context);

std::string ablation_to_csv(const AblationResult& result);
nlohmann::ordered_json ablation_to_json(const AblationResult& result);

}  // namespace dbsa
