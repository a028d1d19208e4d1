#include "dbsa/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <fmt/format.h>

#include "dbsa/error.hpp"
#include "dbsa/random.hpp"

namespace dbsa {

using nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_model(const ModelBackend& m) {
  if (m.generator == nullptr || m.embedder == nullptr) {
    throw ArgumentError("model '" + m.label + "' has no generator or embedder");
  }
}

SensitivityReport run_model(std::string_view prompt, const ModelBackend& model, RunConfig config,
                            const AblationContext& ctx, SampleCache* cache) {
  require_model(model);
  config.generation = model.generation;
  Backends backends{*model.generator, *model.embedder, ctx.neighbors, cache, nullptr, {}, ctx.log};
  return run_dbsa(prompt, config, backends);
}

double agreement_or_nan(const SensitivityReport& a, const SensitivityReport& b,
                        std::vector<std::string>& warnings, std::string_view what) {
  try {
    return omega_agreement(a, b);
  } catch (const UndefinedCorrelationError& e) {
    warnings.push_back(fmt::format("{}: {}", what, e.what()));
    return kNaN;
  }
}

double mean_off_diagonal(const std::vector<std::vector<double>>& m) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      if (std::isnan(m[i][j])) continue;
      sum += m[i][j];
      ++count;
    }
  }
  return count == 0 ? kNaN : sum / static_cast<double>(count);
}

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(); }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

std::string_view to_string(AblationKind kind) noexcept {
  switch (kind) {
    case AblationKind::cross_model: return "cross_model";
    case AblationKind::metric_agreement: return "metric_agreement";
    case AblationKind::mc_sweep: return "mc_sweep";
  }
  return "cross_model";
}

double omega_agreement(const SensitivityReport& a, const SensitivityReport& b) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& ta : a.tokens) {
    if (ta.skipped) continue;
    for (const auto& tb : b.tokens) {
      if (tb.token == ta.token && !tb.skipped) {
        xs.push_back(ta.omega);
        ys.push_back(tb.omega);
        break;
      }
    }
  }
  if (xs.size() < 2) throw UndefinedCorrelationError("fewer than two aligned tokens");
  return spearman_rank(xs, ys);
}

AblationResult cross_model_matrix(std::string_view prompt, const std::vector<ModelBackend>& models,
                                  const RunConfig& shared, const AblationContext& context) {
  if (models.size() < 2) throw ArgumentError("cross_model_matrix needs at least two models");
  AblationResult result;
  result.kind = AblationKind::cross_model;

  std::vector<SensitivityReport> reports;
  for (const auto& model : models) {
    try {
      SensitivityReport r = run_model(prompt, model, shared, context, context.cache);
      if (!r.tokens.empty() && r.skipped_tokens() == r.tokens.size()) {
        throw SamplingError("every token was skipped", 0);
      }
      result.row_labels.push_back(model.label);
      result.run_configs.push_back(r.run_config);
      reports.push_back(std::move(r));
    } catch (const Error& e) {
      result.warnings.push_back(fmt::format("model '{}' dropped: {}", model.label, e.what()));
      if (context.log) context.log(result.warnings.back());
    }
  }
  result.column_labels = result.row_labels;

  const std::size_t k = reports.size();
  result.values.assign(k, std::vector<double>(k, 1.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double rho = agreement_or_nan(
          reports[i], reports[j], result.warnings,
          fmt::format("{} vs {}", result.row_labels[i], result.row_labels[j]));
      result.values[i][j] = result.values[j][i] = rho;
    }
  }
  result.summary["mean_off_diagonal"] = number_or_null(mean_off_diagonal(result.values));
  result.summary["models"] = k;
  return result;
}

AblationResult metric_agreement(std::string_view prompt, const ModelBackend& model,
                                const RunConfig& shared, const std::vector<DistanceMetric>& metrics,
                                const AblationContext& context) {
  if (metrics.size() < 2) throw ArgumentError("metric_agreement needs at least two metrics");
  AblationResult result;
  result.kind = AblationKind::metric_agreement;

  SampleCache memory_cache;
  SampleCache* cache = context.cache != nullptr ? context.cache : &memory_cache;

  std::vector<SensitivityReport> reports;
  for (DistanceMetric metric : metrics) {
    RunConfig config = shared;
    config.metric = metric;
    reports.push_back(run_model(prompt, model, config, context, cache));
    result.row_labels.emplace_back(to_string(metric));
    result.run_configs.push_back(reports.back().run_config);
  }
  result.column_labels = result.row_labels;

  const std::size_t k = reports.size();
  result.values.assign(k, std::vector<double>(k, 1.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double rho = agreement_or_nan(
          reports[i], reports[j], result.warnings,
          fmt::format("{} vs {}", result.row_labels[i], result.row_labels[j]));
      result.values[i][j] = result.values[j][i] = rho;
    }
  }
  result.summary["mean_agreement"] = number_or_null(mean_off_diagonal(result.values));
  result.summary["model"] = model.label;
  return result;
}

AblationResult mc_sweep(std::string_view prompt, const ModelBackend& first,
                        const ModelBackend& second, const std::vector<std::size_t>& sample_sizes,
                        std::size_t repeats, const RunConfig& shared,
                        const AblationContext& context) {
  if (sample_sizes.empty()) throw ArgumentError("mc_sweep needs at least one sample size");
  if (!std::is_sorted(sample_sizes.begin(), sample_sizes.end())) {
    throw ArgumentError("mc_sweep sample sizes must be ascending");
  }
  if (repeats < 2) throw ArgumentError("mc_sweep needs repeats >= 2");

  AblationResult result;
  result.kind = AblationKind::mc_sweep;
  result.column_labels = {"mean", "sd"};
  for (std::size_t r = 0; r < repeats; ++r) result.column_labels.push_back(fmt::format("r{}", r));

  ordered_json series = ordered_json::array();
  for (std::size_t n : sample_sizes) {
    std::vector<double> rhos;
    for (std::size_t r = 0; r < repeats; ++r) {
      const std::uint64_t repeat_seed =
          derive_seed(derive_seed(shared.run_seed, fmt::format("mc-sweep/n={}", n)), r);
      std::vector<SensitivityReport> pair;
      for (std::size_t which = 0; which < 2; ++which) {
        const ModelBackend& model = which == 0 ? first : second;
        ModelBackend sized = model;
        sized.generation.sample_count_n = n;
        RunConfig config = shared;
        config.perturbed_sample_count.reset();
        config.run_seed = derive_seed(repeat_seed, which);
        pair.push_back(run_model(prompt, sized, config, context, context.cache));
        if (r == 0 && n == sample_sizes.front()) result.run_configs.push_back(pair.back().run_config);
      }
      rhos.push_back(agreement_or_nan(pair[0], pair[1], result.warnings,
                                      fmt::format("n={} repeat={}", n, r)));
    }

    double sum = 0.0;
    std::size_t defined = 0;
    for (double v : rhos) {
      if (std::isnan(v)) continue;
      sum += v;
      ++defined;
    }
    const double mu = defined == 0 ? kNaN : sum / static_cast<double>(defined);
    double ss = 0.0;
    for (double v : rhos) {
      if (!std::isnan(v)) ss += (v - mu) * (v - mu);
    }
    const double sd = defined < 2 ? kNaN : std::sqrt(ss / static_cast<double>(defined - 1));

    std::vector<double> row{mu, sd};
    row.insert(row.end(), rhos.begin(), rhos.end());
    result.row_labels.push_back(std::to_string(n));
    result.values.push_back(std::move(row));

    ordered_json per_repeat = ordered_json::array();
    for (double v : rhos) per_repeat.push_back(number_or_null(v));
    series.push_back({{"n", n},
                      {"mean", number_or_null(mu)},
                      {"sd", number_or_null(sd)},
                      {"defined_repeats", defined},
                      {"spearman", std::move(per_repeat)}});
    if (context.log) {
      context.log(fmt::format("mc_sweep n={} mean={} sd={}", n, mu, sd));
    }
  }
  result.summary["models"] = {first.label, second.label};
  result.summary["repeats"] = repeats;
  result.summary["series"] = std::move(series);
  return result;
}

std::string ablation_to_csv(const AblationResult& result) {
  std::string out = result.kind == AblationKind::mc_sweep ? "n" : "";
  for (const auto& c : result.column_labels) out += "," + csv_field(c);
  out += "\n";
  for (std::size_t i = 0; i < result.values.size(); ++i) {
    out += csv_field(result.row_labels[i]);
    for (double v : result.values[i]) {
      out += ",";
      out += std::isnan(v) ? std::string("nan") : fmt::format("{:.6f}", v);
    }
    out += "\n";
  }
  return out;
}

ordered_json ablation_to_json(const AblationResult& result) {
  ordered_json values = ordered_json::array();
  for (const auto& row : result.values) {
    ordered_json r = ordered_json::array();
    for (double v : row) r.push_back(number_or_null(v));
    values.push_back(std::move(r));
  }
  return ordered_json{{"kind", to_string(result.kind)},
                      {"row_labels", result.row_labels},
                      {"column_labels", result.column_labels},
                      {"values", std::move(values)},
                      {"run_configs", result.run_configs},
                      {"warnings", result.warnings},
                      {"summary", result.summary}};
}

}  // namespace dbsa
