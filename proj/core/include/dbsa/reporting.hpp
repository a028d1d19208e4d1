#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dbsa/pipeline.hpp"

namespace dbsa {

enum class ReportFormat { ansi, html, json };

std::string_view to_string(ReportFormat f) noexcept;
/// ArgumentError on unknown names.
ReportFormat parse_format(std::string_view name);

struct RenderOptions {
  ReportFormat format = ReportFormat::ansi;
  std::optional<std::size_t> top_k;
  double alpha = 0.05;
  bool show_p_values = false;
  int decimals = 2;
  /// Tokens rendered without highlight.
  std::set<std::string> suppressed;

  void validate() const;
};

std::string render(const SensitivityReport& report, const RenderOptions& options);

std::string render_ansi(const SensitivityReport& report, const RenderOptions& options);
std::string render_html(const SensitivityReport& report, const RenderOptions& options);

/// 256-color palette index for an intensity in 0..100; nullopt for no highlight.
std::optional<int> ansi_ramp_color(int intensity);

std::string render_top_k_markdown(const SensitivityReport& report, std::size_t k, double alpha,
                                  int decimals = 2);

nlohmann::ordered_json report_to_json(const SensitivityReport& report);
/// Inverse of report_to_json. ConfigError on schema mismatches.
SensitivityReport report_from_json(const nlohmann::ordered_json& doc);

}  // namespace dbsa
