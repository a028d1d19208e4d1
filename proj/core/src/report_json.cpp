#include <fmt/format.h>

#include "dbsa/error.hpp"
#include "dbsa/reporting.hpp"

namespace dbsa {

using nlohmann::ordered_json;

namespace {

ordered_json unit_to_json(const UnitResult& u) {
  ordered_json j{
      {"position", u.record.position},
      {"neighbor", u.record.neighbor},
      {"effect_size", u.test.effect_size},
      {"p_value", u.test.p_value},
      {"seed", u.seed},
      {"unit_id", u.record.unit_id},
      {"perturbed_prompt", u.record.perturbed_prompt},
      {"neighbor_distance", nullptr},
      {"failed", u.failed},
      {"error", u.error},
      {"mode", to_string(u.test.mode)},
      {"metric", to_string(u.test.metric)},
      {"permutations", u.test.permutations},
      {"permutation_seed", u.test.seed},
  };
  if (u.record.neighbor_distance) j["neighbor_distance"] = *u.record.neighbor_distance;
  return j;
}

template <typename T>
T field(const ordered_json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(fmt::format("report JSON: missing field \"{}\"", key));
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("report JSON: bad field \"{}\": {}", key, e.what()));
  }
}

UnitResult unit_from_json(const ordered_json& j, const std::string& token) {
  UnitResult u;
  u.record.token = token;
  u.record.position = field<std::size_t>(j, "position");
  u.record.neighbor = field<std::string>(j, "neighbor");
  u.record.perturbed_prompt = field<std::string>(j, "perturbed_prompt");
  u.record.unit_id = field<std::string>(j, "unit_id");
  if (!j.at("neighbor_distance").is_null()) {
    u.record.neighbor_distance = field<double>(j, "neighbor_distance");
  }
  u.seed = field<std::uint64_t>(j, "seed");
  u.failed = field<bool>(j, "failed");
  u.error = field<std::string>(j, "error");
  u.test.effect_size = field<double>(j, "effect_size");
  u.test.p_value = field<double>(j, "p_value");
  try {
    u.test.mode = parse_mode(field<std::string>(j, "mode"));
    u.test.metric = parse_metric(field<std::string>(j, "metric"));
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("report JSON: ") + e.what());
  }
  u.test.permutations = field<std::size_t>(j, "permutations");
  u.test.seed = field<std::uint64_t>(j, "permutation_seed");
  return u;
}

}  // namespace

ordered_json report_to_json(const SensitivityReport& report) {
  ordered_json tokens = ordered_json::array();
  for (const auto& t : report.tokens) {
    ordered_json occ = ordered_json::array();
    for (const auto& o : t.per_occurrence) {
      occ.push_back({{"position", o.position},
                     {"mean_effect", o.mean_effect},
                     {"mean_p_value", o.mean_p_value},
                     {"units", o.units}});
    }
    ordered_json units = ordered_json::array();
    for (const auto& u : t.per_unit) units.push_back(unit_to_json(u));
    auto it = report.normalized_intensity.find(t.token);
    ordered_json intensity = nullptr;
    if (it != report.normalized_intensity.end()) intensity = it->second;
    tokens.push_back({{"token", t.token},
                      {"positions", t.positions},
                      {"omega", t.omega},
                      {"p_value", t.p_value},
                      {"intensity", intensity},
                      {"skipped", t.skipped},
                      {"skip_reason", t.skip_reason},
                      {"per_occurrence", std::move(occ)},
                      {"units", std::move(units)}});
  }
  return ordered_json{{"version", kReportSchemaVersion},
                      {"prompt", report.prompt},
                      {"run_config", report.run_config},
                      {"baseline_sample_digest", report.baseline_sample_digest},
                      {"tokens", std::move(tokens)}};
}

SensitivityReport report_from_json(const ordered_json& doc) {
  if (!doc.is_object()) throw ConfigError("report JSON: top level must be an object");
  const int version = field<int>(doc, "version");
  if (version != kReportSchemaVersion) {
    throw ConfigError(fmt::format("report JSON: unsupported version {}", version));
  }
  SensitivityReport report;
  report.prompt = field<std::string>(doc, "prompt");
  report.run_config = doc.at("run_config");
  report.baseline_sample_digest = field<std::string>(doc, "baseline_sample_digest");
  for (const auto& tj : field<ordered_json>(doc, "tokens")) {
    TokenSensitivity t;
    t.token = field<std::string>(tj, "token");
    t.positions = field<std::vector<std::size_t>>(tj, "positions");
    t.omega = field<double>(tj, "omega");
    t.p_value = field<double>(tj, "p_value");
    t.skipped = field<bool>(tj, "skipped");
    t.skip_reason = field<std::string>(tj, "skip_reason");
    for (const auto& oj : field<ordered_json>(tj, "per_occurrence")) {
      t.per_occurrence.push_back({field<std::size_t>(oj, "position"),
                                  field<double>(oj, "mean_effect"),
                                  field<double>(oj, "mean_p_value"),
                                  field<std::size_t>(oj, "units")});
    }
    for (const auto& uj : field<ordered_json>(tj, "units")) {
      t.per_unit.push_back(unit_from_json(uj, t.token));
    }
    if (!tj.at("intensity").is_null()) {
      report.normalized_intensity[t.token] = field<int>(tj, "intensity");
    }
    report.tokens.push_back(std::move(t));
  }
  return report;
}

}  // namespace dbsa
