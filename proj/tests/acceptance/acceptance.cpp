#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "dbsa/ablation.hpp"
#include "dbsa/fixtures.hpp"
#include "dbsa/mock.hpp"
#include "dbsa/pipeline.hpp"
#include "dbsa/random.hpp"
#include "dbsa/reporting.hpp"
#include "dbsa/statistics.hpp"
#include "dbsa/tokenization.hpp"
#include "dbsa_cli/cli.hpp"
#include "test_support.hpp"

using namespace dbsa;
using namespace dbsa::support;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

RunConfig mock_config(std::size_t n, std::uint64_t seed) {
  RunConfig c;
  c.generation.endpoint_url = "mock:";
  c.generation.sample_count_n = n;
  c.generation.max_concurrent_requests = 1;
  c.k = 3;
  c.permutations = 500;
  c.run_seed = seed;
  return c;
}

const std::vector<std::pair<std::string, double>>& graded_tokens() {
  static const std::vector<std::pair<std::string, double>> tokens{
      {"patient", 0.35}, {"shows", 0.05}, {"sudden", 0.6},  {"onset", 0.2},
      {"congestive", 0.9}, {"heart", 0.45}, {"failure", 0.1}, {"with", 0.75},
      {"mild", 0.0},     {"edema", 0.55}, {"today", 0.3}};
  return tokens;
}

std::string graded_prompt() {
  std::string p;
  for (const auto& [t, q] : graded_tokens()) p += (p.empty() ? "" : " ") + t;
  return p;
}

std::vector<std::string> graded_token_names() {
  std::vector<std::string> out;
  for (const auto& [t, q] : graded_tokens()) out.push_back(t);
  return out;
}

Outcome statistics_oracle() {
  SplitMix64 rng(2024);
  const DistanceMetric metrics[] = {DistanceMetric::cosine_distance, DistanceMetric::l1,
                                    DistanceMetric::l2};
  double worst_rel = 0.0;
  double worst_sym = 0.0;
  bool self_zero = true;
  for (int i = 0; i < 200; ++i) {
    const auto metric = metrics[i % 3];
    const std::size_t n = 2 + rng.below(19);
    const std::size_t m = 2 + rng.below(19);
    const std::size_t d = 1 + rng.below(8);
    const Matrix x = random_matrix(rng, n, d);
    const Matrix y = random_matrix(rng, m, d);
    const long double oracle = brute_energy(x, y, metric);
    const double e = energy_distance(x, y, metric);
    worst_rel = std::max(worst_rel, static_cast<double>(std::fabs(e - oracle) / std::fabs(oracle)));
    const double swapped = energy_distance(y, x, metric);
    worst_sym = std::max(worst_sym, std::fabs(e - swapped) / std::fabs(e));
    self_zero = self_zero && energy_distance(x, x, metric) == 0.0;
  }
  return {worst_rel < 1e-12 && worst_sym < 1e-12 && self_zero,
          fmt::format("max rel err {:.2e}, max asymmetry {:.2e}, E(X,X)==0: {}", worst_rel,
                      worst_sym, self_zero)};
}

Outcome exact_permutation() {
  SplitMix64 rng(77);
  const DistanceMetric metrics[] = {DistanceMetric::cosine_distance, DistanceMetric::l1,
                                    DistanceMetric::l2};
  int within = 0;
  double worst_z = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto metric = metrics[i % 3];
    const std::size_t d = 1 + rng.below(4);
    const Matrix x = random_matrix(rng, 3, d);
    const Matrix y = random_matrix(rng, 3, d);
    const double exact = exhaustive_p_value(x, y, metric);
    PermutationOptions opts;
    opts.permutations = 10'000;
    opts.seed = rng.next();
    const double mc = permutation_test_energy(x, y, metric, opts).p_value;
    const double se = std::sqrt(exact * (1.0 - exact) / 10'000.0);
    const double diff = std::fabs(mc - exact);
    if (diff <= 3.0 * se) ++within;
    if (se > 0.0) worst_z = std::max(worst_z, diff / se);
    else if (diff > 0.0) worst_z = INFINITY;
  }
  return {within == 50, fmt::format("{}/50 within 3 SE, worst |z| {:.2f}", within, worst_z)};
}

Outcome planted_detection() {
  const std::string prompt(fixtures::prompt("medical"));
  auto table = StaticNeighborTable::load(data_dir() / "mocks" / "medical_neighbors.json");
  StaticNeighborProvider neighbors(table, "medical_neighbors.json");
  MockBackend backend = planted_backend();
  int successes = 0;
  double worst_other = 1.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RunConfig config = mock_config(40, seed);
    config.generation.max_concurrent_requests = 4;
    const auto report = run_dbsa(prompt, config,
                                 {backend.generator, backend.embedder, neighbors, nullptr, nullptr,
                                  {}, {}});
    const auto top = top_k_table(report, report.tokens.size(), 0.05);
    bool ok = top.front().token == "congestive" && top.front().p_value < 0.05;
    for (std::size_t i = 1; i < top.size(); ++i) {
      ok = ok && top[i].p_value >= 0.05 && top[i].omega < top.front().omega;
      worst_other = std::min(worst_other, top[i].p_value);
    }
    successes += ok ? 1 : 0;
  }
  return {successes >= 19,
          fmt::format("{}/20 seeds, smallest non-target p {:.3f}", successes, worst_other)};
}

Outcome null_calibration() {
  MockBackend backend = null_backend();
  auto neighbors = synthetic_neighbors({"x", "is", "y"});
  std::vector<double> ps;
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto report = run_dbsa("x is y", mock_config(40, seed),
                                 {backend.generator, backend.embedder, neighbors, nullptr, nullptr,
                                  {}, {}});
    for (const auto& t : report.tokens) {
      for (const auto& u : t.per_unit) ps.push_back(u.test.p_value);
    }
  }
  const double ks = ks_uniform(ps);
  return {ps.size() >= 500 && ks < 0.1,
          fmt::format("{} pooled unit p-values, KS distance {:.4f}", ps.size(), ks)};
}

Outcome metric_interchangeability() {
  MockBackend backend = graded_backend(graded_tokens());
  auto neighbors = synthetic_neighbors(graded_token_names());
  ModelBackend model{"graded", &backend.generator, &backend.embedder, {}};
  model.generation.sample_count_n = 40;
  model.generation.max_concurrent_requests = 4;
  const auto result = metric_agreement(
      graded_prompt(), model, mock_config(40, 5),
      {DistanceMetric::cosine_distance, DistanceMetric::l1, DistanceMetric::l2},
      {neighbors, nullptr, {}});
  double worst = 1.0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) worst = std::min(worst, result.values[i][j]);
  }
  return {worst >= 0.9, fmt::format("min pairwise Spearman {:.3f} (cos-l1 {:.3f}, cos-l2 {:.3f}, "
                                    "l1-l2 {:.3f})",
                                    worst, result.values[0][1], result.values[0][2],
                                    result.values[1][2])};
}

Outcome mc_stabilization() {
  MockBackend first = graded_backend(graded_tokens());
  MockBackend second = graded_backend(graded_tokens());
  auto neighbors = synthetic_neighbors(graded_token_names());
  ModelBackend a{"graded-a", &first.generator, &first.embedder, {}};
  ModelBackend b{"graded-b", &second.generator, &second.embedder, {}};
  a.generation.max_concurrent_requests = b.generation.max_concurrent_requests = 4;
  const auto result =
      mc_sweep(graded_prompt(), a, b, {4, 8, 16, 32, 40}, 10, mock_config(40, 9),
               {neighbors, nullptr, {}});
  const double sd4 = result.values.front()[1];
  const double sd40 = result.values.back()[1];
  return {sd40 < sd4, fmt::format("Spearman sd at n=4 {:.3f}, at n=40 {:.3f}; means {:.3f} -> {:.3f}",
                                  sd4, sd40, result.values.front()[0], result.values.back()[0])};
}

Outcome top_k_structure() {
  SensitivityReport report;
  report.prompt = std::string(fixtures::prompt("medical"));
  const std::vector<std::tuple<std::string, double, double>> rows{
      {"examination", 0.07, 0.16}, {"Lower", 0.07, 0.28}, {"mid", 0.07, 0.39},
      {"congestive", 0.08, 0.11}, {"hypertensive", 0.06, 0.31}};
  for (const auto& [token, omega, p] : rows) {
    TokenSensitivity t;
    t.token = token;
    t.omega = omega;
    t.p_value = p;
    report.tokens.push_back(t);
  }
  const auto table = top_k_table(report, 5, 0.05);
  const std::vector<std::string> expected{"congestive", "examination", "Lower", "mid",
                                          "hypertensive"};
  bool ok = table.size() == 5;
  std::string order;
  for (std::size_t i = 0; i < table.size(); ++i) {
    ok = ok && table[i].token == expected[i] && !table[i].significant;
    order += (i ? " " : "") + table[i].token;
  }
  return {ok, "order: " + order + "; significant marks: none"};
}

Outcome tokenizer_golden() {
  int matched = 0;
  std::string detail;
  for (const auto& p : fixtures::prompts()) {
    std::ifstream in(golden_dir() / fmt::format("{}.tokens", p.name), std::ios::binary);
    std::stringstream golden;
    golden << in.rdbuf();
    std::string produced;
    for (const auto& t : tokenize(p.text).tokens) produced += t + "\n";
    if (in && produced == golden.str()) ++matched;
    else detail += fmt::format(" mismatch:{}", p.name);
  }
  const auto contains_run = [](std::string_view text, const std::vector<std::string>& run) {
    const auto tokens = tokenize(text).tokens;
    return std::search(tokens.begin(), tokens.end(), run.begin(), run.end()) != tokens.end();
  };
  const bool dollars = contains_run(fixtures::prompt("legal"), {"$10", "million"});
  const bool percent = contains_run(fixtures::prompt("legal"), {"50", "%"});
  const bool age = contains_run(fixtures::prompt("medical"), {"45", "-", "year", "-", "old"});
  const bool punct = contains_run(fixtures::prompt("legal"), {"B", "'", "s"}) &&
                     contains_run(fixtures::prompt("medical"), {"2", "+"});
  return {matched == 4 && dollars && percent && age && punct,
          fmt::format("{}/4 golden files byte-identical; $10 {} 50+% {} 45-year-old {} "
                      "punctuation {}{}",
                      matched, dollars, percent, age, punct, detail)};
}

Outcome cli_determinism() {
  TempDir dir;
  std::vector<std::string> outputs;
  for (const char* concurrency : {"1", "1", "8", "8"}) {
    const auto stem = dir.path() / fmt::format("run{}", outputs.size() / 2);
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(
        {"analyze", "--fixture", "medical", "--endpoint",
         "mock:" + (data_dir() / "mocks" / "planted.json").string(), "--neighbors",
         "static:" + (data_dir() / "mocks" / "medical_neighbors.json").string(), "--seed", "11",
         "-n", "20", "--permutations", "200", "--concurrency", concurrency, "--no-cache",
         "--format", "json,html", "--top-k", "5", "-o", stem.string(), "-q"},
        out, err);
    if (code != 0) return {false, fmt::format("analyze exited {}: {}", code, err.str())};
    for (const char* ext : {".json", ".html"}) {
      std::ifstream in(stem.string() + ext, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      outputs.push_back(ss.str());
    }
  }
  const bool json_same = outputs[0] == outputs[2] && outputs[0] == outputs[4] &&
                         outputs[0] == outputs[6];
  const bool html_same = outputs[1] == outputs[3] && outputs[1] == outputs[5] &&
                         outputs[1] == outputs[7];
  return {json_same && html_same && !outputs[0].empty() && !outputs[1].empty(),
          fmt::format("json identical {} ({} bytes), html identical {} ({} bytes) "
                      "across concurrency 1 and 8",
                      json_same, outputs[0].size(), html_same, outputs[1].size())};
}

Outcome work_accounting() {
  const std::string prompt(fixtures::prompt("medical"));
  auto table = StaticNeighborTable::load(data_dir() / "mocks" / "medical_neighbors.json");
  StaticNeighborProvider neighbors(table, "medical_neighbors.json");
  MockBackend backend = planted_backend();
  const TokenizedPrompt tp = tokenize(prompt);
  std::size_t expected_units = 0;
  for (const auto& u : tp.unique_index) {
    expected_units += u.positions.size() * neighbors.neighbors(u.text, prompt, 3).size();
  }

  std::string detail;
  bool ok = true;
  for (bool resample : {false, true}) {
    CountingGenerator counting(backend.generator);
    RunConfig config = mock_config(4, 3);
    config.permutations = 50;
    config.resample_baseline_per_unit = resample;
    run_dbsa(prompt, config, {counting, backend.embedder, neighbors, nullptr, nullptr, {}, {}});
    const std::size_t baseline_calls = counting.calls_for(prompt) / config.n();
    std::size_t perturbed_calls = 0;
    for (const auto& [p, calls] : counting.calls_by_prompt()) {
      if (p != prompt) perturbed_calls += calls / config.m();
    }
    const std::size_t want_baseline = resample ? expected_units : 1;
    ok = ok && baseline_calls == want_baseline && perturbed_calls == expected_units &&
         counting.calls_for(prompt) % config.n() == 0;
    detail += fmt::format("{}baseline {} (want {}), perturbed {} (want {})",
                          resample ? "; per-unit baseline: " : "default: ", baseline_calls,
                          want_baseline, perturbed_calls, expected_units);
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "statistics oracle suite", 10, statistics_oracle},
      {2, "exact permutation agreement", 60, exact_permutation},
      {3, "planted-sensitivity detection", 120, planted_detection},
      {4, "null calibration", 120, null_calibration},
      {5, "metric interchangeability", 60, metric_interchangeability},
      {6, "Monte Carlo stabilization", 180, mc_stabilization},
      {7, "top-k table structure", 1, top_k_structure},
      {8, "tokenizer golden files", 1, tokenizer_golden},
      {9, "report determinism", 60, cli_determinism},
      {10, "work accounting", 5, work_accounting},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::cout << fmt::format("{} [{:>2}] {}: {} ({:.2f}s of {:.0f}s budget{})\n",
                             pass ? "PASS" : "FAIL", c.id, c.name, o.detail, secs, c.budget_s,
                             in_time ? "" : ", over budget")
              << std::flush;
  }
  std::cout << fmt::format("{} of {} acceptance criteria passed\n", criteria.size() - failures,
                           criteria.size());
  return failures == 0 ? 0 : 1;
}
