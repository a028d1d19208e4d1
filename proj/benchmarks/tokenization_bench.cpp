#include <benchmark/benchmark.h>

#include <string>

#include "dbsa/fixtures.hpp"
#include "dbsa/tokenization.hpp"

namespace {

void BM_TokenizeFixture(benchmark::State& state) {
  const std::string text(dbsa::fixtures::prompt("legal"));
  for (auto _ : state) benchmark::DoNotOptimize(dbsa::tokenize(text));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_TokenizeFixture);

void BM_TokenizeLong(benchmark::State& state) {
  std::string text;
  for (const auto& p : dbsa::fixtures::prompts()) text += std::string(p.text) + " ";
  while (text.size() < 64 * 1024) text += text;
  for (auto _ : state) benchmark::DoNotOptimize(dbsa::tokenize(text));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_TokenizeLong);

}  // namespace
