#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dbsa/clients.hpp"

namespace dbsa {

/// Categorical distribution over fixed response strings; weights need not sum to 1.
using ResponseDistribution = std::vector<std::pair<std::string, double>>;

/// Condition on the prompt under which a mock rule applies.
struct PromptMatcher {
  enum class Kind { always, equals, contains, lacks, has_token, lacks_token };
  Kind kind = Kind::always;
  std::string pattern;

  bool matches(std::string_view prompt) const;
};

struct MockRule {
  PromptMatcher when;
  ResponseDistribution responses;
};

/// Deterministic stand-in for a generation endpoint. The first rule whose
/// matcher accepts the prompt supplies the distribution (the fallback when
/// none does); the response is chosen with SplitMix64(request seed).
///
/// JSON form:
///   {"rules": [{"when": {"lacks_token": "congestive"},
///               "responses": [["text", weight], ...]}],
///    "default": [["text", weight], ...]}
class MockGenerator : public Generator {
 public:
  MockGenerator(std::vector<MockRule> rules, ResponseDistribution fallback);

  static MockGenerator from_json(const nlohmann::json& spec);

  std::string generate(const GenerationRequest& request) override;

  /// Index into `distribution` selected by a uniform draw in [0, 1).
  static std::size_t pick(const ResponseDistribution& distribution, double u);

 private:
  std::vector<MockRule> rules_;
  ResponseDistribution fallback_;
};

/// Term-count embedder over a fixed vocabulary: entry i of a text's vector is
/// the number of word tokens equal (case-insensitively) to vocabulary word i.
class MockEmbedder : public Embedder {
 public:
  explicit MockEmbedder(std::vector<std::string> vocabulary);

  static MockEmbedder from_json(const nlohmann::json& spec);

  Matrix embed(std::span<const std::string> texts) override;
  std::string model_id() const override;

 private:
  std::vector<std::string> vocabulary_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Generator decorator recording calls per prompt and peak concurrency.
class CountingGenerator : public Generator {
 public:
  explicit CountingGenerator(Generator& inner) : inner_(inner) {}

  std::string generate(const GenerationRequest& request) override;

  std::size_t total_calls() const;
  std::size_t calls_for(const std::string& prompt) const;
  std::map<std::string, std::size_t> calls_by_prompt() const;
  std::size_t peak_in_flight() const noexcept { return peak_.load(); }

 private:
  Generator& inner_;
  mutable std::mutex mutex_;
  std::map<std::string, std::size_t> calls_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_{0};
};

/// Generator and embedder loaded from one mock specification file with
/// "generator" and "embedder" sections.
struct MockBackend {
  MockGenerator generator;
  MockEmbedder embedder;
};

MockBackend load_mock_backend(const std::filesystem::path& path);
MockBackend mock_backend_from_json(const nlohmann::json& spec);

}  // namespace dbsa
