#include "dbsa/mock.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "dbsa/error.hpp"
#include "dbsa/random.hpp"
#include "dbsa/tokenization.hpp"

namespace dbsa {

using nlohmann::json;

namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

ResponseDistribution parse_distribution(const json& j, const std::string& where) {
  ResponseDistribution out;
  if (!j.is_array() || j.empty()) {
    throw ConfigError(where + ": expected a nonempty array of [text, weight] pairs");
  }
  for (const auto& item : j) {
    if (item.is_string()) {
      out.emplace_back(item.get<std::string>(), 1.0);
    } else if (item.is_array() && item.size() == 2 && item[0].is_string() &&
               item[1].is_number()) {
      const double w = item[1].get<double>();
      if (!(w >= 0.0)) throw ConfigError(where + ": negative weight");
      out.emplace_back(item[0].get<std::string>(), w);
    } else {
      throw ConfigError(where + ": malformed response entry " + item.dump());
    }
  }
  return out;
}

PromptMatcher parse_matcher(const json& j) {
  static const std::pair<const char*, PromptMatcher::Kind> kKinds[] = {
      {"equals", PromptMatcher::Kind::equals},
      {"contains", PromptMatcher::Kind::contains},
      {"lacks", PromptMatcher::Kind::lacks},
      {"has_token", PromptMatcher::Kind::has_token},
      {"lacks_token", PromptMatcher::Kind::lacks_token},
  };
  if (!j.is_object() || j.size() != 1) {
    throw ConfigError("mock rule 'when' must be an object with exactly one matcher");
  }
  for (const auto& [name, kind] : kKinds) {
    if (j.contains(name)) return {kind, j.at(name).get<std::string>()};
  }
  if (j.contains("always")) return {PromptMatcher::Kind::always, ""};
  throw ConfigError("unknown mock matcher " + j.dump());
}

bool prompt_has_token(std::string_view prompt, std::string_view token) {
  const auto t = tokenize(prompt);
  return std::find(t.tokens.begin(), t.tokens.end(), token) != t.tokens.end();
}

}  // namespace

bool PromptMatcher::matches(std::string_view prompt) const {
  switch (kind) {
    case Kind::always:
      return true;
    case Kind::equals:
      return prompt == pattern;
    case Kind::contains:
      return prompt.find(pattern) != std::string_view::npos;
    case Kind::lacks:
      return prompt.find(pattern) == std::string_view::npos;
    case Kind::has_token:
      return prompt_has_token(prompt, pattern);
    case Kind::lacks_token:
      return !prompt_has_token(prompt, pattern);
  }
  return false;
}

MockGenerator::MockGenerator(std::vector<MockRule> rules, ResponseDistribution fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {
  if (fallback_.empty()) throw ConfigError("mock generator needs a nonempty default distribution");
}

MockGenerator MockGenerator::from_json(const json& spec) {
  std::vector<MockRule> rules;
  if (spec.contains("rules")) {
    std::size_t i = 0;
    for (const auto& r : spec.at("rules")) {
      rules.push_back({parse_matcher(r.at("when")),
                       parse_distribution(r.at("responses"), "rule " + std::to_string(i))});
      ++i;
    }
  }
  if (!spec.contains("default")) throw ConfigError("mock generator spec lacks 'default'");
  return MockGenerator(std::move(rules), parse_distribution(spec.at("default"), "default"));
}

std::size_t MockGenerator::pick(const ResponseDistribution& distribution, double u) {
  double total = 0.0;
  for (const auto& [text, w] : distribution) total += w;
  const double target = u * total;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    cumulative += distribution[i].second;
    if (target < cumulative) return i;
  }
  // u * total can round up to total; take the last positive-weight entry.
  for (std::size_t i = distribution.size(); i-- > 0;) {
    if (distribution[i].second > 0.0) return i;
  }
  return distribution.size() - 1;
}

std::string MockGenerator::generate(const GenerationRequest& request) {
  const ResponseDistribution* dist = &fallback_;
  for (const auto& rule : rules_) {
    if (rule.when.matches(request.prompt)) {
      dist = &rule.responses;
      break;
    }
  }
  SplitMix64 rng(request.seed);
  return (*dist)[pick(*dist, rng.uniform01())].first;
}

MockEmbedder::MockEmbedder(std::vector<std::string> vocabulary)
    : vocabulary_(std::move(vocabulary)) {
  if (vocabulary_.empty()) throw ConfigError("mock embedder needs a nonempty vocabulary");
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    const auto [it, inserted] = index_.emplace(ascii_lower(vocabulary_[i]), i);
    if (!inserted) throw ConfigError("duplicate mock vocabulary word '" + vocabulary_[i] + "'");
  }
}

MockEmbedder MockEmbedder::from_json(const json& spec) {
  return MockEmbedder(spec.at("vocab").get<std::vector<std::string>>());
}

Matrix MockEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw ArgumentError("empty batch");
  Matrix out(texts.size(), vocabulary_.size(), 0.0);
  for (std::size_t r = 0; r < texts.size(); ++r) {
    for (const auto& tok : tokenize(texts[r]).tokens) {
      if (auto it = index_.find(ascii_lower(tok)); it != index_.end()) out(r, it->second) += 1.0;
    }
  }
  return out;
}

std::string MockEmbedder::model_id() const {
  std::string id = "mock-bow";
  for (const auto& w : vocabulary_) id += ":" + w;
  return id;
}

std::string CountingGenerator::generate(const GenerationRequest& request) {
  const std::size_t now = in_flight_.fetch_add(1) + 1;
  std::size_t peak = peak_.load();
  while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
  }
  {
    std::lock_guard lock(mutex_);
    ++calls_[std::string(request.prompt)];
  }
  struct Exit {
    std::atomic<std::size_t>& counter;
    ~Exit() { counter.fetch_sub(1); }
  } exit{in_flight_};
  return inner_.generate(request);
}

std::size_t CountingGenerator::total_calls() const {
  std::lock_guard lock(mutex_);
  std::size_t total = 0;
  for (const auto& [p, c] : calls_) total += c;
  return total;
}

std::size_t CountingGenerator::calls_for(const std::string& prompt) const {
  std::lock_guard lock(mutex_);
  const auto it = calls_.find(prompt);
  return it == calls_.end() ? 0 : it->second;
}

std::map<std::string, std::size_t> CountingGenerator::calls_by_prompt() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

MockBackend mock_backend_from_json(const json& spec) {
  if (!spec.contains("generator") || !spec.contains("embedder")) {
    throw ConfigError("mock specification needs 'generator' and 'embedder' sections");
  }
  return {MockGenerator::from_json(spec.at("generator")),
          MockEmbedder::from_json(spec.at("embedder"))};
}

MockBackend load_mock_backend(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock specification " + path.string());
  try {
    return mock_backend_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError("invalid mock specification " + path.string() + ": " + e.what());
  }
}

}  // namespace dbsa
