#include "dbsa/neighbors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "dbsa/error.hpp"
#include "dbsa/random.hpp"

namespace dbsa {

using nlohmann::ordered_json;

namespace {

// Drops the source token and case-folded duplicates, keeping at most k entries.
std::vector<Neighbor> filter_neighbors(std::string_view source, std::vector<Neighbor> candidates,
                                       std::size_t k) {
  std::vector<Neighbor> out;
  std::vector<std::string> seen{fold_case(source)};
  for (auto& c : candidates) {
    if (out.size() >= k) break;
    std::string folded = fold_case(c.token);
    if (c.token.empty() || std::find(seen.begin(), seen.end(), folded) != seen.end()) continue;
    seen.push_back(std::move(folded));
    out.push_back(std::move(c));
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto is_ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return s;
}

std::string clean_item(std::string_view item) {
  item = trim(item);
  // "1." / "1)" / "12 -" enumeration prefixes.
  std::size_t i = 0;
  while (i < item.size() && std::isdigit(static_cast<unsigned char>(item[i]))) ++i;
  if (i > 0 && i < item.size() && (item[i] == '.' || item[i] == ')' || item[i] == ':')) {
    item.remove_prefix(i + 1);
  }
  item = trim(item);
  while (!item.empty() && (item.front() == '-' || item.front() == '*')) item.remove_prefix(1);
  if (item.starts_with("•")) item.remove_prefix(3);
  item = trim(item);
  while (!item.empty() && (item.back() == '.' || item.back() == ';')) item.remove_suffix(1);
  item = trim(item);
  if (item.size() >= 2 && (item.front() == '"' || item.front() == '\'') &&
      item.back() == item.front()) {
    item = item.substr(1, item.size() - 2);
  }
  return std::string(trim(item));
}

}  // namespace

std::string_view to_string(NeighborProviderKind kind) noexcept {
  switch (kind) {
    case NeighborProviderKind::static_table:
      return "static_table";
    case NeighborProviderKind::embedding_knn:
      return "embedding_knn";
    case NeighborProviderKind::generator_synonyms:
      return "generator_synonyms";
  }
  return "unknown";
}

std::string fold_case(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
  });
  return out;
}

StaticNeighborTable StaticNeighborTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open neighbor table " + path.string());
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const ordered_json::exception& e) {
    throw ConfigError("neighbor table " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

StaticNeighborTable StaticNeighborTable::from_json(const ordered_json& doc) {
  if (!doc.is_object()) throw ConfigError("neighbor table must be a JSON object");
  StaticNeighborTable table;
  for (const auto& [key, value] : doc.items()) {
    if (!value.is_array()) {
      throw ConfigError("neighbor table key '" + key + "': expected a list of strings");
    }
    if (value.empty()) throw ConfigError("neighbor table key '" + key + "': empty neighbor list");
    std::vector<std::string> list;
    for (const auto& item : value) {
      if (!item.is_string()) {
        throw ConfigError("neighbor table key '" + key + "': non-string neighbor " + item.dump());
      }
      list.push_back(item.get<std::string>());
    }
    if (table.exact_.contains(key)) {
      throw ConfigError("neighbor table key '" + key + "' appears more than once");
    }
    const std::size_t slot = table.entries_.size();
    table.exact_.emplace(key, slot);
    table.folded_.try_emplace(fold_case(key), slot);
    table.entries_.emplace_back(key, std::move(list));
  }
  return table;
}

NeighborSet StaticNeighborTable::lookup(std::string_view token, std::size_t k) const {
  NeighborSet out{std::string(token), {}, NeighborProviderKind::static_table};
  auto it = exact_.find(token);
  std::size_t slot;
  if (it != exact_.end()) {
    slot = it->second;
  } else if (auto f = folded_.find(fold_case(token)); f != folded_.end()) {
    slot = f->second;
  } else {
    return out;
  }
  std::vector<Neighbor> candidates;
  for (const auto& n : entries_[slot].second) candidates.push_back({n, std::nullopt});
  out.neighbors = filter_neighbors(token, std::move(candidates), k);
  return out;
}

NeighborSet knn_neighbors(std::string_view token, std::span<const std::string> lexicon,
                          Embedder& embedder, std::size_t k, DistanceMetric metric) {
  if (lexicon.empty()) throw ArgumentError("knn_neighbors needs a nonempty lexicon");
  if (k < 1) throw ArgumentError("k must be >= 1");
  NeighborSet out{std::string(token), {}, NeighborProviderKind::embedding_knn};

  const std::string folded = fold_case(token);
  std::vector<std::string> texts{std::string(token)};
  std::vector<std::string> seen;
  for (const auto& w : lexicon) {
    std::string f = fold_case(w);
    if (f == folded || std::find(seen.begin(), seen.end(), f) != seen.end()) continue;
    seen.push_back(std::move(f));
    texts.push_back(w);
  }
  if (texts.size() == 1) return out;

  const Matrix vectors = embed(texts, embedder);
  std::vector<double> dist(texts.size() - 1);
  for (std::size_t i = 1; i < texts.size(); ++i) {
    dist[i - 1] = distance(vectors.row(0), vectors.row(i), metric);
  }
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&dist](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    out.neighbors.push_back({texts[order[i] + 1], dist[order[i]]});
  }
  return out;
}

std::string synonym_prompt(std::string_view token, std::string_view context, std::size_t k) {
  return fmt::format(
      "List exactly {} single-word synonyms for the word \"{}\" as it is used in the text "
      "below. Reply with the synonyms only, comma-separated, no explanations.\n\nText: {}",
      k, token, context);
}

std::vector<std::string> parse_synonym_reply(std::string_view reply) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= reply.size(); ++i) {
    if (i == reply.size() || reply[i] == '\n' || reply[i] == ',') {
      std::string item = clean_item(reply.substr(start, i - start));
      if (!item.empty()) out.push_back(std::move(item));
      start = i + 1;
    }
  }
  return out;
}

NeighborSet synonym_neighbors(std::string_view token, std::string_view context,
                              const Sampler& sampler, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw ArgumentError("k must be >= 1");
  constexpr std::size_t kAttempts = 3;
  const std::string prompt = synonym_prompt(token, context, k);
  for (std::size_t attempt = 0; attempt < kAttempts; ++attempt) {
    const SampleSet reply = sampler.sample(prompt, derive_seed(seed, attempt), 1);
    std::vector<Neighbor> candidates;
    for (auto& s : parse_synonym_reply(reply.responses.front())) {
      candidates.push_back({std::move(s), std::nullopt});
    }
    auto filtered = filter_neighbors(token, std::move(candidates), k);
    if (!filtered.empty()) {
      return {std::string(token), std::move(filtered), NeighborProviderKind::generator_synonyms};
    }
  }
  throw NeighborError(fmt::format("no usable synonyms for '{}' after {} attempts", token,
                                  kAttempts));
}

StaticNeighborProvider::StaticNeighborProvider(StaticNeighborTable table, std::string source)
    : table_(std::move(table)), source_(std::move(source)) {}

NeighborSet StaticNeighborProvider::neighbors(std::string_view token, std::string_view,
                                              std::size_t k) {
  return table_.lookup(token, k);
}

KnnNeighborProvider::KnnNeighborProvider(std::vector<std::string> lexicon, Embedder& embedder,
                                         DistanceMetric metric, std::string source)
    : lexicon_(std::move(lexicon)), embedder_(embedder), metric_(metric),
      source_(std::move(source)) {}

NeighborSet KnnNeighborProvider::neighbors(std::string_view token, std::string_view,
                                           std::size_t k) {
  return knn_neighbors(token, lexicon_, embedder_, k, metric_);
}

SynonymNeighborProvider::SynonymNeighborProvider(Sampler sampler, std::uint64_t seed)
    : sampler_(std::move(sampler)), seed_(seed) {}

NeighborSet SynonymNeighborProvider::neighbors(std::string_view token, std::string_view context,
                                               std::size_t k) {
  return synonym_neighbors(token, context, sampler_, k,
                           derive_seed(seed_, std::string("synonyms\n") + std::string(token)));
}

std::string SynonymNeighborProvider::describe() const {
  return "synonyms:" + sampler_.config().model_name + ":" + std::string(kSynonymPromptVersion);
}

std::vector<std::string> load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (!t.empty()) out.emplace_back(t);
  }
  if (out.empty()) throw ConfigError("lexicon " + path.string() + " is empty");
  return out;
}

}  // namespace dbsa
