#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dbsa/clients.hpp"
#include "dbsa/statistics.hpp"

namespace dbsa {

enum class NeighborProviderKind { static_table, embedding_knn, generator_synonyms };

std::string_view to_string(NeighborProviderKind kind) noexcept;

struct Neighbor {
  std::string token;
  /// Embedding-space distance to the source token, when known.
  std::optional<double> distance;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// At most k substitutes for one token, never containing the token itself
/// (compared case-insensitively).
struct NeighborSet {
  std::string source_token;
  std::vector<Neighbor> neighbors;
  NeighborProviderKind provider = NeighborProviderKind::static_table;

  bool empty() const noexcept { return neighbors.empty(); }
  std::size_t size() const noexcept { return neighbors.size(); }
};

/// ASCII case folding; other bytes are left untouched.
std::string fold_case(std::string_view text);

/// Token -> substitute list table read from a flat JSON object
/// {"token": ["n1", "n2", ...], ...}. Lookup tries the exact key, then the
/// first key equal under case folding.
class StaticNeighborTable {
 public:
  static StaticNeighborTable load(const std::filesystem::path& path);
  static StaticNeighborTable from_json(const nlohmann::ordered_json& doc);

  NeighborSet lookup(std::string_view token, std::size_t k) const;

  const std::vector<std::pair<std::string, std::vector<std::string>>>& entries() const noexcept {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, std::vector<std::string>>> entries_;
  std::map<std::string, std::size_t, std::less<>> exact_;
  std::map<std::string, std::size_t, std::less<>> folded_;
};

/// The k lexicon entries nearest to `token` under `metric` in the embedder's
/// space, excluding the token itself. Ties keep lexicon order.
NeighborSet knn_neighbors(std::string_view token, std::span<const std::string> lexicon,
                          Embedder& embedder, std::size_t k, DistanceMetric metric);

inline constexpr std::string_view kSynonymPromptVersion = "synonyms-v1";

/// The fixed synonym request sent to the generator.
std::string synonym_prompt(std::string_view token, std::string_view context, std::size_t k);

/// Splits a synonym reply on newlines and commas, stripping list numbering,
/// bullets, quotes and trailing periods.
std::vector<std::string> parse_synonym_reply(std::string_view reply);

/// Asks the generator for k synonyms of `token` in `context`, up to three
/// attempts; NeighborError when no attempt yields a usable list.
NeighborSet synonym_neighbors(std::string_view token, std::string_view context,
                              const Sampler& sampler, std::size_t k, std::uint64_t seed);

/// Source of neighbor sets for the pipeline.
class NeighborProvider {
 public:
  virtual ~NeighborProvider() = default;
  /// Throws NeighborError when neighbors cannot be obtained.
  virtual NeighborSet neighbors(std::string_view token, std::string_view context,
                                std::size_t k) = 0;
  virtual NeighborProviderKind kind() const noexcept = 0;
  /// Short description for run provenance, e.g. "static:closest_words.json".
  virtual std::string describe() const = 0;
};

class StaticNeighborProvider : public NeighborProvider {
 public:
  StaticNeighborProvider(StaticNeighborTable table, std::string source);

  NeighborSet neighbors(std::string_view token, std::string_view context, std::size_t k) override;
  NeighborProviderKind kind() const noexcept override { return NeighborProviderKind::static_table; }
  std::string describe() const override { return "static:" + source_; }

 private:
  StaticNeighborTable table_;
  std::string source_;
};

class KnnNeighborProvider : public NeighborProvider {
 public:
  KnnNeighborProvider(std::vector<std::string> lexicon, Embedder& embedder, DistanceMetric metric,
                      std::string source);

  NeighborSet neighbors(std::string_view token, std::string_view context, std::size_t k) override;
  NeighborProviderKind kind() const noexcept override {
    return NeighborProviderKind::embedding_knn;
  }
  std::string describe() const override { return "knn:" + source_; }

 private:
  std::vector<std::string> lexicon_;
  Embedder& embedder_;
  DistanceMetric metric_;
  std::string source_;
};

class SynonymNeighborProvider : public NeighborProvider {
 public:
  SynonymNeighborProvider(Sampler sampler, std::uint64_t seed);

  NeighborSet neighbors(std::string_view token, std::string_view context, std::size_t k) override;
  NeighborProviderKind kind() const noexcept override {
    return NeighborProviderKind::generator_synonyms;
  }
  std::string describe() const override;

 private:
  Sampler sampler_;
  std::uint64_t seed_;
};

/// One token per nonempty line.
std::vector<std::string> load_lexicon(const std::filesystem::path& path);

}  // namespace dbsa
