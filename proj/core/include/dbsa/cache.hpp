#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dbsa/clients.hpp"

namespace dbsa {

/// Response and embedding cache. Always keeps an in-memory copy; when a
/// directory is given, each sample set is also persisted as one JSON file
/// `<key>.json` ({key, prompt, config_digest, responses, created_at, ...}) and
/// each embedding as `emb-<digest>.json`. Access is serialized per key.
class SampleCache {
 public:
  /// Memory-only cache.
  SampleCache() = default;
  explicit SampleCache(std::filesystem::path directory);

  std::optional<SampleSet> load_samples(const std::string& key);
  void store_samples(const std::string& key, const SampleSet& samples,
                     const std::string& config_digest);

  std::optional<std::vector<double>> load_embedding(const std::string& model_id,
                                                    const std::string& text);
  void store_embedding(const std::string& model_id, const std::string& text,
                       const std::vector<double>& vector);

  /// Mutex serializing work on one key; callers hold it across load+compute+store.
  std::mutex& key_mutex(const std::string& key);

  const std::optional<std::filesystem::path>& directory() const noexcept { return directory_; }

 private:
  std::optional<std::filesystem::path> directory_;
  std::mutex map_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> key_mutexes_;
  std::mutex data_mutex_;
  std::unordered_map<std::string, SampleSet> samples_;
  std::unordered_map<std::string, std::vector<double>> embeddings_;
};

}  // namespace dbsa
