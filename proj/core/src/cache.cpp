#include "dbsa/cache.hpp"

#include <fstream>

#include <json.hpp>

#include "dbsa/digest.hpp"
#include "dbsa/error.hpp"

namespace dbsa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<json> read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    // Corrupt entries are treated as misses and overwritten.
    return std::nullopt;
  }
}

void write_json_atomic(const fs::path& path, const json& doc) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ConfigError("cannot write cache file " + tmp.string());
    out << doc.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

std::string embedding_key(const std::string& model_id, const std::string& text) {
  return sha256_hex(model_id + '\n' + text);
}

}  // namespace

SampleCache::SampleCache(fs::path directory) : directory_(std::move(directory)) {
  std::error_code ec;
  fs::create_directories(*directory_, ec);
  if (ec) throw ConfigError("cannot create cache directory " + directory_->string());
}

std::mutex& SampleCache::key_mutex(const std::string& key) {
  std::lock_guard lock(map_mutex_);
  auto& slot = key_mutexes_[key];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::optional<SampleSet> SampleCache::load_samples(const std::string& key) {
  {
    std::lock_guard lock(data_mutex_);
    if (auto it = samples_.find(key); it != samples_.end()) return it->second;
  }
  if (!directory_) return std::nullopt;
  const auto doc = read_json(*directory_ / (key + ".json"));
  if (!doc || doc->value("key", "") != key) return std::nullopt;

  SampleSet s;
  s.prompt = doc->at("prompt").get<std::string>();
  s.responses = doc->at("responses").get<std::vector<std::string>>();
  s.provenance.model_name = doc->value("model_name", "");
  s.provenance.seed = doc->value("seed", std::uint64_t{0});
  s.provenance.timestamp = doc->value("created_at", "");
  s.provenance.retries = doc->value("retries", std::size_t{0});
  std::lock_guard lock(data_mutex_);
  samples_.insert_or_assign(key, s);
  return s;
}

void SampleCache::store_samples(const std::string& key, const SampleSet& samples,
                                const std::string& config_digest) {
  {
    std::lock_guard lock(data_mutex_);
    samples_.insert_or_assign(key, samples);
  }
  if (!directory_) return;
  json doc = {
      {"key", key},
      {"prompt", samples.prompt},
      {"config_digest", config_digest},
      {"responses", samples.responses},
      {"created_at", samples.provenance.timestamp},
      {"model_name", samples.provenance.model_name},
      {"seed", samples.provenance.seed},
      {"retries", samples.provenance.retries},
  };
  write_json_atomic(*directory_ / (key + ".json"), doc);
}

std::optional<std::vector<double>> SampleCache::load_embedding(const std::string& model_id,
                                                               const std::string& text) {
  const std::string key = embedding_key(model_id, text);
  {
    std::lock_guard lock(data_mutex_);
    if (auto it = embeddings_.find(key); it != embeddings_.end()) return it->second;
  }
  if (!directory_) return std::nullopt;
  const auto doc = read_json(*directory_ / ("emb-" + key + ".json"));
  if (!doc || doc->value("key", "") != key) return std::nullopt;
  auto v = doc->at("vector").get<std::vector<double>>();
  std::lock_guard lock(data_mutex_);
  embeddings_.insert_or_assign(key, v);
  return v;
}

void SampleCache::store_embedding(const std::string& model_id, const std::string& text,
                                  const std::vector<double>& vector) {
  const std::string key = embedding_key(model_id, text);
  {
    std::lock_guard lock(data_mutex_);
    embeddings_.insert_or_assign(key, vector);
  }
  if (!directory_) return;
  json doc = {{"key", key}, {"model", model_id}, {"vector", vector}};
  write_json_atomic(*directory_ / ("emb-" + key + ".json"), doc);
}

}  // namespace dbsa
