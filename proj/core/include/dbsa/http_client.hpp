#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>

#include "dbsa/clients.hpp"

namespace dbsa {

/// Scheme+authority and path prefix of an endpoint URL such as
/// "https://api.example.com/v1".
struct EndpointUrl {
  std::string origin;
  std::string path_prefix;
};

EndpointUrl parse_endpoint_url(const std::string& url);

/// OpenAI-compatible chat-completions client; one POST per draw:
///   POST {endpoint}/chat/completions
///   {"model", "temperature", "max_tokens", "messages": [{"role": "user", "content": prompt}]}
/// 429, 5xx and transport failures raise TransientError; other 4xx raise
/// ConfigError.
class HttpGenerator : public Generator {
 public:
  HttpGenerator(std::string endpoint_url, std::string api_key);

  std::string generate(const GenerationRequest& request) override;

 private:
  EndpointUrl endpoint_;
  std::string api_key_;
};

struct HttpEmbedderOptions {
  std::string endpoint_url;
  std::string model = "text-embedding-ada-002";
  std::string api_key;
  std::chrono::milliseconds timeout{60'000};
  std::size_t max_retries = 3;
  std::chrono::milliseconds retry_backoff{500};
  std::size_t batch_size = 64;
  /// Optional shared limit on requests in flight.
  std::shared_ptr<RequestLimiter> limiter;
};

/// OpenAI-compatible embeddings client:
///   POST {endpoint}/embeddings {"model", "input": [texts]}
/// Batches transparently; rows come back in input order.
class HttpEmbedder : public Embedder {
 public:
  explicit HttpEmbedder(HttpEmbedderOptions options);

  Matrix embed(std::span<const std::string> texts) override;
  std::string model_id() const override { return options_.model; }

 private:
  Matrix embed_batch(std::span<const std::string> texts);

  HttpEmbedderOptions options_;
  EndpointUrl endpoint_;
};

}  // namespace dbsa
