#include "dbsa/http_client.hpp"

#include <algorithm>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "dbsa/error.hpp"

namespace dbsa {

using nlohmann::json;

namespace {

httplib::Headers auth_headers(const std::string& api_key) {
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  return headers;
}

std::string snippet(const std::string& body) {
  return body.size() <= 200 ? body : body.substr(0, 200) + "...";
}

json post_json(const EndpointUrl& endpoint, const std::string& path, const json& payload,
               const std::string& api_key, std::chrono::milliseconds timeout) {
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  const std::string full_path = endpoint.path_prefix + path;
  auto res = client.Post(full_path, auth_headers(api_key), payload.dump(), "application/json");
  if (!res) {
    throw TransientError(fmt::format("POST {}{} failed: {}", endpoint.origin, full_path,
                                     httplib::to_string(res.error())));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransientError(fmt::format("POST {} returned HTTP {}", full_path, res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ConfigError(fmt::format("POST {} returned HTTP {}: {}", full_path, res->status,
                                  snippet(res->body)));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception&) {
    throw TransientError(fmt::format("POST {} returned malformed JSON", full_path));
  }
}

}  // namespace

EndpointUrl parse_endpoint_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint URL '" + url + "' lacks a scheme (http:// or https://)");
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("unsupported endpoint scheme '" + scheme + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  EndpointUrl out;
  out.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) out.path_prefix = url.substr(path_start);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

HttpGenerator::HttpGenerator(std::string endpoint_url, std::string api_key)
    : endpoint_(parse_endpoint_url(endpoint_url)), api_key_(std::move(api_key)) {}

std::string HttpGenerator::generate(const GenerationRequest& request) {
  const json payload = {
      {"model", request.config.model_name},
      {"temperature", request.config.temperature},
      {"max_tokens", request.config.max_output_tokens},
      {"messages", json::array({{{"role", "user"}, {"content", std::string(request.prompt)}}})},
  };
  const json reply =
      post_json(endpoint_, "/chat/completions", payload, api_key_, request.config.timeout);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw TransientError("chat completion reply lacks choices[0].message.content");
  }
}

HttpEmbedder::HttpEmbedder(HttpEmbedderOptions options)
    : options_(std::move(options)), endpoint_(parse_endpoint_url(options_.endpoint_url)) {
  options_.batch_size = std::max<std::size_t>(1, options_.batch_size);
}

Matrix HttpEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw ArgumentError("empty batch");
  Matrix out;
  for (std::size_t start = 0; start < texts.size(); start += options_.batch_size) {
    const std::size_t len = std::min(options_.batch_size, texts.size() - start);
    const Matrix part = embed_batch(texts.subspan(start, len));
    for (std::size_t r = 0; r < part.rows(); ++r) out.append_row(part.row(r));
  }
  return out;
}

Matrix HttpEmbedder::embed_batch(std::span<const std::string> texts) {
  const json payload = {{"model", options_.model},
                        {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  auto delay = options_.retry_backoff;
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      json reply;
      {
        RequestLimiter::Guard guard(options_.limiter.get());
        reply = post_json(endpoint_, "/embeddings", payload, options_.api_key, options_.timeout);
      }
      const auto& data = reply.at("data");
      if (data.size() != texts.size()) {
        throw ConsistencyError(fmt::format("embeddings reply has {} items for {} inputs",
                                           data.size(), texts.size()));
      }
      std::vector<std::vector<double>> rows(texts.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t index = data[i].value("index", i);
        if (index >= rows.size()) throw ConsistencyError("embedding index out of range");
        rows[index] = data[i].at("embedding").get<std::vector<double>>();
      }
      return Matrix::from_rows(rows);
    } catch (const TransientError& e) {
      if (attempt >= options_.max_retries) {
        throw EmbeddingError(fmt::format("embedding request failed after {} retries: {}",
                                         attempt, e.what()));
      }
      std::this_thread::sleep_for(delay);
      delay = std::min<std::chrono::milliseconds>(delay * 2, std::chrono::seconds(30));
    } catch (const json::exception& e) {
      throw EmbeddingError(std::string("malformed embeddings reply: ") + e.what());
    }
  }
}

}  // namespace dbsa
