#pragma once

#include <cstdlib>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "facet/embedding.hpp"
#include "facet/errors.hpp"
#include "facet/prompts.hpp"
#include "facet/providers.hpp"

namespace facet {

inline constexpr const char* kEmbedderUrlEnv = "FACET_EMBEDDER_URL";
inline constexpr const char* kEmbedderTimeoutEnv = "FACET_EMBEDDER_TIMEOUT_SECS";
inline constexpr const char* kLlmUrlEnv = "FACET_LLM_URL";

// Served vectors may carry small serialization error; anything further from
// unit than this is treated as a provider fault rather than rounding.
inline constexpr double kHttpNormTolerance = 0.05;

namespace detail {

struct ParsedUrl {
  std::string host_port;  // scheme://host:port
  std::string path;       // leading slash, possibly "/"
};

inline ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigInvalidError("bad URL (missing scheme): " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return ParsedUrl{url, "/"};
  }
  return ParsedUrl{url.substr(0, path_start), url.substr(path_start)};
}

inline httplib::Result post_json(const std::string& url, const nlohmann::json& body,
                                 int timeout_secs) {
  const ParsedUrl parsed = parse_url(url);
  httplib::Client client(parsed.host_port);
  client.set_connection_timeout(timeout_secs, 0);
  client.set_read_timeout(timeout_secs, 0);
  client.set_write_timeout(timeout_secs, 0);
  return client.Post(parsed.path, body.dump(), "application/json");
}

}  // namespace detail

inline std::optional<std::string> env_value(const char* name) {
  const char* value = std::getenv(name);
  if (value == nullptr || value[0] == '\0') return std::nullopt;
  return std::string(value);
}

inline int embedder_timeout_secs() {
  if (auto v = env_value(kEmbedderTimeoutEnv)) {
    const int secs = std::atoi(v->c_str());
    if (secs > 0) return secs;
  }
  return 30;
}

// POSTs {"messages": [{"role", "content"}...], "max_tokens": n} and expects
// {"text": "..."}.
class HttpTextGenClient : public TextGenClient {
 public:
  explicit HttpTextGenClient(std::string url, int timeout_secs = 30)
      : url_(std::move(url)), timeout_secs_(timeout_secs) {}

  static std::unique_ptr<HttpTextGenClient> from_env() {
    auto url = env_value(kLlmUrlEnv);
    if (!url) return nullptr;
    return std::make_unique<HttpTextGenClient>(*url);
  }

  std::string complete(const std::vector<ChatMessage>& messages, int max_tokens) override {
    nlohmann::json body;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : messages) {
      body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    body["max_tokens"] = max_tokens;
    auto res = detail::post_json(url_, body, timeout_secs_);
    if (!res) {
      throw TransportError("text generation request to " + url_ + " failed: " +
                           httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw TransportError("text generation request to " + url_ + " returned status " +
                           std::to_string(res->status));
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw BadResponseError(std::string("text generation response is not JSON: ") + e.what());
    }
    if (!j.contains("text") || !j["text"].is_string()) {
      throw BadResponseError("text generation response lacks a \"text\" string");
    }
    return j["text"].get<std::string>();
  }

 private:
  std::string url_;
  int timeout_secs_;
};

// Embedding service client. POSTs {"item_id", "prompt"?, "text"?} and expects
// {"embedding": [floats]} of the configured dimension; the vector is
// validated and renormalized to unit before use. Allows a bounded number of
// concurrent in-flight requests.
class HttpEmbedderProvider : public EmbedderProvider {
 public:
  HttpEmbedderProvider(std::string url, std::size_t dim, int timeout_secs = 30,
                       std::size_t max_in_flight = 8)
      : url_(std::move(url)),
        dim_(dim),
        timeout_secs_(timeout_secs),
        in_flight_(static_cast<std::ptrdiff_t>(max_in_flight == 0 ? 1 : max_in_flight)) {
    if (dim_ == 0) throw ConfigInvalidError("http provider: dim must be positive");
  }

  static std::unique_ptr<HttpEmbedderProvider> from_env(std::size_t dim) {
    auto url = env_value(kEmbedderUrlEnv);
    if (!url) return nullptr;
    return std::make_unique<HttpEmbedderProvider>(*url, dim, embedder_timeout_secs());
  }

  std::string id() const override { return "http:" + url_; }
  std::size_t dim() const override { return dim_; }
  bool supports(Capability) const override { return true; }

  EmbeddingVector embed_image_general(const ItemId& image) override {
    nlohmann::json body = {{"item_id", image}};
    return request(body, "image " + image);
  }

  EmbeddingVector embed_image_prompted(const ItemId& image, const PromptSpec& prompt) override {
    nlohmann::json body = {{"item_id", image}, {"prompt", prompt.full_prompt}};
    return request(body, "image " + image + " with prompt " + prompt.prompt_id);
  }

  EmbeddingVector embed_query(const QueryRef& query) override {
    nlohmann::json body = {{"item_id", query.id}, {"text", query.text}};
    return request(body, "query " + query.id);
  }

 private:
  EmbeddingVector request(const nlohmann::json& body, const std::string& what) {
    in_flight_.acquire();
    httplib::Result res;
    try {
      res = detail::post_json(url_, body, timeout_secs_);
    } catch (...) {
      in_flight_.release();
      throw;
    }
    in_flight_.release();

    if (!res) {
      throw TransportError("embed request for " + what + " failed: " +
                           httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw TransportError("embed request for " + what + " returned status " +
                           std::to_string(res->status));
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw BadResponseError(std::string("embed response is not JSON: ") + e.what());
    }
    if (!j.contains("embedding") || !j["embedding"].is_array()) {
      throw BadResponseError("embed response lacks an \"embedding\" array");
    }
    std::vector<double> values;
    values.reserve(j["embedding"].size());
    for (const auto& x : j["embedding"]) {
      if (!x.is_number()) {
        throw BadResponseError("embed response contains a non-numeric component");
      }
      values.push_back(x.get<double>());
    }
    if (values.size() != dim_) {
      throw DimMismatchError("embed response for " + what + " has dim " +
                             std::to_string(values.size()) + ", expected " +
                             std::to_string(dim_));
    }
    const double norm = l2_norm(std::span<const double>(values));
    if (std::abs(norm - 1.0) > kHttpNormTolerance) {
      throw NormError("embed response for " + what + " has norm " + std::to_string(norm));
    }
    return normalize(std::span<const double>(values));
  }

  std::string url_;
  std::size_t dim_;
  int timeout_secs_;
  std::counting_semaphore<> in_flight_;
};

}  // namespace facet
