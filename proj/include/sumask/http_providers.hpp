#pragma once
// Remote providers over JSON/HTTP: OpenAI-compatible completions (chat
// "messages" or plain "prompt" bodies) and the embedding sidecar contract
//   POST /embed  {"texts": [...], "model": m} -> {"vectors": [[...]], "model": m, "dim": D}
//   GET  /health -> {"status": "ready", "model": m, "dim": D}

#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>

#include "sumask/gateway.hpp"

namespace sumask {

enum class BodyStyle { chat, completion };

struct HttpProfile {
  std::string name;
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  BodyStyle style = BodyStyle::chat;
  std::string model;
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  std::string api_key_env = "SUMASK_API_KEY";
  SamplingDefaults defaults = SamplingDefaults::chat();
  bool native_n = false;  // server honours "n" for several samples per request
  double timeout_s = 60.0;
};

inline HttpProfile profile_from_json(const std::string& name, const json& j) {
  HttpProfile p;
  p.name = name;
  p.base_url = j.at("base_url").get<std::string>();
  p.path = j.value("path", p.path);
  const auto style = j.value("style", std::string("chat"));
  if (style == "chat") {
    p.style = BodyStyle::chat;
  } else if (style == "completion") {
    p.style = BodyStyle::completion;
    p.defaults = SamplingDefaults::open_weight();
    p.path = j.value("path", std::string("/v1/completions"));
  } else {
    throw ValidationError("style", "expected \"chat\" or \"completion\"");
  }
  p.model = j.value("model", p.model);
  p.auth_header = j.value("auth_header", p.auth_header);
  p.auth_prefix = j.value("auth_prefix", p.auth_prefix);
  p.api_key_env = j.value("api_key_env", p.api_key_env);
  p.defaults.temperature = j.value("temperature", p.defaults.temperature);
  p.defaults.max_tokens = j.value("max_tokens", p.defaults.max_tokens);
  p.native_n = j.value("native_n", p.native_n);
  p.timeout_s = j.value("timeout_s", p.timeout_s);
  if (p.base_url.empty()) throw ValidationError("base_url", "empty");
  return p;
}

// Profiles file: {"<name>": {...profile...}, ...}
inline HttpProfile load_profile(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open provider profiles '" + path + "'");
  const auto all = json::parse(in);
  if (!all.contains(name)) throw ValidationError("provider", "no profile named '" + name + "' in " + path);
  return profile_from_json(name, all.at(name));
}

inline std::optional<double> parse_retry_after(const std::string& value) {
  if (value.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || v < 0.0) return std::nullopt;
  return v;
}

// Maps an HTTP outcome onto the provider error taxonomy.
inline void check_http_result(const httplib::Result& res, const std::string& what) {
  if (!res) throw TransientError(what + ": transport failure (" + httplib::to_string(res.error()) + ")");
  const int status = res->status;
  if (status >= 200 && status < 300) return;
  const std::string detail = what + ": HTTP " + std::to_string(status) + " " + res->body.substr(0, 200);
  if (status == 401 || status == 403) throw AuthError(detail);
  if (status == 429) throw RateLimitError(detail, parse_retry_after(res->get_header_value("Retry-After")));
  if (status >= 500 || status == 408) throw TransientError(detail);
  throw ProviderError(detail);
}

inline std::unique_ptr<httplib::Client> make_client(const std::string& base_url, double timeout_s) {
  auto client = std::make_unique<httplib::Client>(base_url);
  if (!client->is_valid()) throw ValidationError("base_url", "unsupported url '" + base_url + "'");
  const auto secs = static_cast<time_t>(timeout_s);
  const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
  client->set_connection_timeout(secs, usecs);
  client->set_read_timeout(secs, usecs);
  client->set_write_timeout(secs, usecs);
  return client;
}

class HttpCompletionProvider : public CompletionProvider {
 public:
  explicit HttpCompletionProvider(HttpProfile profile, std::optional<std::string> api_key = std::nullopt)
      : profile_(std::move(profile)) {
    if (api_key) {
      api_key_ = *api_key;
    } else if (const char* env = std::getenv(profile_.api_key_env.c_str())) {
      api_key_ = env;
    }
  }

  std::string id() const override { return "http:" + profile_.name + "/" + profile_.model; }
  bool remote() const override { return true; }
  bool native_multi() const override { return profile_.native_n; }
  const HttpProfile& profile() const { return profile_; }

  json request_body(const CompletionRequest& r, std::size_t n) const {
    json body{{"model", r.model_id.empty() ? profile_.model : r.model_id}, {"temperature", r.temperature}, {"max_tokens", r.max_tokens}};
    if (profile_.style == BodyStyle::chat)
      body["messages"] = json::array({{{"role", "user"}, {"content", r.prompt.text}}});
    else
      body["prompt"] = r.prompt.text;
    if (n > 1) body["n"] = n;
    return body;
  }

  std::vector<std::string> post(const CompletionRequest& r, std::size_t n) {
    auto client = make_client(profile_.base_url, profile_.timeout_s);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace(profile_.auth_header, profile_.auth_prefix + api_key_);
    const auto res = client->Post(profile_.path, headers, request_body(r, n).dump(), "application/json");
    check_http_result(res, id());
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& e) {
      throw TransientError(id() + ": malformed response body: " + e.what());
    }
    std::vector<std::string> texts;
    for (const auto& choice : reply.value("choices", json::array())) {
      if (profile_.style == BodyStyle::chat && choice.contains("message"))
        texts.push_back(choice["message"].value("content", std::string()));
      else
        texts.push_back(choice.value("text", std::string()));
    }
    if (texts.size() != n)
      throw TransientError(id() + ": expected " + std::to_string(n) + " choices, got " + std::to_string(texts.size()));
    return texts;
  }

  std::string complete_one(const CompletionRequest& request, int) override { return post(request, 1).front(); }

  std::vector<std::string> complete_many(const CompletionRequest& request, const std::vector<int>& sample_indices) override {
    if (!profile_.native_n || sample_indices.size() <= 1) return CompletionProvider::complete_many(request, sample_indices);
    return post(request, sample_indices.size());
  }

 private:
  HttpProfile profile_;
  std::string api_key_;
};

struct SidecarHealth {
  std::string status;
  std::string model;
  std::size_t dim = 0;
};

// Client for the embedding sidecar; any server honouring the contract works.
class SidecarEmbedder : public EmbeddingProvider {
 public:
  static constexpr const char* kDefaultModel = "bert-large-nli-mean-tokens";

  explicit SidecarEmbedder(std::string base_url, std::string model = kDefaultModel, double timeout_s = 60.0)
      : base_url_(std::move(base_url)), model_(std::move(model)), timeout_s_(timeout_s) {}

  std::string id() const override { return "sidecar:" + base_url_ + "?model=" + model_; }
  bool remote() const override { return true; }

  SidecarHealth health() const {
    auto client = make_client(base_url_, timeout_s_);
    const auto res = client->Get("/health");
    if (res && res->status == 503) throw TransientError(id() + ": model still loading");
    check_http_result(res, id());
    const auto j = json::parse(res->body);
    return {j.value("status", std::string()), j.value("model", std::string()), j.value("dim", std::size_t{0})};
  }

  EmbeddingBatch embed(const std::vector<std::string>& texts) override {
    if (texts.empty()) throw ValidationError("texts", "empty embedding request");
    auto client = make_client(base_url_, timeout_s_);
    const json body{{"texts", texts}, {"model", model_}};
    const auto res = client->Post("/embed", body.dump(), "application/json");
    check_http_result(res, id());
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& e) {
      throw TransientError(id() + ": malformed response body: " + e.what());
    }
    EmbeddingBatch batch;
    batch.vectors = reply.at("vectors").get<std::vector<std::vector<double>>>();
    check_embeddings(batch, texts.size());
    const auto dim = reply.value("dim", std::size_t{0});
    if (dim != batch.vectors.front().size())
      throw DimensionError("sidecar reported dim " + std::to_string(dim) + " but returned " +
                           std::to_string(batch.vectors.front().size()));
    if (reply.value("model", model_) != model_)
      throw ProviderError("sidecar answered with model '" + reply.value("model", std::string()) + "', requested '" + model_ + "'");
    return batch;
  }

 private:
  std::string base_url_;
  std::string model_;
  double timeout_s_;
};

}  // namespace sumask
