#pragma once
// Provider contracts for completion and embedding, and the gateway that
// fronts them with the response cache, retries, a client-side rate limiter
// and an in-flight request bound.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "sumask/core.hpp"
#include "sumask/prompting.hpp"
#include "sumask/response_cache.hpp"

namespace sumask {

struct CompletionRequest {
  PromptText prompt;
  double temperature = 0.7;
  int max_tokens = 256;
  int n_samples = 1;
  // Absolute index of texts[0]; the answer for chain i is sample i of its prompt.
  int first_sample = 0;
  std::string model_id;
  std::uint64_t sample_seed = 0;
};

inline void validate_request(const CompletionRequest& r) {
  if (r.n_samples < 1) throw ValidationError("n_samples", "must be >= 1");
  if (r.first_sample < 0) throw ValidationError("first_sample", "must be >= 0");
  if (!(r.temperature >= 0.0 && r.temperature <= 2.0)) throw ValidationError("temperature", "must be within [0, 2]");
  if (r.max_tokens < 1) throw ValidationError("max_tokens", "must be positive");
}

struct CompletionBatch {
  std::vector<std::string> texts;  // by sample index
  json provider_meta = json::object();
};

struct EmbeddingBatch {
  std::vector<std::vector<double>> vectors;
};

inline void check_embeddings(const EmbeddingBatch& batch, std::size_t expected) {
  if (batch.vectors.size() != expected)
    throw DimensionError("expected " + std::to_string(expected) + " vectors, got " + std::to_string(batch.vectors.size()));
  if (batch.vectors.empty()) return;
  const auto dim = batch.vectors.front().size();
  if (dim == 0) throw DimensionError("zero-dimensional embedding");
  for (const auto& v : batch.vectors) {
    if (v.size() != dim) throw DimensionError("ragged embeddings: " + std::to_string(v.size()) + " vs " + std::to_string(dim));
    for (double x : v)
      if (!std::isfinite(x)) throw DimensionError("non-finite embedding component");
  }
}

// Sampling defaults per provider family.
struct SamplingDefaults {
  double temperature = 0.7;
  int max_tokens = 256;

  static SamplingDefaults chat() { return {0.7, 256}; }
  static SamplingDefaults open_weight() { return {0.3, 128}; }
};

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;

  // Stable identifier; part of every cache key.
  virtual std::string id() const = 0;

  // One completion for absolute sample index `sample_index`.
  virtual std::string complete_one(const CompletionRequest& request, int sample_index) = 0;

  // Providers with native multi-sample support override this.
  virtual std::vector<std::string> complete_many(const CompletionRequest& request, const std::vector<int>& sample_indices) {
    std::vector<std::string> out;
    out.reserve(sample_indices.size());
    for (int i : sample_indices) out.push_back(complete_one(request, i));
    return out;
  }

  virtual bool native_multi() const { return false; }
  virtual bool remote() const { return false; }
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual EmbeddingBatch embed(const std::vector<std::string>& texts) = 0;
  virtual bool remote() const { return false; }
};

// Token bucket; zero rate disables limiting.
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;

  explicit TokenBucket(double requests_per_minute = 0.0, double burst = 1.0)
      : rate_per_s_(requests_per_minute / 60.0), capacity_(std::max(1.0, burst)), tokens_(capacity_), last_(Clock::now()) {}

  // Returns how long the caller must wait before proceeding; the token is
  // already reserved.
  std::chrono::duration<double> reserve() {
    if (rate_per_s_ <= 0.0) return std::chrono::duration<double>(0.0);
    std::lock_guard lock(mutex_);
    const auto now = Clock::now();
    tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_per_s_);
    last_ = now;
    tokens_ -= 1.0;
    if (tokens_ >= 0.0) return std::chrono::duration<double>(0.0);
    return std::chrono::duration<double>(-tokens_ / rate_per_s_);
  }

 private:
  double rate_per_s_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mutex_;
};

struct GatewayOptions {
  int max_retries = 4;
  double backoff_initial_s = 0.5;
  double backoff_max_s = 30.0;
  int max_in_flight = 8;
  double requests_per_minute = 0.0;
  // Concatenate missing samples into one prompt. Changes prompt bytes and
  // therefore cache keys.
  bool prompt_packing = false;
  std::string registry_version = std::string(PromptRegistry::kBuiltinVersion);
  std::function<void(std::chrono::duration<double>)> sleep = [](std::chrono::duration<double> d) {
    std::this_thread::sleep_for(d);
  };
};

struct GatewayCounters {
  std::size_t requested = 0;       // samples asked for
  std::size_t provider_calls = 0;  // samples actually sent to the provider
  std::size_t cache_hits = 0;
  std::size_t retries = 0;
  std::array<std::size_t, 4> requested_by_stage{};  // indexed by Stage
};

inline json to_json_counters(const GatewayCounters& c) {
  return json{{"requested", c.requested},
              {"provider_calls", c.provider_calls},
              {"cache_hits", c.cache_hits},
              {"retries", c.retries},
              {"requested_by_stage",
               {{"vanilla", c.requested_by_stage[0]},
                {"summarize", c.requested_by_stage[1]},
                {"question", c.requested_by_stage[2]},
                {"answer", c.requested_by_stage[3]}}}};
}

inline constexpr std::string_view kPackedDelimiter = "### Response ";

inline std::string pack_prompt(const std::string& prompt, std::size_t count) {
  return "Write " + std::to_string(count) + " independent responses to the following prompt. Start response i with the line \"" +
         std::string(kPackedDelimiter) + "i\".\n\n" + prompt;
}

// Splits a packed reply into its numbered responses, or nullopt if the reply
// does not contain exactly `count` responses numbered 1..count.
inline std::optional<std::vector<std::string>> unpack_reply(const std::string& reply, std::size_t count) {
  std::vector<std::string> parts;
  std::size_t pos = reply.find(kPackedDelimiter);
  while (pos != std::string::npos) {
    const auto line_end = reply.find('\n', pos);
    const auto number = reply.substr(pos + kPackedDelimiter.size(),
                                     (line_end == std::string::npos ? reply.size() : line_end) - pos - kPackedDelimiter.size());
    if (canonical_whitespace(number) != std::to_string(parts.size() + 1)) return std::nullopt;
    const auto body_start = line_end == std::string::npos ? reply.size() : line_end + 1;
    const auto next = reply.find(kPackedDelimiter, body_start);
    auto body = reply.substr(body_start, (next == std::string::npos ? reply.size() : next) - body_start);
    while (!body.empty() && is_ascii_space(body.back())) body.pop_back();
    parts.push_back(std::move(body));
    pos = next;
  }
  if (parts.size() != count) return std::nullopt;
  return parts;
}

class Gateway {
 public:
  Gateway(std::shared_ptr<CompletionProvider> provider, std::shared_ptr<const ResponseCache> cache,
          GatewayOptions options = {})
      : provider_(std::move(provider)),
        cache_(std::move(cache)),
        options_(std::move(options)),
        limiter_(options_.requests_per_minute),
        in_flight_(std::max(1, options_.max_in_flight)) {}

  CompletionProvider& provider() { return *provider_; }
  const GatewayOptions& options() const { return options_; }

  CompletionBatch complete(const CompletionRequest& request) {
    validate_request(request);
    const auto n = static_cast<std::size_t>(request.n_samples);
    requested_.fetch_add(n);
    by_stage_[static_cast<std::size_t>(request.prompt.stage)].fetch_add(n);

    CompletionBatch batch;
    batch.texts.resize(n);
    std::vector<int> missing;
    std::vector<CacheKey> keys(n);
    for (std::size_t j = 0; j < n; ++j) {
      const int index = request.first_sample + static_cast<int>(j);
      keys[j] = key_for(request, request.prompt.text, index);
      if (cache_) {
        if (auto hit = cache_->get(keys[j])) {
          batch.texts[j] = std::move(hit->value);
          cache_hits_.fetch_add(1);
          continue;
        }
      }
      missing.push_back(index);
    }
    if (missing.empty()) return batch;

    std::vector<std::string> fresh;
    if (options_.prompt_packing && missing.size() > 1)
      fresh = complete_packed(request, missing);
    else
      fresh = with_retries([&] { return provider_->complete_many(request, missing); });
    if (fresh.size() != missing.size()) throw ProviderError("provider returned wrong sample count");
    provider_calls_.fetch_add(missing.size());

    for (std::size_t m = 0; m < missing.size(); ++m) {
      const auto j = static_cast<std::size_t>(missing[m] - request.first_sample);
      batch.texts[j] = std::move(fresh[m]);
      if (cache_) {
        CacheEntry entry;
        entry.key = keys[j];
        entry.value = batch.texts[j];
        entry.meta = {{"provider", provider_->id()},
                      {"model", request.model_id},
                      {"stage", to_string(request.prompt.stage)},
                      {"sample_index", missing[m]}};
        cache_->put(entry);
      }
    }
    return batch;
  }

  GatewayCounters counters() const {
    GatewayCounters c;
    c.requested = requested_.load();
    c.provider_calls = provider_calls_.load();
    c.cache_hits = cache_hits_.load();
    c.retries = retries_.load();
    for (std::size_t s = 0; s < by_stage_.size(); ++s) c.requested_by_stage[s] = by_stage_[s].load();
    return c;
  }

 private:
  // Packed samples come from a different prompt, so they are keyed apart
  // from unpacked ones.
  CacheKey key_for(const CompletionRequest& request, const std::string& text, int index) const {
    return CacheKey::make({provider_->id(), request.model_id, options_.prompt_packing ? "[packed]\n" + text : text,
                           request.temperature, request.max_tokens, index, options_.registry_version});
  }

  std::vector<std::string> complete_packed(const CompletionRequest& request, const std::vector<int>& missing) {
    CompletionRequest packed = request;
    packed.prompt.text = pack_prompt(request.prompt.text, missing.size());
    packed.prompt.slots["packed_count"] = std::to_string(missing.size());
    packed.n_samples = 1;
    packed.first_sample = missing.front();
    const auto reply = with_retries([&] { return provider_->complete_one(packed, missing.front()); });
    if (auto parts = unpack_reply(reply, missing.size())) return *parts;
    throw ProviderError("packed reply did not contain " + std::to_string(missing.size()) + " numbered responses");
  }

  template <typename Call>
  auto with_retries(Call&& call) -> decltype(call()) {
    for (int attempt = 0;; ++attempt) {
      if (auto wait = limiter_.reserve(); wait.count() > 0) options_.sleep(wait);
      try {
        in_flight_.acquire();
        struct Release {
          std::counting_semaphore<>& s;
          ~Release() { s.release(); }
        } release{in_flight_};
        return call();
      } catch (const AuthError&) {
        throw;
      } catch (const RateLimitError& e) {
        if (attempt >= options_.max_retries) throw ProviderError(std::string("retry budget exhausted: ") + e.what());
        retries_.fetch_add(1);
        options_.sleep(std::chrono::duration<double>(e.retry_after().value_or(backoff(attempt))));
      } catch (const TransientError& e) {
        if (attempt >= options_.max_retries) throw ProviderError(std::string("retry budget exhausted: ") + e.what());
        retries_.fetch_add(1);
        options_.sleep(std::chrono::duration<double>(backoff(attempt)));
      }
    }
  }

  double backoff(int attempt) const {
    return std::min(options_.backoff_max_s, options_.backoff_initial_s * std::pow(2.0, attempt));
  }

  std::shared_ptr<CompletionProvider> provider_;
  std::shared_ptr<const ResponseCache> cache_;
  GatewayOptions options_;
  TokenBucket limiter_;
  std::counting_semaphore<> in_flight_;
  std::atomic<std::size_t> requested_{0};
  std::atomic<std::size_t> provider_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> retries_{0};
  std::array<std::atomic<std::size_t>, 4> by_stage_{};
};

// Embedding front: validates shape and memoizes vectors in the response
// cache (value = JSON array) so warm reruns make no provider calls.
class EmbeddingGateway {
 public:
  EmbeddingGateway(std::shared_ptr<EmbeddingProvider> provider, std::shared_ptr<const ResponseCache> cache)
      : provider_(std::move(provider)), cache_(std::move(cache)) {}

  EmbeddingProvider& provider() { return *provider_; }

  EmbeddingBatch embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ValidationError("texts", "empty embedding request");
    for (std::size_t i = 0; i < texts.size(); ++i)
      if (texts[i].empty()) throw ValidationError("texts[" + std::to_string(i) + "]", "empty text");

    EmbeddingBatch out;
    out.vectors.resize(texts.size());
    std::vector<std::size_t> missing;
    std::vector<CacheKey> keys(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (!cache_) {
        missing.push_back(i);
        continue;
      }
      keys[i] = CacheKey::make({provider_->id(), "embedding", texts[i], 0.0, 0, 0, "embedding"});
      if (auto hit = cache_->get(keys[i])) {
        out.vectors[i] = json::parse(hit->value).get<std::vector<double>>();
        cache_hits_.fetch_add(1);
      } else {
        missing.push_back(i);
      }
    }
    if (!missing.empty()) {
      std::vector<std::string> request;
      for (auto i : missing) request.push_back(texts[i]);
      auto fresh = provider_->embed(request);
      check_embeddings(fresh, request.size());
      calls_.fetch_add(missing.size());
      for (std::size_t m = 0; m < missing.size(); ++m) {
        const auto i = missing[m];
        out.vectors[i] = std::move(fresh.vectors[m]);
        if (cache_) cache_->put({keys[i], json(out.vectors[i]).dump(), "", {{"provider", provider_->id()}}});
      }
    }
    check_embeddings(out, texts.size());
    return out;
  }

  std::size_t provider_calls() const { return calls_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
  std::shared_ptr<const ResponseCache> cache_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace sumask
