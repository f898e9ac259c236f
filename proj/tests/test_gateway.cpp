#include <gtest/gtest.h>

#include <thread>

#include "support.hpp"

using namespace sumask;
using namespace testing_support;

namespace {

CompletionRequest request(const std::string& text, int n = 1, int first = 0, Stage stage = Stage::answer) {
  CompletionRequest r;
  r.prompt.text = text;
  r.prompt.stage = stage;
  r.n_samples = n;
  r.first_sample = first;
  return r;
}

struct SleepLog {
  std::vector<double> waits;
  GatewayOptions options(int retries = 4) {
    GatewayOptions o;
    o.max_retries = retries;
    o.sleep = [this](std::chrono::duration<double> d) { waits.push_back(d.count()); };
    return o;
  }
};

}  // namespace

TEST(Gateway, ScriptedRepliesInSampleOrder) {
  ScriptedProvider::Script script;
  script.by_hash[sha256_hex("Is it?")] = {"yes", "yes", "no"};
  auto provider = std::make_shared<ScriptedProvider>(script);
  Gateway gateway(provider, nullptr);
  EXPECT_EQ(gateway.complete(request("Is it?", 3)).texts, (std::vector<std::string>{"yes", "yes", "no"}));
}

TEST(Gateway, SecondCallServedFromCache) {
  TempDir dir;
  ScriptedProvider::Script script;
  script.by_prompt["Is it?"] = {"yes", "yes", "no"};
  auto provider = std::make_shared<ScriptedProvider>(script);
  Gateway gateway(provider, std::make_shared<ResponseCache>(dir.path()));
  const auto first = gateway.complete(request("Is it?", 3));
  EXPECT_EQ(provider->calls(), 3u);
  const auto second = gateway.complete(request("Is it?", 3));
  EXPECT_EQ(provider->calls(), 3u);
  EXPECT_EQ(first.texts, second.texts);
  const auto c = gateway.counters();
  EXPECT_EQ(c.requested, 6u);
  EXPECT_EQ(c.provider_calls, 3u);
  EXPECT_EQ(c.cache_hits, 3u);
  EXPECT_EQ(c.requested_by_stage[static_cast<std::size_t>(Stage::answer)], 6u);
}

TEST(Gateway, PartialCacheFetchesOnlyMissingSamples) {
  TempDir dir;
  std::vector<int> seen;
  std::mutex m;
  auto provider = std::make_shared<FunctionProvider>("fn", [&](const CompletionRequest&, int i) {
    std::lock_guard lock(m);
    seen.push_back(i);
    return "s" + std::to_string(i);
  });
  Gateway gateway(provider, std::make_shared<ResponseCache>(dir.path()));
  gateway.complete(request("p", 2));
  seen.clear();
  const auto batch = gateway.complete(request("p", 4));
  EXPECT_EQ(seen, (std::vector<int>{2, 3}));
  EXPECT_EQ(batch.texts, (std::vector<std::string>{"s0", "s1", "s2", "s3"}));
}

TEST(Gateway, FirstSampleOffsetsIndices) {
  auto provider = std::make_shared<FunctionProvider>("fn", [](const CompletionRequest&, int i) { return std::to_string(i); });
  Gateway gateway(provider, nullptr);
  EXPECT_EQ(gateway.complete(request("p", 2, 3)).texts, (std::vector<std::string>{"3", "4"}));
}

TEST(Gateway, DefaultsAndValidation) {
  EXPECT_EQ(SamplingDefaults::chat().temperature, 0.7);
  EXPECT_EQ(SamplingDefaults::chat().max_tokens, 256);
  EXPECT_EQ(SamplingDefaults::open_weight().temperature, 0.3);
  const CompletionRequest r;
  EXPECT_EQ(r.temperature, 0.7);
  EXPECT_EQ(r.max_tokens, 256);
  EXPECT_EQ(PipelineConfig{}.temperature, 0.7);
  EXPECT_EQ(PipelineConfig{}.max_tokens, 256);

  auto bad = request("p");
  bad.n_samples = 0;
  EXPECT_THROW(validate_request(bad), ValidationError);
  bad = request("p");
  bad.temperature = 2.5;
  EXPECT_THROW(validate_request(bad), ValidationError);
  bad = request("p");
  bad.max_tokens = 0;
  EXPECT_THROW(validate_request(bad), ValidationError);
}

TEST(Gateway, TransientErrorsRetryWithBackoff) {
  SleepLog log;
  int attempts = 0;
  auto provider = std::make_shared<FunctionProvider>("fn", [&](const CompletionRequest&, int) -> std::string {
    if (++attempts < 3) throw TransientError("reset");
    return "ok";
  });
  Gateway gateway(provider, nullptr, log.options());
  EXPECT_EQ(gateway.complete(request("p")).texts.front(), "ok");
  EXPECT_EQ(log.waits, (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(gateway.counters().retries, 2u);
}

TEST(Gateway, RateLimitHonoursRetryAfter) {
  SleepLog log;
  int attempts = 0;
  auto provider = std::make_shared<FunctionProvider>("fn", [&](const CompletionRequest&, int) -> std::string {
    if (++attempts == 1) throw RateLimitError("slow down", 3.0);
    return "ok";
  });
  Gateway gateway(provider, nullptr, log.options());
  gateway.complete(request("p"));
  EXPECT_EQ(log.waits, (std::vector<double>{3.0}));
}

TEST(Gateway, AuthErrorIsNotRetried) {
  SleepLog log;
  int attempts = 0;
  auto provider = std::make_shared<FunctionProvider>("fn", [&](const CompletionRequest&, int) -> std::string {
    ++attempts;
    throw AuthError("bad key");
  });
  Gateway gateway(provider, nullptr, log.options());
  EXPECT_THROW(gateway.complete(request("p")), AuthError);
  EXPECT_EQ(attempts, 1);
}

TEST(Gateway, RetryBudgetExhausted) {
  SleepLog log;
  int attempts = 0;
  auto provider = std::make_shared<FunctionProvider>("fn", [&](const CompletionRequest&, int) -> std::string {
    ++attempts;
    throw TransientError("down");
  });
  Gateway gateway(provider, nullptr, log.options(2));
  try {
    gateway.complete(request("p"));
    FAIL();
  } catch (const TransientError&) {
    FAIL() << "budget exhaustion must not look retryable";
  } catch (const ProviderError& e) {
    EXPECT_NE(std::string(e.what()).find("retry budget"), std::string::npos);
  }
  EXPECT_EQ(attempts, 3);
}

TEST(Gateway, BackoffIsCapped) {
  SleepLog log;
  auto provider = std::make_shared<FunctionProvider>("fn", [](const CompletionRequest&, int) -> std::string { throw TransientError("x"); });
  auto options = log.options(8);
  options.backoff_max_s = 4.0;
  Gateway gateway(provider, nullptr, options);
  EXPECT_THROW(gateway.complete(request("p")), ProviderError);
  EXPECT_EQ(log.waits, (std::vector<double>{0.5, 1, 2, 4, 4, 4, 4, 4}));
}

TEST(Gateway, InFlightBound) {
  std::atomic<int> active{0}, peak{0};
  auto provider = std::make_shared<FunctionProvider>("fn", [&](const CompletionRequest&, int) {
    const int now = ++active;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --active;
    return std::string("ok");
  });
  GatewayOptions options;
  options.max_in_flight = 2;
  Gateway gateway(provider, nullptr, options);
  parallel_for(32, 8, [&](std::size_t i) { gateway.complete(request("p" + std::to_string(i))); });
  EXPECT_LE(peak.load(), 2);
  EXPECT_GE(peak.load(), 1);
}

TEST(Gateway, TokenBucketSpacesRequests) {
  TokenBucket off;
  EXPECT_EQ(off.reserve().count(), 0.0);
  TokenBucket limited(60.0);  // one per second, burst 1
  EXPECT_EQ(limited.reserve().count(), 0.0);
  EXPECT_NEAR(limited.reserve().count(), 1.0, 0.05);
  EXPECT_NEAR(limited.reserve().count(), 2.0, 0.05);
}

TEST(Gateway, PackedSamplesMatchUnpacked) {
  const auto in = pair_instance("i", "Ada married Bob .", "Ada", "Bob", std::string("A"));
  const auto schema = abc_schema();
  auto oracle = std::make_shared<OracleProvider>(std::vector<Instance>{in}, schema);
  GatewayOptions packed_options;
  packed_options.prompt_packing = true;
  Gateway packed(oracle, nullptr, packed_options), plain(oracle, nullptr);
  const auto prompt = build_summarize_prompt(in, in.entities[0], in.entities[1]);
  auto r = request(prompt.text, 5);
  r.prompt = prompt;
  r.n_samples = 5;
  const auto before = oracle->calls();
  const auto a = packed.complete(r);
  EXPECT_EQ(oracle->calls() - before, 1u);
  EXPECT_EQ(a.texts, plain.complete(r).texts);
}

TEST(Gateway, PackingChangesCacheKeys) {
  TempDir dir;
  auto cache = std::make_shared<ResponseCache>(dir.path());
  auto provider = std::make_shared<FunctionProvider>("fn", [](const CompletionRequest& r, int i) {
    if (r.prompt.slots.count("packed_count")) {
      std::string reply;
      for (int j = 0; j < std::stoi(r.prompt.slots.at("packed_count")); ++j)
        reply += std::string(kPackedDelimiter) + std::to_string(j + 1) + "\npacked " + std::to_string(i + j) + "\n";
      return reply;
    }
    return "plain " + std::to_string(i);
  });
  GatewayOptions packed_options;
  packed_options.prompt_packing = true;
  Gateway packed(provider, cache, packed_options), plain(provider, cache);
  EXPECT_EQ(packed.complete(request("p", 2)).texts, (std::vector<std::string>{"packed 0", "packed 1"}));
  EXPECT_EQ(plain.complete(request("p", 2)).texts, (std::vector<std::string>{"plain 0", "plain 1"}));
  EXPECT_EQ(plain.counters().cache_hits, 0u);
}

TEST(Gateway, UnpackReply) {
  EXPECT_EQ(unpack_reply("### Response 1\na\n### Response 2\nb c\n\n", 2), (std::vector<std::string>{"a", "b c"}));
  EXPECT_FALSE(unpack_reply("### Response 1\na\n### Response 3\nb", 2));
  EXPECT_FALSE(unpack_reply("### Response 1\na", 2));
  EXPECT_FALSE(unpack_reply("no markers", 1));
}

TEST(EmbeddingGateway, CachesVectorsAndValidates) {
  TempDir dir;
  auto embedder = std::make_shared<HashEmbedder>(16);
  EmbeddingGateway gateway(embedder, std::make_shared<ResponseCache>(dir.path()));
  const auto first = gateway.embed({"a", "b"});
  EXPECT_EQ(embedder->calls(), 2u);
  const auto second = gateway.embed({"b", "a", "c"});
  EXPECT_EQ(embedder->calls(), 3u);
  EXPECT_EQ(second.vectors[0], first.vectors[1]);
  EXPECT_EQ(second.vectors[1], first.vectors[0]);
  EXPECT_EQ(gateway.cache_hits(), 2u);
  EXPECT_THROW(gateway.embed({}), ValidationError);
  EXPECT_THROW(gateway.embed({"x", ""}), ValidationError);
}

TEST(EmbeddingGateway, RejectsMalformedBatches) {
  EmbeddingBatch ragged{{{1.0, 2.0}, {1.0}}};
  EXPECT_THROW(check_embeddings(ragged, 2), DimensionError);
  EXPECT_THROW(check_embeddings(EmbeddingBatch{{{1.0}}}, 2), DimensionError);
  EXPECT_THROW(check_embeddings(EmbeddingBatch{{{}}}, 1), DimensionError);
  EXPECT_THROW(check_embeddings(EmbeddingBatch{{{std::nan("")}}}, 1), DimensionError);
  auto bad = std::make_shared<TableEmbedder>(std::map<std::string, std::vector<double>>{{"a", {1.0}}, {"b", {1.0, 2.0}}});
  EmbeddingGateway gateway(bad, nullptr);
  EXPECT_THROW(gateway.embed({"a", "b"}), DimensionError);
}
