#include <gtest/gtest.h>

#include <thread>

#include "support.hpp"

using namespace sumask;
using namespace testing_support;

namespace {

// httplib server on an ephemeral loopback port, stopped on destruction.
class FakeServer {
 public:
  httplib::Server server;

  void start() {
    port_ = server.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeServer() {
    server.stop();
    if (thread_.joinable()) thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  int port_ = 0;
  std::thread thread_;
};

HttpProfile profile(const std::string& url, BodyStyle style = BodyStyle::chat) {
  HttpProfile p;
  p.name = "fake";
  p.base_url = url;
  p.style = style;
  p.path = style == BodyStyle::chat ? "/v1/chat/completions" : "/v1/completions";
  p.model = "test-model";
  p.timeout_s = 5.0;
  return p;
}

CompletionRequest request(const std::string& text) {
  CompletionRequest r;
  r.prompt.text = text;
  return r;
}

}  // namespace

TEST(HttpCompletion, ChatBodyAndAuthHeader) {
  FakeServer fake;
  json seen;
  std::string auth;
  fake.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"Yes."}}]})", "application/json");
  });
  fake.start();
  HttpCompletionProvider provider(profile(fake.url()), std::string("sk-test"));
  EXPECT_TRUE(provider.remote());
  EXPECT_EQ(provider.id(), "http:fake/test-model");
  EXPECT_EQ(provider.complete_one(request("Is it?"), 0), "Yes.");
  EXPECT_EQ(auth, "Bearer sk-test");
  EXPECT_EQ(seen["model"], "test-model");
  EXPECT_EQ(seen["messages"][0]["content"], "Is it?");
  EXPECT_EQ(seen["temperature"], 0.7);
  EXPECT_EQ(seen["max_tokens"], 256);
  EXPECT_FALSE(seen.contains("n"));
}

TEST(HttpCompletion, CompletionStyleAndNativeN) {
  FakeServer fake;
  json seen;
  fake.server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    json choices = json::array();
    for (int i = 0; i < seen.value("n", 1); ++i) choices.push_back({{"text", "t" + std::to_string(i)}});
    res.set_content(json{{"choices", choices}}.dump(), "application/json");
  });
  fake.start();
  auto p = profile(fake.url(), BodyStyle::completion);
  p.native_n = true;
  auto provider = std::make_shared<HttpCompletionProvider>(p, std::string());
  EXPECT_EQ(provider->complete_many(request("go"), {0, 1, 2}), (std::vector<std::string>{"t0", "t1", "t2"}));
  EXPECT_EQ(seen["prompt"], "go");
  EXPECT_EQ(seen["n"], 3);

  Gateway gateway(provider, nullptr);
  auto r = request("go");
  r.n_samples = 3;
  EXPECT_EQ(gateway.complete(r).texts.size(), 3u);
}

TEST(HttpCompletion, StatusCodesMapToErrorTaxonomy) {
  FakeServer fake;
  fake.server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    const std::string what = body["messages"][0]["content"];
    if (what == "401") res.status = 401;
    if (what == "429") {
      res.status = 429;
      res.set_header("Retry-After", "7");
    }
    if (what == "500") res.status = 500;
    if (what == "400") res.status = 400;
    if (what == "garbage") res.set_content("<html>", "text/html");
    if (what == "short") res.set_content(R"({"choices":[]})", "application/json");
  });
  fake.start();
  HttpCompletionProvider provider(profile(fake.url()), std::string("k"));
  EXPECT_THROW(provider.complete_one(request("401"), 0), AuthError);
  try {
    provider.complete_one(request("429"), 0);
    FAIL();
  } catch (const RateLimitError& e) {
    EXPECT_EQ(e.retry_after(), 7.0);
  }
  EXPECT_THROW(provider.complete_one(request("500"), 0), TransientError);
  try {
    provider.complete_one(request("400"), 0);
    FAIL();
  } catch (const TransientError&) {
    FAIL() << "4xx is not retryable";
  } catch (const ProviderError&) {
  }
  EXPECT_THROW(provider.complete_one(request("garbage"), 0), TransientError);
  EXPECT_THROW(provider.complete_one(request("short"), 0), TransientError);
}

TEST(HttpCompletion, ConnectionRefusedIsTransient) {
  int port;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  HttpCompletionProvider provider(profile("http://127.0.0.1:" + std::to_string(port)), std::string());
  EXPECT_THROW(provider.complete_one(request("x"), 0), TransientError);
}

TEST(HttpCompletion, ApiKeyFromEnvironment) {
  FakeServer fake;
  std::string auth;
  fake.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("X-Key");
    res.set_content(R"({"choices":[{"message":{"content":"ok"}}]})", "application/json");
  });
  fake.start();
  auto p = profile(fake.url());
  p.api_key_env = "SUMASK_TEST_HTTP_KEY";
  p.auth_header = "X-Key";
  p.auth_prefix = "";
  ::setenv("SUMASK_TEST_HTTP_KEY", "from-env", 1);
  HttpCompletionProvider provider(p);
  provider.complete_one(request("x"), 0);
  ::unsetenv("SUMASK_TEST_HTTP_KEY");
  EXPECT_EQ(auth, "from-env");
}

TEST(HttpProfiles, ShippedProfilesLoad) {
  const auto chat = load_profile(source_path("data/providers/profiles.json"), "openai-chat");
  EXPECT_EQ(chat.style, BodyStyle::chat);
  EXPECT_EQ(chat.defaults.temperature, 0.7);
  EXPECT_EQ(chat.defaults.max_tokens, 256);
  const auto local = load_profile(source_path("data/providers/profiles.json"), "local-openweight");
  EXPECT_EQ(local.style, BodyStyle::completion);
  EXPECT_EQ(local.defaults.temperature, 0.3);
  EXPECT_EQ(local.path, "/v1/completions");
  EXPECT_THROW(load_profile(source_path("data/providers/profiles.json"), "nope"), ValidationError);
  EXPECT_THROW(profile_from_json("x", json{{"base_url", "http://h"}, {"style", "rpc"}}), ValidationError);
}

// Contract of the embedding sidecar, exercised against an in-process fake.
class SidecarContract : public ::testing::Test {
 protected:
  void SetUp() override {
    fake.server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      if (loading) {
        res.status = 503;
        res.set_content(R"({"status":"loading"})", "application/json");
        return;
      }
      res.set_content(json{{"status", "ready"}, {"model", "bert-large-nli-mean-tokens"}, {"dim", dim}}.dump(), "application/json");
    });
    fake.server.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      last = json::parse(req.body);
      json vectors = json::array();
      HashEmbedder e(static_cast<std::size_t>(dim));
      for (const auto& t : last["texts"]) vectors.push_back(e.vector_for(t.get<std::string>()));
      if (ragged && vectors.size() > 1) vectors[1].erase(vectors[1].end() - 1);
      res.set_content(json{{"vectors", vectors}, {"model", reply_model.empty() ? last["model"] : json(reply_model)},
                           {"dim", dim + dim_skew}}.dump(),
                      "application/json");
    });
    fake.start();
  }

  FakeServer fake;
  bool loading = false;
  bool ragged = false;
  int dim = 1024;
  int dim_skew = 0;
  std::string reply_model;
  json last;
};

TEST_F(SidecarContract, EmbedRequestAndReplyShape) {
  SidecarEmbedder sidecar(fake.url());
  const auto batch = sidecar.embed({"hello", "hello", "world"});
  EXPECT_EQ(last["texts"], json({"hello", "hello", "world"}));
  EXPECT_EQ(last["model"], "bert-large-nli-mean-tokens");
  ASSERT_EQ(batch.vectors.size(), 3u);
  EXPECT_EQ(batch.vectors[0], batch.vectors[1]);
  EXPECT_EQ(batch.vectors[0].size(), 1024u);
  EXPECT_EQ(sidecar.embed({"hello"}).vectors[0], batch.vectors[0]);
  EXPECT_TRUE(sidecar.remote());
}

TEST_F(SidecarContract, HealthDimMatchesEmbed) {
  SidecarEmbedder sidecar(fake.url());
  const auto h = sidecar.health();
  EXPECT_EQ(h.status, "ready");
  EXPECT_EQ(h.dim, sidecar.embed({"x"}).vectors[0].size());
  loading = true;
  EXPECT_THROW(sidecar.health(), TransientError);
}

TEST_F(SidecarContract, InconsistentRepliesRejected) {
  SidecarEmbedder sidecar(fake.url(), "other-model");
  reply_model = "bert-large-nli-mean-tokens";
  EXPECT_THROW(sidecar.embed({"x"}), ProviderError);
  reply_model.clear();
  dim_skew = 1;
  EXPECT_THROW(sidecar.embed({"x"}), DimensionError);
  dim_skew = 0;
  ragged = true;
  EXPECT_THROW(sidecar.embed({"x", "y"}), DimensionError);
  EXPECT_THROW(sidecar.embed({}), ValidationError);
}

TEST_F(SidecarContract, WorksThroughEmbeddingGatewayAndUri) {
  auto provider = make_embedding_provider("sidecar:" + fake.url() + "?model=bert-large-nli-mean-tokens");
  EXPECT_EQ(provider->id(), "sidecar:" + fake.url() + "?model=bert-large-nli-mean-tokens");
  EmbeddingGateway gateway(provider, nullptr);
  EXPECT_EQ(gateway.embed({"a", "b"}).vectors.size(), 2u);
}
