#pragma once
// Deterministic in-process providers for tests and offline runs.
//
// Every mock is sample-index deterministic: the text for sample i depends
// only on (prompt, seed, i).

#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "sumask/gateway.hpp"
#include "sumask/hashing.hpp"

namespace sumask {

// Replies from a script: exact prompt text or its sha256 digest maps to a
// list of replies indexed by sample (cycled); per-stage and global defaults.
class ScriptedProvider : public CompletionProvider {
 public:
  struct Script {
    std::map<std::string, std::vector<std::string>> by_prompt;
    std::map<std::string, std::vector<std::string>> by_hash;
    std::map<Stage, std::vector<std::string>> by_stage;
    std::vector<std::string> fallback;
  };

  explicit ScriptedProvider(Script script, std::string id = "mock:script") : script_(std::move(script)), id_(std::move(id)) {}

  static Script script_from_json(const json& j) {
    Script s;
    if (j.contains("prompts")) s.by_prompt = j["prompts"].get<std::map<std::string, std::vector<std::string>>>();
    if (j.contains("hashes")) s.by_hash = j["hashes"].get<std::map<std::string, std::vector<std::string>>>();
    if (j.contains("stages"))
      for (const auto& [stage, replies] : j["stages"].items()) s.by_stage[stage_from_string(stage)] = replies.get<std::vector<std::string>>();
    if (j.contains("default")) s.fallback = j["default"].get<std::vector<std::string>>();
    return s;
  }

  static std::shared_ptr<ScriptedProvider> load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open mock script '" + path + "'");
    return std::make_shared<ScriptedProvider>(script_from_json(json::parse(in)), "mock:script?file=" + path);
  }

  std::string id() const override { return id_; }

  std::string complete_one(const CompletionRequest& request, int sample_index) override {
    calls_.fetch_add(1);
    const std::vector<std::string>* replies = nullptr;
    if (auto it = script_.by_prompt.find(request.prompt.text); it != script_.by_prompt.end())
      replies = &it->second;
    else if (auto h = script_.by_hash.find(sha256_hex(request.prompt.text)); h != script_.by_hash.end())
      replies = &h->second;
    else if (auto s = script_.by_stage.find(request.prompt.stage); s != script_.by_stage.end())
      replies = &s->second;
    else if (!script_.fallback.empty())
      replies = &script_.fallback;
    if (!replies || replies->empty()) throw ProviderError("mock script has no reply for prompt");
    return (*replies)[static_cast<std::size_t>(sample_index) % replies->size()];
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  Script script_;
  std::string id_;
  std::atomic<std::size_t> calls_{0};
};

// Wraps a callable; handy for hand-built test scenarios.
class FunctionProvider : public CompletionProvider {
 public:
  using Fn = std::function<std::string(const CompletionRequest&, int)>;
  FunctionProvider(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string id() const override { return id_; }
  std::string complete_one(const CompletionRequest& request, int sample_index) override {
    calls_.fetch_add(1);
    return fn_(request, sample_index);
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  std::string id_;
  Fn fn_;
  std::atomic<std::size_t> calls_{0};
};

// Gold-aware oracle. Summaries and questions are canned text carrying short
// tags (hash of the sentence, hash of the triple), so the answer stage can
// tell whether the question came from a gold triple of the summarized
// sentence without keeping any state between calls.
//
// Modes:
//  - oracle:    "Yes." exactly for gold triples, otherwise "No."
//  - noise p:   oracle verdicts, each answer flipped with probability p;
//               the flip draw is a pure function of (seed, prompt, sample)
//  - ambiguous: additionally answers yes for one decoy relation per gold
//               triple (the next non-NoTA relation in schema order). Gold
//               chains are identical across samples; decoy questions and
//               answers vary by sample, so dispersion separates them.
class OracleProvider : public CompletionProvider {
 public:
  enum class Mode { oracle, noise, ambiguous };

  OracleProvider(const std::vector<Instance>& instances, const RelationSchema& schema, Mode mode = Mode::oracle,
                 double flip_probability = 0.0, std::uint64_t seed = 0)
      : mode_(mode), p_(flip_probability), seed_(seed) {
    const auto labels = schema.non_nota();
    for (const auto& instance : instances) {
      const auto s = sentence_tag(instance.text);
      for (const auto& triple : instance.gold_triples) {
        const auto& label = schema.at(triple.relation);
        if (label.is_nota) continue;
        const auto& subject = instance.entities.at(triple.subject).surface;
        const auto& object = instance.entities.at(triple.object).surface;
        const auto tag = triple_tag(subject, label.display_name, object);
        gold_.insert(s + "|" + tag);
        gold_triples_.insert(tag);
        vanilla_gold_[vanilla_key(instance.text, subject, object)] = label.display_name;
        if (mode_ == Mode::ambiguous && labels.size() > 1) {
          std::size_t pos = 0;
          while (labels[pos].id != label.id) ++pos;
          const auto& decoy = labels[(pos + 1) % labels.size()];
          const auto decoy_tag = triple_tag(subject, decoy.display_name, object);
          decoy_.insert(s + "|" + decoy_tag);
          decoy_triples_.insert(decoy_tag);
        }
      }
    }
  }

  std::string id() const override {
    switch (mode_) {
      case Mode::oracle: return "mock:oracle";
      case Mode::ambiguous: return "mock:ambiguous";
      case Mode::noise: break;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "mock:noise?p=%.6f&seed=%llu", p_, static_cast<unsigned long long>(seed_));
    return buf;
  }

  std::string complete_one(const CompletionRequest& request, int sample_index) override {
    calls_.fetch_add(1);
    const auto& slots = request.prompt.slots;
    if (auto packed = slots.find("packed_count"); packed != slots.end()) {
      const int count = std::stoi(packed->second);
      std::string reply;
      for (int j = 0; j < count; ++j)
        reply += std::string(kPackedDelimiter) + std::to_string(j + 1) + "\n" + reply_for(request, sample_index + j) + "\n";
      return reply;
    }
    return reply_for(request, sample_index);
  }

  std::size_t calls() const { return calls_.load(); }

  static std::string sentence_tag(std::string_view text) { return sha256_hex(text).substr(0, 16); }
  static std::string triple_tag(std::string_view subject, std::string_view relation, std::string_view object) {
    std::string joined(subject);
    joined.append("\x1f").append(relation).append("\x1f").append(object);
    return sha256_hex(joined).substr(0, 16);
  }

 private:
  static std::string vanilla_key(std::string_view text, std::string_view subject, std::string_view object) {
    return std::string(text) + "\x1f" + std::string(subject) + "\x1f" + std::string(object);
  }

  static std::string extract_tag(const std::string& text, std::string_view marker) {
    const auto pos = text.rfind(marker);
    if (pos == std::string::npos) return {};
    const auto end = text.find(']', pos);
    if (end == std::string::npos) return {};
    return text.substr(pos + marker.size(), end - pos - marker.size());
  }

  bool flipped(const CompletionRequest& request, int sample_index) const {
    if (mode_ != Mode::noise || p_ <= 0.0) return false;
    const auto h = hash_combine(stable_hash64(request.prompt.text, seed_), static_cast<std::uint64_t>(sample_index));
    return unit_interval(h) < p_;
  }

  std::string reply_for(const CompletionRequest& request, int i) const {
    const auto& slots = request.prompt.slots;
    auto slot = [&slots](const char* name) -> std::string {
      auto it = slots.find(name);
      return it == slots.end() ? std::string() : it->second;
    };
    switch (request.prompt.stage) {
      case Stage::summarize:
        return "\"" + slot("subject") + "\" and \"" + slot("object") + "\" are discussed together in the context (reading " +
               std::to_string(i) + "). [s:" + sentence_tag(slot("context")) + "]";
      case Stage::question: {
        const auto tag = triple_tag(slot("subject"), slot("relation"), slot("object"));
        std::string q = "Does the relation \"" + slot("relation") + "\" hold from \"" + slot("subject") + "\" to \"" +
                        slot("object") + "\"?";
        if (decoy_triples_.count(tag) != 0 && gold_triples_.count(tag) == 0) q += " (phrasing " + std::to_string(i) + ")";
        return q + " [q:" + tag + "]";
      }
      case Stage::answer: {
        const auto context = slot("summarization");
        auto s = extract_tag(context, "[s:");
        if (s.empty()) s = sentence_tag(context);
        const auto q = extract_tag(slot("question"), "[q:");
        const auto key = s + "|" + q;
        const bool gold = !q.empty() && gold_.count(key) != 0;
        const bool decoy = !gold && !q.empty() && decoy_.count(key) != 0;
        bool yes = gold || decoy;
        if (flipped(request, i)) yes = !yes;
        if (decoy && yes) return "Yes, the context suggests so (reading " + std::to_string(i) + ").";
        return yes ? "Yes." : "No.";
      }
      case Stage::vanilla: {
        auto it = vanilla_gold_.find(vanilla_key(slot("context"), slot("subject"), slot("object")));
        return it == vanilla_gold_.end() ? "none of the above" : it->second;
      }
    }
    return "No.";
  }

  Mode mode_;
  double p_;
  std::uint64_t seed_;
  std::unordered_set<std::string> gold_;
  std::unordered_set<std::string> decoy_;
  std::unordered_set<std::string> gold_triples_;
  std::unordered_set<std::string> decoy_triples_;
  std::map<std::string, std::string> vanilla_gold_;
  std::atomic<std::size_t> calls_{0};
};

// Feature-hashing embedder: lowercase word tokens hashed into `dim` signed
// buckets, L2-normalized. A pure function of the text bytes.
class HashEmbedder : public EmbeddingProvider {
 public:
  explicit HashEmbedder(std::size_t dim = 16) : dim_(dim) {
    if (dim_ == 0) throw ValidationError("dim", "must be positive");
  }

  std::string id() const override { return "mock:hash?dim=" + std::to_string(dim_); }

  std::vector<double> vector_for(std::string_view text) const {
    std::vector<double> v(dim_, 0.0);
    auto add = [&](std::string_view token) {
      const auto h = stable_hash64(token);
      v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    };
    const auto lowered = ascii_lower(text);
    std::size_t start = std::string::npos;
    bool any = false;
    for (std::size_t i = 0; i <= lowered.size(); ++i) {
      const bool word = i < lowered.size() && (std::isalnum(static_cast<unsigned char>(lowered[i])) ||
                                                static_cast<unsigned char>(lowered[i]) >= 0x80);
      if (word && start == std::string::npos) start = i;
      if (!word && start != std::string::npos) {
        add(std::string_view(lowered).substr(start, i - start));
        any = true;
        start = std::string::npos;
      }
    }
    if (!any) add(text);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0)
      for (double& x : v) x /= std::sqrt(norm);
    return v;
  }

  EmbeddingBatch embed(const std::vector<std::string>& texts) override {
    calls_.fetch_add(texts.size());
    EmbeddingBatch batch;
    for (const auto& t : texts) batch.vectors.push_back(vector_for(t));
    return batch;
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::size_t dim_;
  std::atomic<std::size_t> calls_{0};
};

// Looks vectors up in a fixed table; unknown text is an error.
class TableEmbedder : public EmbeddingProvider {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<double>> table, std::string id = "mock:table")
      : table_(std::move(table)), id_(std::move(id)) {}
  std::string id() const override { return id_; }
  EmbeddingBatch embed(const std::vector<std::string>& texts) override {
    EmbeddingBatch batch;
    for (const auto& t : texts) {
      auto it = table_.find(t);
      if (it == table_.end()) throw ProviderError("no table embedding for '" + t + "'");
      batch.vectors.push_back(it->second);
    }
    return batch;
  }

 private:
  std::map<std::string, std::vector<double>> table_;
  std::string id_;
};

}  // namespace sumask
