#pragma once
// Experiment runs: dataset -> split -> providers -> predictions JSONL plus a
// manifest sufficient to replay the run against the same cache.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sumask/dataset.hpp"
#include "sumask/evaluation.hpp"
#include "sumask/http_providers.hpp"
#include "sumask/mapping.hpp"
#include "sumask/mock_providers.hpp"
#include "sumask/pipeline.hpp"
#include "sumask/response_cache.hpp"

namespace sumask {

inline constexpr const char* kToolVersion = "0.1.0";

enum class Method { sumask, vanilla, relation_accuracy };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::sumask: return "sumask";
    case Method::vanilla: return "vanilla";
    case Method::relation_accuracy: return "relation-accuracy";
  }
  return "sumask";
}

inline Method method_from_string(std::string_view s) {
  if (s == "sumask") return Method::sumask;
  if (s == "vanilla") return Method::vanilla;
  if (s == "relation-accuracy") return Method::relation_accuracy;
  throw ValidationError("method", "unknown method '" + std::string(s) + "'");
}

struct RunOptions {
  Method method = Method::sumask;
  std::string dataset;
  std::string descriptor;  // empty: schema inferred from the data
  std::string nota;        // NoTA id when the schema is inferred
  std::optional<std::size_t> m;
  std::optional<std::size_t> sample_size;
  std::string provider = "mock:oracle";
  std::string embedder = "mock:hash?dim=16";
  std::string profiles;  // provider profiles file for http: URIs
  std::string mapping;
  std::string templates;  // question templates: questions are not generated
  std::string prompts;    // prompt registry; empty = built-in
  std::string cache_dir;  // empty = no cache
  bool cache_fsync = true;
  bool emit_raw = false;
  bool prompt_packing = false;
  double requests_per_minute = 0.0;
  int max_retries = 4;
  PipelineConfig pipeline;
  std::string out = "predictions.jsonl";
  std::string manifest;  // empty = <out stem>.manifest.json
};

inline std::string sibling_path(const std::string& out, const char* suffix) {
  return std::filesystem::path(out).replace_extension(suffix).string();
}

inline std::string manifest_path(const RunOptions& o) { return o.manifest.empty() ? sibling_path(o.out, ".manifest.json") : o.manifest; }

// The evaluated split, written next to the predictions.
inline std::string gold_path(const RunOptions& o) { return sibling_path(o.out, ".gold.jsonl"); }

inline json options_to_json(const RunOptions& o) {
  json j{{"method", to_string(o.method)},
         {"dataset", o.dataset},
         {"descriptor", o.descriptor},
         {"nota", o.nota},
         {"provider", o.provider},
         {"embedder", o.embedder},
         {"profiles", o.profiles},
         {"mapping", o.mapping},
         {"templates", o.templates},
         {"prompts", o.prompts},
         {"cache_dir", o.cache_dir},
         {"cache_fsync", o.cache_fsync},
         {"emit_raw", o.emit_raw},
         {"prompt_packing", o.prompt_packing},
         {"requests_per_minute", o.requests_per_minute},
         {"max_retries", o.max_retries},
         {"pipeline", to_json_config(o.pipeline)},
         {"out", o.out},
         {"manifest", o.manifest}};
  j["m"] = o.m ? json(*o.m) : json(nullptr);
  j["sample_size"] = o.sample_size ? json(*o.sample_size) : json(nullptr);
  return j;
}

// Missing keys keep the values already in `o`, so config files may be partial.
inline RunOptions options_from_json(const json& j, RunOptions o = {}) {
  if (j.contains("method")) o.method = method_from_string(j["method"].get<std::string>());
  auto str = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j[key].get<std::string>();
  };
  str("dataset", o.dataset);
  str("descriptor", o.descriptor);
  str("nota", o.nota);
  str("provider", o.provider);
  str("embedder", o.embedder);
  str("profiles", o.profiles);
  str("mapping", o.mapping);
  str("templates", o.templates);
  str("prompts", o.prompts);
  str("cache_dir", o.cache_dir);
  str("out", o.out);
  str("manifest", o.manifest);
  auto size = [&](const char* key, std::optional<std::size_t>& field) {
    if (!j.contains(key)) return;
    if (j[key].is_null())
      field.reset();
    else
      field = j[key].get<std::size_t>();
  };
  size("m", o.m);
  size("sample_size", o.sample_size);
  o.cache_fsync = j.value("cache_fsync", o.cache_fsync);
  o.emit_raw = j.value("emit_raw", o.emit_raw);
  o.prompt_packing = j.value("prompt_packing", o.prompt_packing);
  o.requests_per_minute = j.value("requests_per_minute", o.requests_per_minute);
  o.max_retries = j.value("max_retries", o.max_retries);
  if (j.contains("pipeline")) o.pipeline = config_from_json(j["pipeline"], o.pipeline);
  return o;
}

// --- provider URIs ----------------------------------------------------------

struct ProviderUri {
  std::string scheme;
  std::string name;
  std::map<std::string, std::string> params;
};

// "scheme:name?k=v&k2=v2"
inline ProviderUri parse_provider_uri(const std::string& uri) {
  const auto colon = uri.find(':');
  if (colon == std::string::npos || colon == 0) throw ValidationError("provider", "expected scheme:name, got '" + uri + "'");
  ProviderUri u;
  u.scheme = uri.substr(0, colon);
  auto rest = uri.substr(colon + 1);
  const auto q = rest.find('?');
  u.name = rest.substr(0, q);
  if (q != std::string::npos) {
    std::stringstream query(rest.substr(q + 1));
    std::string item;
    while (std::getline(query, item, '&')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ValidationError("provider", "malformed parameter '" + item + "'");
      u.params[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  return u;
}

inline double param_double(const ProviderUri& u, const std::string& key, double fallback) {
  auto it = u.params.find(key);
  if (it == u.params.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("provider", "parameter " + key + " is not a number: '" + it->second + "'");
  }
}

inline std::uint64_t param_u64(const ProviderUri& u, const std::string& key, std::uint64_t fallback) {
  auto it = u.params.find(key);
  if (it == u.params.end()) return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("provider", "parameter " + key + " is not an unsigned integer: '" + it->second + "'");
  }
}

inline std::string resolve_profiles_path(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("SUMASK_PROFILES")) return env;
  return "data/providers/profiles.json";
}

// Gold-aware mocks see the instances and schema of the run.
inline std::shared_ptr<CompletionProvider> make_completion_provider(const std::string& uri, const std::vector<Instance>& instances,
                                                                    const RelationSchema& schema, std::uint64_t seed,
                                                                    const std::string& profiles = "") {
  const auto u = parse_provider_uri(uri);
  if (u.scheme == "mock") {
    if (u.name == "oracle") return std::make_shared<OracleProvider>(instances, schema, OracleProvider::Mode::oracle);
    if (u.name == "ambiguous") return std::make_shared<OracleProvider>(instances, schema, OracleProvider::Mode::ambiguous);
    if (u.name == "noise") {
      const double p = param_double(u, "p", 0.0);
      if (p < 0.0 || p > 1.0) throw ValidationError("provider", "noise p must lie in [0, 1]");
      return std::make_shared<OracleProvider>(instances, schema, OracleProvider::Mode::noise, p, param_u64(u, "seed", seed));
    }
    if (u.name == "script") {
      auto it = u.params.find("file");
      if (it == u.params.end()) throw ValidationError("provider", "mock:script needs ?file=<script.json>");
      return ScriptedProvider::load(it->second);
    }
    throw ValidationError("provider", "unknown mock '" + u.name + "'");
  }
  if (u.scheme == "http") return std::make_shared<HttpCompletionProvider>(load_profile(resolve_profiles_path(profiles), u.name));
  throw ValidationError("provider", "unknown provider scheme '" + u.scheme + "'");
}

inline std::shared_ptr<EmbeddingProvider> make_embedding_provider(const std::string& uri) {
  const auto u = parse_provider_uri(uri);
  if (u.scheme == "mock" && u.name == "hash") return std::make_shared<HashEmbedder>(static_cast<std::size_t>(param_u64(u, "dim", 16)));
  if (u.scheme == "sidecar") {
    auto model = u.params.count("model") ? u.params.at("model") : std::string(SidecarEmbedder::kDefaultModel);
    return std::make_shared<SidecarEmbedder>(u.name, model, param_double(u, "timeout", 60.0));
  }
  throw ValidationError("embedder", "unknown embedder '" + uri + "'");
}

// --- the run ----------------------------------------------------------------

struct CallAccounting {
  std::size_t pairs = 0;
  std::size_t candidate_total = 0;
  std::array<std::size_t, 4> expected_by_stage{};  // indexed by Stage

  void add_chains(const PipelineConfig& cfg, bool templated, std::size_t candidates) {
    ++pairs;
    candidate_total += candidates;
    if (candidates == 0) return;
    const auto k = static_cast<std::size_t>(cfg.k);
    if (cfg.summarize) expected_by_stage[static_cast<std::size_t>(Stage::summarize)] += k;
    if (!templated) expected_by_stage[static_cast<std::size_t>(Stage::question)] += k * candidates;
    expected_by_stage[static_cast<std::size_t>(Stage::answer)] += k * candidates;
  }
};

struct RunResult {
  std::size_t instances = 0;
  std::size_t scored = 0;
  std::size_t errored = 0;
  std::string status = "ok";
  GatewayCounters calls;
  std::size_t embedding_calls = 0;
  std::size_t embedding_cache_hits = 0;
  bool remote = false;
  json manifest;
};

inline std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

inline void write_json_file(const std::string& path, const json& j) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline json prediction_line(const Instance& instance, Method method, const std::string& prompt_version) {
  return json{{"instance_id", instance.id}, {"method", to_string(method)}, {"status", "ok"}, {"prompt_version", prompt_version}};
}

// Runs the experiment described by `o`. The manifest is written on every
// path; after writing it, failures are rethrown for the caller to map onto
// exit codes. Predictions are flushed line by line so partial output
// survives an aborted run.
inline RunResult run_experiment(const RunOptions& o) {
  RunResult result;
  json manifest{{"tool", "sumask"}, {"tool_version", kToolVersion}, {"options", options_to_json(o)}, {"started_at", utc_timestamp()}};
  const auto mpath = manifest_path(o);
  CallAccounting accounting;
  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<EmbeddingGateway> embeddings;

  auto finish = [&](const std::string& status, const std::string& error) {
    result.status = status;
    manifest["status"] = status;
    if (!error.empty()) manifest["error"] = error;
    manifest["finished_at"] = utc_timestamp();
    if (gateway) result.calls = gateway->counters();
    if (embeddings) {
      result.embedding_calls = embeddings->provider_calls();
      result.embedding_cache_hits = embeddings->cache_hits();
    }
    manifest["counts"] = {{"instances", result.instances},
                          {"scored", result.scored},
                          {"errored", result.errored},
                          {"provider_calls", result.calls.provider_calls},
                          {"cache_hits", result.calls.cache_hits},
                          {"requested", result.calls.requested},
                          {"retries", result.calls.retries},
                          {"embedding_calls", result.embedding_calls},
                          {"embedding_cache_hits", result.embedding_cache_hits}};
    manifest["calls"] = to_json_counters(result.calls);
    const double r_hat =
        accounting.pairs ? static_cast<double>(accounting.candidate_total) / static_cast<double>(accounting.pairs) : 0.0;
    manifest["accounting"] = {{"pairs", accounting.pairs},
                              {"candidate_total", accounting.candidate_total},
                              {"r_hat", r_hat},
                              {"k_times_candidates", static_cast<std::size_t>(o.pipeline.k) * accounting.candidate_total},
                              {"expected_requested_by_stage",
                               {{"vanilla", accounting.expected_by_stage[0]},
                                {"summarize", accounting.expected_by_stage[1]},
                                {"question", accounting.expected_by_stage[2]},
                                {"answer", accounting.expected_by_stage[3]}}}};
    manifest["remote_providers"] = result.remote;
    result.manifest = manifest;
    write_json_file(mpath, manifest);
  };

  try {
    validate_config(o.pipeline);
    if (o.dataset.empty()) throw ValidationError("dataset", "no dataset given");
    const auto& cfg = o.pipeline;

    // Dataset and split.
    DatasetDescriptor descriptor;
    std::vector<Instance> instances;
    std::vector<std::string> warnings;
    if (!o.descriptor.empty()) {
      descriptor = load_descriptor(o.descriptor);
      auto loaded = load(descriptor, o.dataset);
      instances = std::move(loaded.instances);
      warnings = std::move(loaded.warnings);
    } else {
      instances = read_jsonl(o.dataset);
      descriptor.name = std::filesystem::path(o.dataset).stem().string();
      descriptor.schema = infer_schema(instances, o.nota.empty() ? std::nullopt : std::optional<std::string>(o.nota));
      descriptor.task = cfg.mode == ExtractionMode::overlapping ? TaskKind::multi_triple : TaskKind::single_label;
      for (auto& in : instances) in = validate_instance(std::move(in), descriptor.schema);
    }
    manifest["dataset"] = {{"name", descriptor.name},
                           {"path", o.dataset},
                           {"sha256", file_sha256(o.dataset)},
                           {"loaded", instances.size()},
                           {"warnings", warnings}};

    std::vector<RelationLabel> run_labels;
    if (o.m) {
      const auto selected = select_unseen(descriptor.schema, *o.m, cfg.seed);
      instances = restrict_to_relations(instances, selected);
      run_labels = selected;
      if (const auto* nota = descriptor.schema.nota()) run_labels.push_back(*nota);
    } else {
      run_labels = descriptor.schema.labels();
    }
    const RelationSchema run_schema(run_labels);
    if (o.sample_size) instances = stratified_sample(instances, *o.sample_size, cfg.seed);
    instances = sorted_by_id(std::move(instances));

    json selected_ids = json::array();
    for (const auto& l : run_schema.non_nota()) selected_ids.push_back(l.id);
    {
      const auto parent = std::filesystem::path(o.out).parent_path();
      if (!parent.empty()) std::filesystem::create_directories(parent);
    }
    export_jsonl(instances, gold_path(o));
    manifest["split"] = {{"gold", gold_path(o)},
                         {"m", o.m ? json(*o.m) : json(nullptr)},
                         {"relations", selected_ids},
                         {"sample_size", o.sample_size ? json(*o.sample_size) : json(nullptr)},
                         {"seed", cfg.seed},
                         {"instances", instances.size()}};
    result.instances = instances.size();

    // Prompts, templates, mapping.
    const PromptRegistry registry = o.prompts.empty() ? PromptRegistry::builtin() : PromptRegistry::load(o.prompts);
    std::optional<TemplateSet> templates;
    if (!o.templates.empty()) templates = TemplateSet::load(o.templates);
    std::optional<MappingTable> mapping;
    if (!o.mapping.empty()) mapping = MappingTable::load(o.mapping, descriptor.schema);
    manifest["prompt_version"] = registry.version();

    // Providers.
    auto completion = make_completion_provider(o.provider, instances, run_schema, cfg.seed, o.profiles);
    auto embedder = make_embedding_provider(o.embedder);
    result.remote = completion->remote() || embedder->remote();
    manifest["providers"] = {{"completion", completion->id()}, {"embedding", embedder->id()}};
    std::shared_ptr<const ResponseCache> cache;
    if (!o.cache_dir.empty()) cache = std::make_shared<ResponseCache>(o.cache_dir, o.cache_fsync);
    GatewayOptions gopts;
    gopts.max_retries = o.max_retries;
    gopts.requests_per_minute = o.requests_per_minute;
    gopts.prompt_packing = o.prompt_packing;
    gopts.max_in_flight = std::max(1, cfg.max_parallel);
    gopts.registry_version = registry.version();
    gateway = std::make_unique<Gateway>(completion, cache, gopts);
    embeddings = std::make_unique<EmbeddingGateway>(embedder, cache);
    PipelineContext ctx{*gateway, *embeddings, run_schema, registry, templates ? &*templates : nullptr};

    const MappingTable all_relations({}, DefaultPolicy::all, run_schema);
    const MappingTable& table = mapping ? *mapping : all_relations;
    auto candidates_of = [&](const Instance& instance, EntityPair pair) {
      return candidates_for(instance.entities[pair.subject].type, instance.entities[pair.object].type, table, run_schema);
    };

    std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + o.out + "'");

    for (const auto& instance : instances) {
      json line = prediction_line(instance, o.method, registry.version());
      try {
        json pairs = json::array(), raw = json::array();
        if (o.method == Method::relation_accuracy) {
          json gold_chains = json::array();
          for (const auto& triple : instance.gold_triples) {
            const auto& label = run_schema.at(triple.relation);
            if (label.is_nota) continue;
            accounting.add_chains(cfg, templates.has_value(), 1);
            const auto set = run_chains(instance, {triple.subject, triple.object}, label, cfg, ctx);
            gold_chains.push_back({{"subject", triple.subject},
                                   {"object", triple.object},
                                   {"relation", label.id},
                                   {"vote", to_string(set.vote)},
                                   {"yes", set.count(Verdict::yes)},
                                   {"no", set.count(Verdict::no)},
                                   {"abstain", set.count(Verdict::abstain)}});
            if (o.emit_raw) raw.push_back(chains_to_json({set}));
          }
          line["gold_chains"] = gold_chains;
        } else if (cfg.mode == ExtractionMode::overlapping) {
          if (o.method == Method::vanilla) throw ValidationError("method", "vanilla supports classification mode only");
          for (const auto& pair : query_pairs(instance, ExtractionMode::overlapping))
            accounting.add_chains(cfg, templates.has_value(), candidates_of(instance, pair).size());
          for (auto& r : extract_overlapping(instance, cfg, ctx, table)) {
            pairs.push_back(r.prediction);
            if (o.emit_raw && !r.chainsets.empty()) raw.push_back(chains_to_json(r.chainsets));
          }
        } else {
          const auto pair = classification_pair(instance);
          const auto candidates = candidates_of(instance, pair);
          if (candidates.empty()) {
            Prediction p;
            p.instance_id = instance.id;
            p.pair = pair;
            const auto* nota = run_schema.nota();
            p.predicted = {nota ? nota->id : RelationLabel::invalid_output().id};
            p.notes.push_back("no candidate relation for this type pair");
            accounting.add_chains(cfg, templates.has_value(), 0);
            pairs.push_back(p);
          } else if (o.method == Method::vanilla) {
            ++accounting.pairs;
            accounting.candidate_total += candidates.size();
            ++accounting.expected_by_stage[static_cast<std::size_t>(Stage::vanilla)];
            auto r = vanilla_classify(instance, pair, candidates, cfg, ctx);
            pairs.push_back(r.prediction);
            if (o.emit_raw) raw.push_back(*r.vanilla_raw);
          } else {
            accounting.add_chains(cfg, templates.has_value(), candidates.size());
            auto r = classify_pair(instance, pair, candidates, cfg, ctx);
            pairs.push_back(r.prediction);
            if (o.emit_raw) raw.push_back(chains_to_json(r.chainsets));
          }
        }
        if (o.method != Method::relation_accuracy) line["pairs"] = pairs;
        if (o.emit_raw) line["raw"] = raw;
        ++result.scored;
      } catch (const AuthError&) {
        throw;
      } catch (const ProviderError& e) {
        line["status"] = "errored";
        line["error"] = e.what();
        ++result.errored;
      } catch (const DimensionError& e) {
        line["status"] = "errored";
        line["error"] = e.what();
        ++result.errored;
      }
      out << line.dump() << '\n';
      out.flush();
    }
    finish("ok", "");
  } catch (const AuthError& e) {
    finish("auth-failure", e.what());
    throw;
  } catch (const std::exception& e) {
    finish("failed", e.what());
    throw;
  }
  return result;
}

// --- reading predictions back -------------------------------------------------

struct PredictionFile {
  std::vector<ScoredInstance> instances;
  std::map<std::string, RelationAccuracy> relation_accuracy;
  std::size_t relation_accuracy_errored = 0;
  bool has_relation_accuracy = false;
};

inline PredictionFile read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open predictions '" + path + "'");
  PredictionFile f;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (canonical_whitespace(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    ScoredInstance s;
    s.id = j.at("instance_id").get<std::string>();
    s.errored = j.value("status", std::string("ok")) != "ok";
    if (j.contains("pairs")) s.pairs = j["pairs"].get<std::vector<Prediction>>();
    if (j.contains("gold_chains")) {
      f.has_relation_accuracy = true;
      for (const auto& c : j["gold_chains"]) {
        auto& acc = f.relation_accuracy[c.at("relation").get<std::string>()];
        ++acc.total;
        acc.yes += c.at("vote").get<std::string>() == "yes";
      }
    } else if (s.errored && j.value("method", std::string()) == "relation-accuracy") {
      ++f.relation_accuracy_errored;
    }
    f.instances.push_back(std::move(s));
  }
  return f;
}

}  // namespace sumask
