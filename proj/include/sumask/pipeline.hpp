#pragma once
// SumAsk chains and the Vanilla baseline.
//
// For a pair (subject, object) and candidate relation r, k chains are drawn:
//   summary_i  ~ summarize(sentence, subject, object)   shared by all r
//   question_i ~ rewrite((subject, r, object))           triple only
//   answer_i   ~ answer(summary_i, question_i)           sample index i
// The relation's vote is the majority verdict, abstain counting as no.
// Among yes-voted relations, classification keeps the one minimizing
// u1 * u2 * u3, the dispersions of the summary, question and answer samples.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sumask/core.hpp"
#include "sumask/dispersion.hpp"
#include "sumask/gateway.hpp"
#include "sumask/hashing.hpp"
#include "sumask/mapping.hpp"
#include "sumask/parallel.hpp"
#include "sumask/prompting.hpp"

namespace sumask {

enum class Chaining { aligned, broadcast_best };

inline std::string_view to_string(Chaining c) { return c == Chaining::aligned ? "aligned" : "broadcast-best"; }

inline Chaining chaining_from_string(std::string_view s) {
  if (s == "aligned") return Chaining::aligned;
  if (s == "broadcast-best") return Chaining::broadcast_best;
  throw ValidationError("chaining", "unknown chaining '" + std::string(s) + "'");
}

struct PipelineConfig {
  int k = 5;
  Distance distance = Distance::euclidean;
  ExtractionMode mode = ExtractionMode::classification;
  bool strict_yes_no = false;
  int max_parallel = 1;
  Chaining chaining = Chaining::aligned;
  bool summarize = true;         // false: answer from the raw sentence
  bool use_uncertainty = true;   // false: seeded random choice among yes votes
  std::optional<double> max_product;  // overlapping mode: drop yes votes above this
  std::uint64_t seed = 0;
  double temperature = 0.7;
  int max_tokens = 256;
  std::string model_id;
};

inline void validate_config(const PipelineConfig& cfg) {
  if (cfg.k < 1) throw ValidationError("k", "must be positive");
  if (cfg.max_parallel < 1) throw ValidationError("max_parallel", "must be positive");
  if (cfg.max_product && *cfg.max_product < 0.0) throw ValidationError("max_product", "must be non-negative");
}

inline json to_json_config(const PipelineConfig& cfg) {
  json j{{"k", cfg.k},
         {"distance", to_string(cfg.distance)},
         {"mode", to_string(cfg.mode)},
         {"strict_yes_no", cfg.strict_yes_no},
         {"max_parallel", cfg.max_parallel},
         {"chaining", to_string(cfg.chaining)},
         {"summarize", cfg.summarize},
         {"use_uncertainty", cfg.use_uncertainty},
         {"seed", cfg.seed},
         {"temperature", cfg.temperature},
         {"max_tokens", cfg.max_tokens},
         {"model_id", cfg.model_id}};
  j["max_product"] = cfg.max_product ? json(*cfg.max_product) : json(nullptr);
  return j;
}

inline PipelineConfig config_from_json(const json& j, PipelineConfig cfg = {}) {
  cfg.k = j.value("k", cfg.k);
  if (j.contains("distance")) cfg.distance = distance_from_string(j["distance"].get<std::string>());
  if (j.contains("mode")) cfg.mode = mode_from_string(j["mode"].get<std::string>());
  cfg.strict_yes_no = j.value("strict_yes_no", cfg.strict_yes_no);
  cfg.max_parallel = j.value("max_parallel", cfg.max_parallel);
  if (j.contains("chaining")) cfg.chaining = chaining_from_string(j["chaining"].get<std::string>());
  cfg.summarize = j.value("summarize", cfg.summarize);
  cfg.use_uncertainty = j.value("use_uncertainty", cfg.use_uncertainty);
  if (j.contains("max_product")) {
    if (j["max_product"].is_null())
      cfg.max_product.reset();
    else
      cfg.max_product = j["max_product"].get<double>();
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
  cfg.model_id = j.value("model_id", cfg.model_id);
  validate_config(cfg);
  return cfg;
}

struct PipelineContext {
  Gateway& completions;
  EmbeddingGateway& embeddings;
  const RelationSchema& schema;
  const PromptRegistry& prompts = PromptRegistry::builtin();
  const TemplateSet* templates = nullptr;  // set: questions come from templates
};

struct Chain {
  int index = 0;
  std::string summarization;
  std::string question;
  std::string answer_raw;
  ParsedAnswer answer;
};

struct ChainSet {
  EntityPair pair;
  std::string relation;
  std::vector<Chain> chains;
  Verdict vote = Verdict::no;
  int k = 0;
  bool sampled_summaries = true;
  bool sampled_questions = true;

  int count(Verdict v) const {
    return static_cast<int>(std::count_if(chains.begin(), chains.end(), [v](const Chain& c) { return c.answer.verdict == v; }));
  }
};

// yes iff yes-count exceeds the combined no and abstain count; even ties go to no.
inline Verdict majority_vote(const std::vector<Verdict>& verdicts) {
  const auto yes = std::count(verdicts.begin(), verdicts.end(), Verdict::yes);
  return yes > static_cast<std::ptrdiff_t>(verdicts.size()) - yes ? Verdict::yes : Verdict::no;
}

inline CompletionRequest make_request(const PromptText& prompt, const PipelineConfig& cfg, int n_samples, int first_sample = 0) {
  CompletionRequest r;
  r.prompt = prompt;
  r.temperature = cfg.temperature;
  r.max_tokens = cfg.max_tokens;
  r.n_samples = n_samples;
  r.first_sample = first_sample;
  r.model_id = cfg.model_id;
  r.sample_seed = cfg.seed;
  return r;
}

// k summaries for a pair, independent of the candidate relation. With
// summarization disabled the raw sentence stands in for every sample.
inline std::vector<std::string> summarize_pair(const Instance& instance, EntityPair pair, const PipelineConfig& cfg,
                                               PipelineContext& ctx) {
  if (!cfg.summarize) return std::vector<std::string>(static_cast<std::size_t>(cfg.k), instance.text);
  const auto prompt = build_summarize_prompt(instance, instance.entities.at(pair.subject), instance.entities.at(pair.object), ctx.prompts);
  return ctx.completions.complete(make_request(prompt, cfg, cfg.k)).texts;
}

inline ChainSet run_chains(const Instance& instance, EntityPair pair, const RelationLabel& relation, const PipelineConfig& cfg,
                           PipelineContext& ctx, const std::vector<std::string>& summaries) {
  if (relation.is_nota) throw ValidationError("relation", "chains are never run for NoTA");
  if (summaries.size() != static_cast<std::size_t>(cfg.k)) throw ValidationError("summaries", "expected k summaries");

  const TripleText triple{instance.entities.at(pair.subject).surface, relation.id, relation.display_name,
                          instance.entities.at(pair.object).surface};
  std::vector<std::string> questions;
  if (ctx.templates) {
    questions.assign(static_cast<std::size_t>(cfg.k), ctx.templates->question_for(triple));
  } else {
    questions = ctx.completions.complete(make_request(build_question_prompt(triple, ctx.prompts), cfg, cfg.k)).texts;
  }

  ChainSet set;
  set.pair = pair;
  set.relation = relation.id;
  set.k = cfg.k;
  set.sampled_summaries = cfg.summarize;
  set.sampled_questions = ctx.templates == nullptr;
  std::vector<Verdict> verdicts;
  for (int i = 0; i < cfg.k; ++i) {
    Chain chain;
    chain.index = i;
    chain.summarization = summaries[static_cast<std::size_t>(i)];
    chain.question = questions[static_cast<std::size_t>(i)];
    const auto& context = cfg.chaining == Chaining::aligned ? chain.summarization : summaries.front();
    const auto prompt = build_answer_prompt(context, chain.question, cfg.strict_yes_no, ctx.prompts);
    chain.answer_raw = ctx.completions.complete(make_request(prompt, cfg, 1, i)).texts.front();
    chain.answer = parse_yes_no(chain.answer_raw);
    verdicts.push_back(chain.answer.verdict);
    set.chains.push_back(std::move(chain));
  }
  set.vote = majority_vote(verdicts);
  return set;
}

inline ChainSet run_chains(const Instance& instance, EntityPair pair, const RelationLabel& relation, const PipelineConfig& cfg,
                           PipelineContext& ctx) {
  return run_chains(instance, pair, relation, cfg, ctx, summarize_pair(instance, pair, cfg, ctx));
}

inline double stage_uncertainty(const std::vector<std::string>& texts, EmbeddingGateway& embeddings, Distance distance) {
  if (texts.size() < 2) throw ValidationError("k", "stage uncertainty needs k >= 2");
  return dispersion(embeddings.embed(texts).vectors, distance);
}

// A stage whose k texts were not sampled (raw sentence, fixed template)
// carries no uncertainty signal and contributes a neutral factor of 1.
inline RelationScore score_relation(const ChainSet& set, const PipelineConfig& cfg, PipelineContext& ctx) {
  std::vector<std::string> summaries, questions, answers;
  for (const auto& c : set.chains) {
    summaries.push_back(c.summarization);
    questions.push_back(c.question);
    answers.push_back(c.answer_raw);
  }
  RelationScore s;
  s.u1 = set.sampled_summaries ? stage_uncertainty(summaries, ctx.embeddings, cfg.distance) : 1.0;
  s.u2 = set.sampled_questions ? stage_uncertainty(questions, ctx.embeddings, cfg.distance) : 1.0;
  s.u3 = stage_uncertainty(answers, ctx.embeddings, cfg.distance);
  s.product = s.u1 * s.u2 * s.u3;
  return s;
}

struct Selection {
  std::size_t index = 0;
  bool tie = false;
};

// argmin over products; equal minima resolve to the earliest entry, which
// callers keep in schema order.
inline Selection select_min_product(const std::vector<double>& products) {
  if (products.empty()) throw EmptyError("no candidates to select from");
  Selection s;
  for (std::size_t i = 1; i < products.size(); ++i)
    if (products[i] < products[s.index]) s.index = i;
  for (std::size_t i = 0; i < products.size(); ++i)
    if (i != s.index && products[i] == products[s.index]) s.tie = true;
  return s;
}

inline CandidateOutcome outcome_of(const ChainSet& set) {
  return {set.relation, set.vote, set.count(Verdict::yes), set.count(Verdict::no), set.count(Verdict::abstain), std::nullopt};
}

// Full output of one pair, including the chains for optional raw emission.
struct PairResult {
  Prediction prediction;
  std::vector<ChainSet> chainsets;
  std::optional<std::string> vanilla_raw;
};

inline std::vector<ChainSet> run_candidates(const Instance& instance, EntityPair pair, const std::vector<RelationLabel>& candidates,
                                            const PipelineConfig& cfg, PipelineContext& ctx) {
  const auto summaries = summarize_pair(instance, pair, cfg, ctx);
  std::vector<ChainSet> sets(candidates.size());
  parallel_for(candidates.size(), cfg.max_parallel,
               [&](std::size_t i) { sets[i] = run_chains(instance, pair, candidates[i], cfg, ctx, summaries); });
  return sets;
}

inline PairResult classify_pair(const Instance& instance, EntityPair pair, const std::vector<RelationLabel>& candidates,
                                const PipelineConfig& cfg, PipelineContext& ctx) {
  validate_config(cfg);
  if (candidates.empty()) throw ValidationError("candidates", "empty candidate list");
  for (const auto& c : candidates)
    if (c.is_nota) throw ValidationError("candidates", "NoTA is not a queryable candidate");

  PairResult result;
  auto& p = result.prediction;
  p.instance_id = instance.id;
  p.pair = pair;
  p.mode = ExtractionMode::classification;
  result.chainsets = run_candidates(instance, pair, candidates, cfg, ctx);

  std::vector<std::size_t> yes;
  for (std::size_t i = 0; i < result.chainsets.size(); ++i) {
    p.candidates.push_back(outcome_of(result.chainsets[i]));
    if (result.chainsets[i].vote == Verdict::yes) yes.push_back(i);
  }

  if (yes.empty()) {
    const auto* nota = ctx.schema.nota();
    p.predicted = {nota ? nota->id : RelationLabel::invalid_output().id};
    return result;
  }
  if (yes.size() == 1) {
    p.predicted = {candidates[yes.front()].id};
    return result;
  }
  if (!cfg.use_uncertainty) {
    SeededRng rng(hash_combine(cfg.seed, stable_hash64(instance.id + "\x1f" + std::to_string(pair.subject) + "\x1f" +
                                                       std::to_string(pair.object))));
    p.predicted = {candidates[yes[rng.below(yes.size())]].id};
    p.notes.push_back("uncertainty disabled: random choice among yes votes");
    return result;
  }
  if (cfg.k < 2) {
    p.predicted = {candidates[yes.front()].id};
    p.tie_broken = true;
    p.notes.push_back("k=1: uncertainty unavailable, first yes vote in schema order");
    return result;
  }

  std::vector<RelationScore> scores(yes.size());
  parallel_for(yes.size(), cfg.max_parallel,
               [&](std::size_t j) { scores[j] = score_relation(result.chainsets[yes[j]], cfg, ctx); });
  std::vector<double> products;
  for (std::size_t j = 0; j < yes.size(); ++j) {
    p.candidates[yes[j]].score = scores[j];
    products.push_back(scores[j].product);
  }
  const auto choice = select_min_product(products);
  p.predicted = {candidates[yes[choice.index]].id};
  p.tie_broken = choice.tie;
  if (choice.tie) p.notes.push_back("equal minimal products: first in schema order");
  return result;
}

// Every ordered entity pair, every mapped candidate; all yes votes are kept.
// `allowed`, when given, further restricts the candidates.
inline std::vector<PairResult> extract_overlapping(const Instance& instance, const PipelineConfig& cfg, PipelineContext& ctx,
                                                   const MappingTable& mapping,
                                                   const std::vector<std::string>* allowed = nullptr) {
  validate_config(cfg);
  const auto pairs = query_pairs(instance, ExtractionMode::overlapping);
  std::vector<PairResult> results(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto pair = pairs[i];
    auto candidates = candidates_for(instance.entities[pair.subject].type, instance.entities[pair.object].type, mapping, ctx.schema);
    if (allowed)
      std::erase_if(candidates, [&](const RelationLabel& l) { return std::find(allowed->begin(), allowed->end(), l.id) == allowed->end(); });

    auto& r = results[i];
    r.prediction.instance_id = instance.id;
    r.prediction.pair = pair;
    r.prediction.mode = ExtractionMode::overlapping;
    if (candidates.empty()) continue;
    r.chainsets = run_candidates(instance, pair, candidates, cfg, ctx);
    for (auto& set : r.chainsets) {
      auto outcome = outcome_of(set);
      if (set.vote == Verdict::yes) {
        bool keep = true;
        if (cfg.max_product && cfg.k >= 2) {
          outcome.score = score_relation(set, cfg, ctx);
          keep = outcome.score->product <= *cfg.max_product;
        }
        if (keep) r.prediction.predicted.push_back(set.relation);
      }
      r.prediction.candidates.push_back(std::move(outcome));
    }
  }
  return results;
}

inline PairResult vanilla_classify(const Instance& instance, EntityPair pair, const std::vector<RelationLabel>& candidates,
                                   const PipelineConfig& cfg, PipelineContext& ctx) {
  const auto prompt = build_vanilla_prompt(instance, instance.entities.at(pair.subject), instance.entities.at(pair.object),
                                           candidates, ctx.prompts);
  const auto raw = ctx.completions.complete(make_request(prompt, cfg, 1)).texts.front();
  PairResult result;
  auto& p = result.prediction;
  p.instance_id = instance.id;
  p.pair = pair;
  p.mode = ExtractionMode::classification;
  p.predicted = {parse_vanilla_label(raw, ctx.schema, ctx.prompts).id};
  result.vanilla_raw = raw;
  return result;
}

inline json chains_to_json(const std::vector<ChainSet>& sets) {
  json out = json::array();
  for (const auto& set : sets) {
    json chains = json::array();
    for (const auto& c : set.chains)
      chains.push_back({{"index", c.index},
                        {"summarization", c.summarization},
                        {"question", c.question},
                        {"answer", c.answer_raw},
                        {"verdict", to_string(c.answer.verdict)}});
    out.push_back({{"relation", set.relation}, {"vote", to_string(set.vote)}, {"chains", chains}});
  }
  return out;
}

}  // namespace sumask
