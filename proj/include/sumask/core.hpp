#pragma once
// Domain vocabulary shared by every stage: entity mentions, relation labels
// and schemas, gold triples, instances and predictions.
//
// Entities are identified by their index in Instance::entities, never by
// surface string, so repeated names in one sentence stay distinct.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sumask/errors.hpp"

namespace sumask {

using json = nlohmann::json;

// Token interval, inclusive start and exclusive end.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

struct EntityMention {
  std::string surface;
  std::optional<Span> span;
  std::optional<std::string> type;
  friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

struct RelationLabel {
  std::string id;
  std::string display_name;
  std::optional<std::string> description;
  bool is_nota = false;

  friend bool operator==(const RelationLabel&, const RelationLabel&) = default;

  // Recorded when a model output cannot be resolved and the schema has no
  // NoTA class. Never equal to any gold label, so it always scores as wrong.
  static const RelationLabel& invalid_output() {
    static const RelationLabel label{"<invalid-output>", "<invalid-output>", std::nullopt, false};
    return label;
  }
};

// Ordered candidate relation set. Order is significant: it fixes prompt
// layout and every tie-break.
class RelationSchema {
 public:
  RelationSchema() = default;

  explicit RelationSchema(std::vector<RelationLabel> labels) : labels_(std::move(labels)) {
    std::size_t nota_count = 0;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      const auto& label = labels_[i];
      if (label.id.empty()) throw ValidationError("relations[" + std::to_string(i) + "].id", "empty id");
      if (!index_.emplace(label.id, i).second)
        throw ValidationError("relations[" + std::to_string(i) + "].id", "duplicate id '" + label.id + "'");
      if (label.is_nota) {
        ++nota_count;
        nota_index_ = i;
      }
    }
    if (nota_count > 1) throw ValidationError("relations", "more than one NoTA label");
  }

  const std::vector<RelationLabel>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }

  const RelationLabel* find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &labels_[it->second];
  }

  const RelationLabel& at(std::string_view id) const {
    if (const auto* label = find(id)) return *label;
    throw UnknownRelationError("unknown relation '" + std::string(id) + "'");
  }

  std::optional<std::size_t> index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }

  const RelationLabel* nota() const { return nota_index_ ? &labels_[*nota_index_] : nullptr; }

  std::vector<RelationLabel> non_nota() const {
    std::vector<RelationLabel> out;
    for (const auto& label : labels_)
      if (!label.is_nota) out.push_back(label);
    return out;
  }

  // Reorders `ids` into schema order, dropping unknown ids and duplicates.
  std::vector<std::string> in_schema_order(const std::vector<std::string>& ids) const {
    std::vector<std::size_t> positions;
    for (const auto& id : ids)
      if (auto pos = index_of(id)) positions.push_back(*pos);
    std::sort(positions.begin(), positions.end());
    positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
    std::vector<std::string> out;
    for (auto pos : positions) out.push_back(labels_[pos].id);
    return out;
  }

  friend bool operator==(const RelationSchema& a, const RelationSchema& b) { return a.labels_ == b.labels_; }

 private:
  std::vector<RelationLabel> labels_;
  std::unordered_map<std::string, std::size_t> index_;
  std::optional<std::size_t> nota_index_;
};

struct Triple {
  std::size_t subject = 0;
  std::string relation;
  std::size_t object = 0;
  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct EntityPair {
  std::size_t subject = 0;
  std::size_t object = 0;
  friend bool operator==(const EntityPair&, const EntityPair&) = default;
  friend auto operator<=>(const EntityPair&, const EntityPair&) = default;
};

struct Instance {
  std::string id;
  std::string text;
  std::optional<std::vector<std::string>> tokens;
  std::vector<EntityMention> entities;
  std::vector<Triple> gold_triples;
  std::optional<std::string> gold_relation;
  friend bool operator==(const Instance&, const Instance&) = default;
};

enum class Verdict { yes, no, abstain };
enum class ExtractionMode { classification, overlapping };

struct RelationScore {
  double u1 = 0.0;
  double u2 = 0.0;
  double u3 = 0.0;
  double product = 0.0;
  friend bool operator==(const RelationScore&, const RelationScore&) = default;
};

// Vote and (when computed) uncertainty for one candidate relation of a pair.
struct CandidateOutcome {
  std::string relation;
  Verdict vote = Verdict::no;
  int yes_count = 0;
  int no_count = 0;
  int abstain_count = 0;
  std::optional<RelationScore> score;
  friend bool operator==(const CandidateOutcome&, const CandidateOutcome&) = default;
};

struct Prediction {
  std::string instance_id;
  EntityPair pair;
  std::vector<std::string> predicted;
  std::vector<CandidateOutcome> candidates;
  ExtractionMode mode = ExtractionMode::classification;
  bool tie_broken = false;
  std::vector<std::string> notes;
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// --- helpers ---------------------------------------------------------------

inline bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Trims and collapses ASCII whitespace runs to one space.
inline std::string canonical_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_ascii_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline std::size_t whitespace_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_ascii_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

inline std::size_t token_count(const Instance& instance) {
  return instance.tokens ? instance.tokens->size() : whitespace_token_count(instance.text);
}

// The relation an instance is labelled with in single-label data. NoTA-gold
// instances carry gold_relation but no triple.
inline std::optional<std::string> single_gold(const Instance& instance) {
  if (instance.gold_relation) return instance.gold_relation;
  if (!instance.gold_triples.empty()) return instance.gold_triples.front().relation;
  return std::nullopt;
}

// The entity pair queried in classification mode: the gold triple's pair,
// otherwise the first two entities.
inline EntityPair classification_pair(const Instance& instance) {
  if (!instance.gold_triples.empty()) {
    const auto& t = instance.gold_triples.front();
    return {t.subject, t.object};
  }
  if (instance.entities.size() < 2) throw ValidationError("entities", "classification needs at least two entities");
  return {0, 1};
}

// --- validation ------------------------------------------------------------

inline Instance validate_instance(Instance instance, const RelationSchema& schema) {
  if (instance.id.empty()) throw ValidationError("id", "empty id");
  if (canonical_whitespace(instance.text).empty()) throw ValidationError("text", "empty text");

  const std::size_t n_tokens = token_count(instance);
  for (std::size_t i = 0; i < instance.entities.size(); ++i) {
    auto& entity = instance.entities[i];
    const std::string path = "entities[" + std::to_string(i) + "]";
    entity.surface = canonical_whitespace(entity.surface);
    if (entity.surface.empty()) throw ValidationError(path + ".surface", "empty surface");
    if (entity.span) {
      if (entity.span->start >= entity.span->end) throw ValidationError(path + ".span", "start must be < end");
      if (entity.span->end > n_tokens)
        throw ValidationError(path + ".span", "end exceeds token count " + std::to_string(n_tokens));
    }
    if (entity.type && entity.type->empty()) throw ValidationError(path + ".type", "empty type");
  }

  for (std::size_t i = 0; i < instance.gold_triples.size(); ++i) {
    const auto& triple = instance.gold_triples[i];
    const std::string path = "gold_triples[" + std::to_string(i) + "]";
    if (triple.subject >= instance.entities.size()) throw ValidationError(path + ".subject", "dangling entity reference");
    if (triple.object >= instance.entities.size()) throw ValidationError(path + ".object", "dangling entity reference");
    if (triple.subject == triple.object) throw ValidationError(path + ".object", "subject and object are the same mention");
    if (!schema.contains(triple.relation))
      throw ValidationError(path + ".relation", "unknown relation '" + triple.relation + "'");
  }

  if (instance.gold_relation) {
    if (!schema.contains(*instance.gold_relation))
      throw ValidationError("gold_relation", "unknown relation '" + *instance.gold_relation + "'");
    if (instance.gold_triples.size() > 1) throw ValidationError("gold_triples", "single-label instance has several triples");
    if (!instance.gold_triples.empty() && instance.gold_triples.front().relation != *instance.gold_relation)
      throw ValidationError("gold_triples[0].relation", "disagrees with gold_relation");
  }
  return instance;
}

inline void validate_prediction(const Prediction& prediction) {
  if (prediction.mode == ExtractionMode::classification) {
    if (prediction.predicted.size() != 1) throw ValidationError("predicted", "classification needs exactly one label");
    return;
  }
  auto sorted = prediction.predicted;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ValidationError("predicted", "overlapping labels must be distinct");
}

// --- enum names -------------------------------------------------------------

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::yes: return "yes";
    case Verdict::no: return "no";
    case Verdict::abstain: return "abstain";
  }
  return "abstain";
}

inline Verdict verdict_from_string(std::string_view s) {
  if (s == "yes") return Verdict::yes;
  if (s == "no") return Verdict::no;
  if (s == "abstain") return Verdict::abstain;
  throw ValidationError("vote", "unknown verdict '" + std::string(s) + "'");
}

inline std::string_view to_string(ExtractionMode m) {
  return m == ExtractionMode::classification ? "classification" : "overlapping";
}

inline ExtractionMode mode_from_string(std::string_view s) {
  if (s == "classification") return ExtractionMode::classification;
  if (s == "overlapping") return ExtractionMode::overlapping;
  throw ValidationError("mode", "unknown mode '" + std::string(s) + "'");
}

// --- JSON -------------------------------------------------------------------
// Canonical JSONL layout. Absent optionals are omitted so decode/encode is
// the identity on canonical records.

inline void to_json(json& j, const EntityMention& e) {
  j = json{{"surface", e.surface}};
  if (e.span) j["span"] = json::array({e.span->start, e.span->end});
  if (e.type) j["type"] = *e.type;
}

inline void from_json(const json& j, EntityMention& e) {
  e.surface = j.at("surface").get<std::string>();
  e.span.reset();
  e.type.reset();
  if (auto it = j.find("span"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 2) throw ValidationError("span", "expected [start, end]");
    e.span = Span{(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
  }
  if (auto it = j.find("type"); it != j.end() && !it->is_null()) e.type = it->get<std::string>();
}

inline void to_json(json& j, const RelationLabel& r) {
  j = json{{"id", r.id}, {"display_name", r.display_name}};
  if (r.description) j["description"] = *r.description;
  if (r.is_nota) j["nota"] = true;
}

inline void from_json(const json& j, RelationLabel& r) {
  r.id = j.at("id").get<std::string>();
  // Descriptor files spell the display name "name".
  r.display_name = j.contains("display_name") ? j["display_name"].get<std::string>() : j.value("name", r.id);
  r.description.reset();
  if (auto it = j.find("description"); it != j.end() && !it->is_null()) r.description = it->get<std::string>();
  r.is_nota = j.value("nota", false);
}

inline void to_json(json& j, const Triple& t) {
  j = json{{"subject", t.subject}, {"relation", t.relation}, {"object", t.object}};
}

inline void from_json(const json& j, Triple& t) {
  t.subject = j.at("subject").get<std::size_t>();
  t.relation = j.at("relation").get<std::string>();
  t.object = j.at("object").get<std::size_t>();
}

inline void to_json(json& j, const Instance& in) {
  j = json{{"id", in.id}, {"text", in.text}};
  if (in.tokens) j["tokens"] = *in.tokens;
  j["entities"] = in.entities;
  j["gold_triples"] = in.gold_triples;
  if (in.gold_relation) j["gold_relation"] = *in.gold_relation;
}

inline void from_json(const json& j, Instance& in) {
  in.id = j.at("id").get<std::string>();
  in.text = j.at("text").get<std::string>();
  in.tokens.reset();
  in.gold_relation.reset();
  if (auto it = j.find("tokens"); it != j.end() && !it->is_null()) in.tokens = it->get<std::vector<std::string>>();
  in.entities = j.at("entities").get<std::vector<EntityMention>>();
  in.gold_triples = j.value("gold_triples", std::vector<Triple>{});
  if (auto it = j.find("gold_relation"); it != j.end() && !it->is_null()) in.gold_relation = it->get<std::string>();
}

inline void to_json(json& j, const RelationScore& s) {
  j = json{{"u1", s.u1}, {"u2", s.u2}, {"u3", s.u3}, {"product", s.product}};
}

inline void from_json(const json& j, RelationScore& s) {
  s.u1 = j.at("u1").get<double>();
  s.u2 = j.at("u2").get<double>();
  s.u3 = j.at("u3").get<double>();
  s.product = j.at("product").get<double>();
}

inline void to_json(json& j, const CandidateOutcome& c) {
  j = json{{"relation", c.relation},
           {"vote", to_string(c.vote)},
           {"yes", c.yes_count},
           {"no", c.no_count},
           {"abstain", c.abstain_count}};
  if (c.score) j["score"] = *c.score;
}

inline void from_json(const json& j, CandidateOutcome& c) {
  c.relation = j.at("relation").get<std::string>();
  c.vote = verdict_from_string(j.at("vote").get<std::string>());
  c.yes_count = j.value("yes", 0);
  c.no_count = j.value("no", 0);
  c.abstain_count = j.value("abstain", 0);
  c.score.reset();
  if (auto it = j.find("score"); it != j.end() && !it->is_null()) c.score = it->get<RelationScore>();
}

inline void to_json(json& j, const Prediction& p) {
  j = json{{"instance_id", p.instance_id},
           {"subject", p.pair.subject},
           {"object", p.pair.object},
           {"mode", to_string(p.mode)},
           {"predicted", p.predicted},
           {"candidates", p.candidates},
           {"tie_broken", p.tie_broken}};
  if (!p.notes.empty()) j["notes"] = p.notes;
}

inline void from_json(const json& j, Prediction& p) {
  p.instance_id = j.at("instance_id").get<std::string>();
  p.pair = {j.at("subject").get<std::size_t>(), j.at("object").get<std::size_t>()};
  p.mode = mode_from_string(j.at("mode").get<std::string>());
  p.predicted = j.at("predicted").get<std::vector<std::string>>();
  p.candidates = j.value("candidates", std::vector<CandidateOutcome>{});
  p.tie_broken = j.value("tie_broken", false);
  p.notes = j.value("notes", std::vector<std::string>{});
}

}  // namespace sumask
