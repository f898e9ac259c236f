#pragma once
// Entity-type pair -> candidate relation filter. Relations that cannot hold
// between the two argument types are dropped before any model call.

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sumask/core.hpp"

namespace sumask {

inline constexpr std::string_view kWildcard = "*";

struct TypePairRule {
  std::string subject_type;  // "*" matches any type, including none
  std::string object_type;
  std::vector<std::string> relations;
};

enum class DefaultPolicy { all, none };

class MappingTable {
 public:
  MappingTable() = default;

  // Checks every rule against the schema; unknown relations fail here, never
  // at query time.
  MappingTable(std::vector<TypePairRule> rules, DefaultPolicy fallback, const RelationSchema& schema)
      : rules_(std::move(rules)), default_(fallback) {
    std::size_t full_wildcards = 0;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const auto& rule = rules_[i];
      if (rule.relations.empty())
        throw ValidationError("rules[" + std::to_string(i) + "].relations", "empty relation list");
      for (const auto& id : rule.relations)
        if (!schema.contains(id))
          throw UnknownRelationError("rules[" + std::to_string(i) + "]: unknown relation '" + id + "'");
      if (rule.subject_type == kWildcard && rule.object_type == kWildcard) ++full_wildcards;
    }
    if (full_wildcards > 1) throw ValidationError("rules", "more than one wildcard-wildcard rule");
  }

  static MappingTable from_json(const json& j, const RelationSchema& schema) {
    const json& list = j.is_array() ? j : j.at("rules");
    DefaultPolicy fallback = DefaultPolicy::all;
    if (j.is_object() && j.contains("default")) {
      const auto d = j["default"].get<std::string>();
      if (d == "none")
        fallback = DefaultPolicy::none;
      else if (d != "all")
        throw ValidationError("default", "expected \"all\" or \"none\"");
    }
    std::vector<TypePairRule> rules;
    for (const auto& item : list)
      rules.push_back({item.at("subject_type").get<std::string>(), item.at("object_type").get<std::string>(),
                       item.at("relations").get<std::vector<std::string>>()});
    return MappingTable(std::move(rules), fallback, schema);
  }

  static MappingTable load(const std::string& path, const RelationSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open mapping '" + path + "'");
    return from_json(json::parse(in), schema);
  }

  const std::vector<TypePairRule>& rules() const noexcept { return rules_; }
  DefaultPolicy default_policy() const noexcept { return default_; }

 private:
  std::vector<TypePairRule> rules_;
  DefaultPolicy default_ = DefaultPolicy::all;
};

inline bool type_matches(const std::string& rule_type, const std::optional<std::string>& entity_type) {
  if (rule_type == kWildcard) return true;
  return entity_type && *entity_type == rule_type;
}

// Union of the relations of every matching rule, returned in schema order
// and never containing NoTA. No matching rule falls back to the default
// policy; untyped entities only match wildcard rules. Rule relations absent
// from `schema` are dropped, so a full-schema table serves a subset run.
inline std::vector<RelationLabel> candidates_for(const std::optional<std::string>& subject_type,
                                                 const std::optional<std::string>& object_type,
                                                 const MappingTable& table, const RelationSchema& schema) {
  std::vector<std::string> ids;
  bool matched = false;
  for (const auto& rule : table.rules()) {
    if (!type_matches(rule.subject_type, subject_type) || !type_matches(rule.object_type, object_type)) continue;
    matched = true;
    ids.insert(ids.end(), rule.relations.begin(), rule.relations.end());
  }
  std::vector<RelationLabel> out;
  if (!matched) {
    if (table.default_policy() == DefaultPolicy::all) out = schema.non_nota();
    return out;
  }
  for (const auto& id : schema.in_schema_order(ids)) {
    const auto& label = schema.at(id);
    if (!label.is_nota) out.push_back(label);
  }
  return out;
}

struct CoverageViolation {
  std::string instance_id;
  std::size_t triple_index = 0;
  std::string relation;
  std::optional<std::string> subject_type;
  std::optional<std::string> object_type;
};

struct CoverageReport {
  std::vector<CoverageViolation> violations;
  std::size_t pairs = 0;
  double mean_candidates = 0.0;  // r-hat as an average over queried pairs
  std::size_t max_candidates = 0;
  std::size_t schema_relations = 0;  // non-NoTA label count
};

inline json to_json_report(const CoverageReport& r) {
  json violations = json::array();
  for (const auto& v : r.violations)
    violations.push_back({{"instance_id", v.instance_id},
                          {"triple", v.triple_index},
                          {"relation", v.relation},
                          {"subject_type", v.subject_type ? json(*v.subject_type) : json(nullptr)},
                          {"object_type", v.object_type ? json(*v.object_type) : json(nullptr)}});
  return json{{"violations", violations},
              {"pairs", r.pairs},
              {"mean_candidates", r.mean_candidates},
              {"max_candidates", r.max_candidates},
              {"schema_relations", r.schema_relations}};
}

// Ordered entity pairs the pipeline queries for an instance.
inline std::vector<EntityPair> query_pairs(const Instance& instance, ExtractionMode mode) {
  if (mode == ExtractionMode::classification) return {classification_pair(instance)};
  std::vector<EntityPair> pairs;
  for (std::size_t i = 0; i < instance.entities.size(); ++i)
    for (std::size_t j = 0; j < instance.entities.size(); ++j)
      if (i != j) pairs.push_back({i, j});
  return pairs;
}

// Lists every gold triple its own type pair excludes (each one caps recall)
// and the candidate-set sizes over the pairs that would be queried.
inline CoverageReport validate_mapping(const MappingTable& table, const RelationSchema& schema,
                                       const std::vector<Instance>& instances, ExtractionMode mode) {
  CoverageReport report;
  report.schema_relations = schema.non_nota().size();
  std::size_t total = 0;
  for (const auto& instance : instances) {
    for (std::size_t t = 0; t < instance.gold_triples.size(); ++t) {
      const auto& triple = instance.gold_triples[t];
      if (schema.at(triple.relation).is_nota) continue;
      const auto& st = instance.entities.at(triple.subject).type;
      const auto& ot = instance.entities.at(triple.object).type;
      const auto candidates = candidates_for(st, ot, table, schema);
      const bool covered = std::any_of(candidates.begin(), candidates.end(),
                                       [&](const RelationLabel& l) { return l.id == triple.relation; });
      if (!covered) report.violations.push_back({instance.id, t, triple.relation, st, ot});
    }
    for (const auto& pair : query_pairs(instance, mode)) {
      const auto n = candidates_for(instance.entities[pair.subject].type, instance.entities[pair.object].type, table, schema).size();
      total += n;
      report.max_candidates = std::max(report.max_candidates, n);
      ++report.pairs;
    }
  }
  report.mean_candidates = report.pairs ? static_cast<double>(total) / static_cast<double>(report.pairs) : 0.0;
  return report;
}

}  // namespace sumask
