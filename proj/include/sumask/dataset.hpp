#pragma once
// Dataset loading, native-format adapters, unseen-relation selection and
// stratified sampling.
//
// The pipeline only reads canonical JSONL; native layouts are converted once
// by the adapters below. All sampling first sorts instances by id, so results
// depend on (seed, content) and never on file order.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sumask/core.hpp"
#include "sumask/hashing.hpp"
#include "sumask/prompting.hpp"

namespace sumask {

enum class TaskKind { single_label, multi_triple };
enum class SourceFormat { canonical_jsonl, fewrel_native, tacred_native, nyt_native };

inline std::string_view to_string(TaskKind t) { return t == TaskKind::single_label ? "single-label" : "multi-triple"; }

inline TaskKind task_from_string(std::string_view s) {
  if (s == "single-label") return TaskKind::single_label;
  if (s == "multi-triple") return TaskKind::multi_triple;
  throw ValidationError("task", "unknown task '" + std::string(s) + "'");
}

inline std::string_view to_string(SourceFormat f) {
  switch (f) {
    case SourceFormat::canonical_jsonl: return "canonical-jsonl";
    case SourceFormat::fewrel_native: return "fewrel-native";
    case SourceFormat::tacred_native: return "tacred-native";
    case SourceFormat::nyt_native: return "nyt-native";
  }
  return "canonical-jsonl";
}

inline SourceFormat format_from_string(std::string_view s) {
  for (auto f : {SourceFormat::canonical_jsonl, SourceFormat::fewrel_native, SourceFormat::tacred_native, SourceFormat::nyt_native})
    if (to_string(f) == s) return f;
  throw ValidationError("format", "unknown source format '" + std::string(s) + "'");
}

struct DatasetDescriptor {
  std::string name;
  RelationSchema schema;
  bool typed_entities = false;
  TaskKind task = TaskKind::single_label;
  SourceFormat source_format = SourceFormat::canonical_jsonl;
};

inline void validate_descriptor(const DatasetDescriptor& d) {
  if (d.task == TaskKind::multi_triple && !d.typed_entities)
    throw ValidationError("typed_entities", "multi-triple datasets must carry entity types");
}

inline DatasetDescriptor descriptor_from_json(const json& j) {
  DatasetDescriptor d;
  d.name = j.at("name").get<std::string>();
  d.schema = RelationSchema(j.at("relations").get<std::vector<RelationLabel>>());
  d.typed_entities = j.value("typed_entities", false);
  d.task = task_from_string(j.value("task", std::string("single-label")));
  d.source_format = format_from_string(j.value("source_format", std::string("canonical-jsonl")));
  validate_descriptor(d);
  return d;
}

inline json descriptor_to_json(const DatasetDescriptor& d) {
  return json{{"name", d.name},
              {"task", to_string(d.task)},
              {"typed_entities", d.typed_entities},
              {"source_format", to_string(d.source_format)},
              {"relations", d.schema.labels()}};
}

inline DatasetDescriptor load_descriptor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset descriptor '" + path + "'");
  return descriptor_from_json(json::parse(in));
}

// --- canonical JSONL ----------------------------------------------------------

inline std::vector<Instance> parse_jsonl(std::istream& in) {
  std::vector<Instance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (canonical_whitespace(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<Instance>());
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

inline std::vector<Instance> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parse_jsonl(in);
}

inline void write_jsonl(const std::vector<Instance>& instances, std::ostream& out) {
  for (const auto& instance : instances) out << json(instance).dump() << '\n';
}

inline void export_jsonl(const std::vector<Instance>& instances, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  write_jsonl(instances, out);
}

// Schema of the relations observed in the data, sorted by id. `nota_id`
// marks (and adds, if unseen) the NoTA class.
inline RelationSchema infer_schema(const std::vector<Instance>& instances, const std::optional<std::string>& nota_id = std::nullopt) {
  std::set<std::string> ids;
  for (const auto& instance : instances) {
    if (instance.gold_relation) ids.insert(*instance.gold_relation);
    for (const auto& t : instance.gold_triples) ids.insert(t.relation);
  }
  if (nota_id) ids.insert(*nota_id);
  std::vector<RelationLabel> labels;
  for (const auto& id : ids) labels.push_back({id, id, std::nullopt, nota_id && id == *nota_id});
  return RelationSchema(std::move(labels));
}

// Reference sizes of the full public releases (test split where split).
struct DatasetBounds {
  std::size_t relations;
  std::size_t instances;
};

inline std::optional<DatasetBounds> known_bounds(std::string_view name) {
  static const std::map<std::string, DatasetBounds, std::less<>> table = {
      {"fewrel", {80, 56000}},  {"wiki-zsl", {113, 94383}},   {"tacred", {42, 15509}},
      {"tacrev", {42, 15509}},  {"re-tacred", {40, 13418}},   {"nyt", {24, 5000}}};
  auto it = table.find(ascii_lower(name));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

struct LoadResult {
  std::vector<Instance> instances;
  std::vector<std::string> warnings;
};

inline std::vector<std::string> check_bounds(const DatasetDescriptor& d, const std::vector<Instance>& instances) {
  std::vector<std::string> warnings;
  const auto bounds = known_bounds(d.name);
  if (!bounds) return warnings;
  std::set<std::string> observed;
  for (const auto& in : instances) {
    if (auto g = single_gold(in)) observed.insert(*g);
    for (const auto& t : in.gold_triples) observed.insert(t.relation);
  }
  if (d.schema.size() != bounds->relations)
    warnings.push_back(d.name + ": schema has " + std::to_string(d.schema.size()) + " relations, full release has " +
                       std::to_string(bounds->relations));
  if (instances.size() != bounds->instances)
    warnings.push_back(d.name + ": loaded " + std::to_string(instances.size()) + " instances, full release has " +
                       std::to_string(bounds->instances) + " (subset?)");
  if (instances.size() == bounds->instances && observed.size() != bounds->relations)
    warnings.push_back(d.name + ": observed " + std::to_string(observed.size()) + " distinct relations, expected " +
                       std::to_string(bounds->relations));
  return warnings;
}

// Parses and validates every line; all validation failures are reported
// together, each prefixed with its line number.
inline LoadResult load(const DatasetDescriptor& descriptor, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  LoadResult result;
  std::vector<std::string> problems;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (canonical_whitespace(line).empty()) continue;
    Instance instance;
    try {
      instance = json::parse(line).get<Instance>();
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    try {
      result.instances.push_back(validate_instance(std::move(instance), descriptor.schema));
    } catch (const ValidationError& e) {
      problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string message = std::to_string(problems.size()) + " invalid instance(s)";
    for (std::size_t i = 0; i < problems.size() && i < 20; ++i) message += "\n  " + problems[i];
    throw ValidationError("instances", message);
  }
  result.warnings = check_bounds(descriptor, result.instances);
  return result;
}

// --- native adapters --------------------------------------------------------

inline std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end && i < tokens.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

inline json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    // byte offset -> line number
    std::ifstream again(path);
    std::size_t line = 1, offset = 0;
    char c;
    while (offset < e.byte && again.get(c)) {
      if (c == '\n') ++line;
      ++offset;
    }
    throw ParseError(line, e.what());
  }
}

// FewRel: {"P931": [{"tokens": [...], "h": [surface, kb_id, [[positions]]], "t": [...]}, ...], ...}
// Optional pid2name: {"P931": ["place served by transport hub", "description"]}.
inline std::pair<std::vector<Instance>, RelationSchema> adapt_fewrel(const json& root, const json& pid2name = json::object()) {
  std::vector<Instance> instances;
  std::vector<RelationLabel> labels;
  for (const auto& [pid, examples] : root.items()) {
    RelationLabel label{pid, pid, std::nullopt, false};
    if (auto it = pid2name.find(pid); it != pid2name.end() && it->is_array() && !it->empty()) {
      label.display_name = (*it)[0].get<std::string>();
      if (it->size() > 1) label.description = (*it)[1].get<std::string>();
    }
    labels.push_back(label);
    std::size_t n = 0;
    for (const auto& ex : examples) {
      Instance in;
      in.id = pid + "-" + std::to_string(n++);
      auto tokens = ex.at("tokens").get<std::vector<std::string>>();
      in.text = join_tokens(tokens, 0, tokens.size());
      for (const char* role : {"h", "t"}) {
        const auto& e = ex.at(role);
        EntityMention m;
        m.surface = e.at(0).get<std::string>();
        const auto& positions = e.at(2).at(0);
        if (!positions.empty()) {
          std::size_t lo = positions.front().get<std::size_t>(), hi = lo;
          for (const auto& p : positions) {
            lo = std::min(lo, p.get<std::size_t>());
            hi = std::max(hi, p.get<std::size_t>());
          }
          m.span = Span{lo, hi + 1};
        }
        in.entities.push_back(std::move(m));
      }
      in.tokens = std::move(tokens);
      in.gold_triples = {{0, pid, 1}};
      in.gold_relation = pid;
      instances.push_back(std::move(in));
    }
  }
  return {std::move(instances), RelationSchema(std::move(labels))};
}

// TACRED: [{"id", "token": [...], "relation", "subj_start", "subj_end", "obj_start",
//           "obj_end", "subj_type", "obj_type"}], ends inclusive. "no_relation" is NoTA
// and yields an instance with gold_relation but no triple.
inline std::pair<std::vector<Instance>, RelationSchema> adapt_tacred(const json& root, const std::string& nota_id = "no_relation") {
  std::vector<Instance> instances;
  std::set<std::string> relations{nota_id};
  for (const auto& ex : root) {
    Instance in;
    in.id = ex.at("id").get<std::string>();
    auto tokens = ex.at("token").get<std::vector<std::string>>();
    in.text = join_tokens(tokens, 0, tokens.size());
    auto mention = [&](const char* start, const char* end, const char* type) {
      const auto s = ex.at(start).get<std::size_t>();
      const auto e = ex.at(end).get<std::size_t>() + 1;
      EntityMention m{join_tokens(tokens, s, e), Span{s, e}, std::nullopt};
      if (ex.contains(type)) m.type = ex.at(type).get<std::string>();
      return m;
    };
    in.entities = {mention("subj_start", "subj_end", "subj_type"), mention("obj_start", "obj_end", "obj_type")};
    in.tokens = std::move(tokens);
    const auto relation = ex.at("relation").get<std::string>();
    relations.insert(relation);
    in.gold_relation = relation;
    if (relation != nota_id) in.gold_triples = {{0, relation, 1}};
    instances.push_back(std::move(in));
  }
  std::vector<RelationLabel> labels;
  for (const auto& id : relations) labels.push_back({id, id, std::nullopt, id == nota_id});
  return {std::move(instances), RelationSchema(std::move(labels))};
}

// NYT (one JSON object per line): {"text", "triple_list": [[subject, relation, object], ...],
// "entity_types"?: {surface: type}}. Entities are the distinct surfaces in
// order of first appearance in the triple list.
inline std::pair<std::vector<Instance>, RelationSchema> adapt_nyt(std::istream& in) {
  std::vector<Instance> instances;
  std::set<std::string> relations;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (canonical_whitespace(line).empty()) continue;
    json ex;
    try {
      ex = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    Instance inst;
    inst.id = ex.contains("id") ? ex["id"].get<std::string>() : "nyt-" + std::to_string(instances.size());
    inst.text = ex.at("text").get<std::string>();
    const json types = ex.value("entity_types", json::object());
    std::map<std::string, std::size_t> index;
    auto entity = [&](const std::string& surface) {
      if (auto it = index.find(surface); it != index.end()) return it->second;
      EntityMention m{surface, std::nullopt, std::nullopt};
      if (auto t = types.find(surface); t != types.end()) m.type = t->get<std::string>();
      inst.entities.push_back(std::move(m));
      return index[surface] = inst.entities.size() - 1;
    };
    for (const auto& t : ex.at("triple_list")) {
      const auto s = entity(t.at(0).get<std::string>());
      const auto rel = t.at(1).get<std::string>();
      const auto o = entity(t.at(2).get<std::string>());
      relations.insert(rel);
      Triple triple{s, rel, o};
      if (std::find(inst.gold_triples.begin(), inst.gold_triples.end(), triple) == inst.gold_triples.end())
        inst.gold_triples.push_back(triple);
    }
    instances.push_back(std::move(inst));
  }
  std::vector<RelationLabel> labels;
  for (const auto& id : relations) labels.push_back({id, id, std::nullopt, false});
  return {std::move(instances), RelationSchema(std::move(labels))};
}

// --- sampling ---------------------------------------------------------------

inline std::vector<Instance> sorted_by_id(std::vector<Instance> instances) {
  std::stable_sort(instances.begin(), instances.end(), [](const Instance& a, const Instance& b) { return a.id < b.id; });
  return instances;
}

// Uniform draw of m non-NoTA relations without replacement, returned in
// schema order.
inline std::vector<RelationLabel> select_unseen(const RelationSchema& schema, std::size_t m, std::uint64_t seed) {
  auto pool = schema.non_nota();
  if (m > pool.size()) throw ValidationError("m", "m exceeds the number of relations (" + std::to_string(pool.size()) + ")");
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SeededRng rng(seed);
  for (std::size_t i = 0; i < m; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(chosen.begin(), chosen.end());
  std::vector<RelationLabel> out;
  for (auto i : chosen) out.push_back(pool[i]);
  return out;
}

// Keeps the instances whose gold relation is among `relations`.
inline std::vector<Instance> restrict_to_relations(const std::vector<Instance>& instances, const std::vector<RelationLabel>& relations) {
  std::set<std::string> ids;
  for (const auto& r : relations) ids.insert(r.id);
  std::vector<Instance> out;
  for (const auto& in : instances)
    if (auto g = single_gold(in); g && ids.count(*g)) out.push_back(in);
  return out;
}

inline std::string class_of(const Instance& instance) { return single_gold(instance).value_or(""); }

// Largest-remainder apportionment: floor(n * share) per class, then one more
// for the classes with the largest fractional parts (ties by class order)
// until the quotas sum to n.
inline std::map<std::string, std::size_t> allocate_quotas(const std::map<std::string, std::size_t>& class_counts, std::size_t n) {
  std::size_t total = 0;
  for (const auto& [_, c] : class_counts) total += c;
  if (n > total) throw ValidationError("n", "sample size exceeds population");
  std::map<std::string, std::size_t> quotas;
  std::vector<std::pair<std::string, std::size_t>> remainders;  // numerator of fractional part over total
  std::size_t assigned = 0;
  for (const auto& [name, c] : class_counts) {
    const auto exact = static_cast<unsigned __int128>(n) * c;
    const auto q = static_cast<std::size_t>(exact / total);
    quotas[name] = q;
    assigned += q;
    remainders.emplace_back(name, static_cast<std::size_t>(exact % total));
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++quotas[remainders[i].first];
  return quotas;
}

inline std::vector<Instance> stratified_sample(const std::vector<Instance>& instances, std::size_t n, std::uint64_t seed) {
  const auto sorted = sorted_by_id(instances);
  std::map<std::string, std::vector<const Instance*>> classes;
  for (const auto& in : sorted) classes[class_of(in)].push_back(&in);
  std::map<std::string, std::size_t> counts;
  for (const auto& [name, members] : classes) counts[name] = members.size();
  const auto quotas = allocate_quotas(counts, n);

  SeededRng rng(seed);
  std::vector<Instance> out;
  out.reserve(n);
  for (auto& [name, members] : classes) {
    const auto quota = quotas.at(name);
    for (std::size_t i = 0; i < quota; ++i) std::swap(members[i], members[i + rng.below(members.size() - i)]);
    for (std::size_t i = 0; i < quota; ++i) out.push_back(*members[i]);
  }
  return sorted_by_id(std::move(out));
}

}  // namespace sumask
