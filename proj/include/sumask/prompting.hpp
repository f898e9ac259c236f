#pragma once
// Prompt construction for the Vanilla baseline and the three SumAsk stages,
// plus parsing of model outputs into verdicts and labels.
//
// Wording lives in a versioned PromptRegistry. The built-in registry is the
// same text as data/prompts/registry.json; the version id is part of every
// cache key, so editing any template requires bumping it.

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sumask/core.hpp"

namespace sumask {

enum class Stage { vanilla, summarize, question, answer };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::vanilla: return "vanilla";
    case Stage::summarize: return "summarize";
    case Stage::question: return "question";
    case Stage::answer: return "answer";
  }
  return "vanilla";
}

inline Stage stage_from_string(std::string_view s) {
  if (s == "vanilla") return Stage::vanilla;
  if (s == "summarize") return Stage::summarize;
  if (s == "question") return Stage::question;
  if (s == "answer") return Stage::answer;
  throw ValidationError("stage", "unknown stage '" + std::string(s) + "'");
}

struct PromptText {
  std::string text;
  Stage stage = Stage::vanilla;
  std::map<std::string, std::string> slots;
  friend bool operator==(const PromptText&, const PromptText&) = default;
};

struct ParsedAnswer {
  Verdict verdict = Verdict::abstain;
  std::string raw;
  // Byte interval [first, second) of the matched token in raw.
  std::optional<std::pair<std::size_t, std::size_t>> matched_span;
};

// A triple with everything the prompts need already resolved to text.
struct TripleText {
  std::string subject;
  std::string relation_id;
  std::string relation_name;
  std::string object;
};

inline TripleText triple_text(const Instance& instance, const Triple& triple, const RelationSchema& schema) {
  const auto& label = schema.at(triple.relation);
  return {instance.entities.at(triple.subject).surface, label.id, label.display_name,
          instance.entities.at(triple.object).surface};
}

// Fills {name} placeholders in a single left-to-right pass; substituted
// values are never rescanned. "{{" and "}}" produce literal braces.
inline std::string fill_placeholders(std::string_view pattern, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(pattern.size() + 64);
  for (std::size_t i = 0; i < pattern.size();) {
    char c = pattern[i];
    if (c == '{' && i + 1 < pattern.size() && pattern[i + 1] == '{') {
      out.push_back('{');
      i += 2;
    } else if (c == '}' && i + 1 < pattern.size() && pattern[i + 1] == '}') {
      out.push_back('}');
      i += 2;
    } else if (c == '{') {
      auto close = pattern.find('}', i + 1);
      if (close == std::string_view::npos) throw ValidationError("template", "unterminated placeholder");
      std::string name(pattern.substr(i + 1, close - i - 1));
      auto it = values.find(name);
      if (it == values.end()) throw ValidationError("template", "no value for placeholder {" + name + "}");
      out += it->second;
      i = close + 1;
    } else {
      out.push_back(c);
      ++i;
    }
  }
  return out;
}

inline std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + needle.size()))
    ++count;
  return count;
}

class PromptRegistry {
 public:
  static constexpr std::string_view kBuiltinVersion = "sumask-prompts-1";

  static const PromptRegistry& builtin() {
    static const PromptRegistry registry = from_json(builtin_json());
    return registry;
  }

  static json builtin_json() {
    return json{
        {"version", kBuiltinVersion},
        {"templates",
         {{"summarize",
           "Summarize the relations between \"{subject}\" and \"{object}\" from context.\n"
           "Context: {context}\n"
           "Summarization:"},
          {"question",
           "Rewrite the triple as a yes/no question.\n"
           "Triple: ({subject}, {relation}, {object})\n"
           "Question:"},
          {"answer",
           "Answer the question from context.{strict_directive}\n"
           "Context: {summarization}\n"
           "Question: {question}\n"
           "Answer:"},
          {"vanilla",
           "Choose the relation between \"{subject}\" and \"{object}\" expressed in the context.\n"
           "Options: {options}\n"
           "Context: {context}\n"
           "Reply with exactly one option from the list.\n"
           "Relation:"}}},
        {"strict_yes_no_directive", " Answer with yes or no only."},
        {"nota_option", "none of the above"},
        {"option_separator", "; "}};
  }

  static PromptRegistry from_json(const json& j) {
    PromptRegistry r;
    r.version_ = j.at("version").get<std::string>();
    if (r.version_.empty()) throw ValidationError("version", "empty prompt-registry version");
    const auto& t = j.at("templates");
    for (auto stage : {Stage::vanilla, Stage::summarize, Stage::question, Stage::answer})
      r.templates_[stage] = t.at(std::string(to_string(stage))).get<std::string>();
    r.strict_directive_ = j.value("strict_yes_no_directive", std::string(" Answer with yes or no only."));
    r.nota_option_ = j.value("nota_option", std::string("none of the above"));
    r.option_separator_ = j.value("option_separator", std::string("; "));
    r.check();
    return r;
  }

  static PromptRegistry load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open prompt registry '" + path + "'");
    return from_json(json::parse(in));
  }

  const std::string& version() const noexcept { return version_; }
  const std::string& nota_option() const noexcept { return nota_option_; }
  const std::string& strict_directive() const noexcept { return strict_directive_; }
  const std::string& option_separator() const noexcept { return option_separator_; }
  const std::string& pattern(Stage s) const { return templates_.at(s); }

 private:
  void check() const {
    const std::map<Stage, std::vector<std::string>> required = {
        {Stage::summarize, {"{subject}", "{object}", "{context}"}},
        {Stage::question, {"{subject}", "{relation}", "{object}"}},
        {Stage::answer, {"{summarization}", "{question}", "{strict_directive}"}},
        {Stage::vanilla, {"{subject}", "{object}", "{context}", "{options}"}}};
    for (const auto& [stage, names] : required)
      for (const auto& name : names)
        if (count_occurrences(templates_.at(stage), name) != 1)
          throw ValidationError("templates." + std::string(to_string(stage)),
                                "placeholder " + name + " must appear exactly once");
  }

  std::string version_;
  std::map<Stage, std::string> templates_;
  std::string strict_directive_;
  std::string nota_option_;
  std::string option_separator_;
};

// --- builders ---------------------------------------------------------------

inline PromptText build_summarize_prompt(const Instance& instance, const EntityMention& subject,
                                         const EntityMention& object,
                                         const PromptRegistry& registry = PromptRegistry::builtin()) {
  PromptText p;
  p.stage = Stage::summarize;
  p.slots = {{"subject", subject.surface}, {"object", object.surface}, {"context", instance.text}};
  p.text = fill_placeholders(registry.pattern(Stage::summarize), p.slots);
  return p;
}

inline PromptText build_question_prompt(const TripleText& triple,
                                        const PromptRegistry& registry = PromptRegistry::builtin()) {
  PromptText p;
  p.stage = Stage::question;
  p.slots = {{"subject", triple.subject}, {"relation", triple.relation_name}, {"object", triple.object}};
  p.text = fill_placeholders(registry.pattern(Stage::question), p.slots);
  return p;
}

inline PromptText build_answer_prompt(std::string_view summarization, std::string_view question,
                                      bool strict_yes_no = false,
                                      const PromptRegistry& registry = PromptRegistry::builtin()) {
  if (summarization.empty()) throw ValidationError("summarization", "empty");
  if (question.empty()) throw ValidationError("question", "empty");
  PromptText p;
  p.stage = Stage::answer;
  p.slots = {{"summarization", std::string(summarization)}, {"question", std::string(question)}};
  auto values = p.slots;
  values["strict_directive"] = strict_yes_no ? registry.strict_directive() : std::string();
  p.text = fill_placeholders(registry.pattern(Stage::answer), values);
  return p;
}

// Candidates are listed in the given order; a NoTA candidate is rendered as
// the registry's "none of the above" option and placed last.
inline PromptText build_vanilla_prompt(const Instance& instance, const EntityMention& subject,
                                       const EntityMention& object, const std::vector<RelationLabel>& candidates,
                                       const PromptRegistry& registry = PromptRegistry::builtin()) {
  if (candidates.empty()) throw ValidationError("candidates", "empty candidate list");
  std::string options;
  bool has_nota = false;
  for (const auto& label : candidates) {
    if (label.is_nota) {
      has_nota = true;
      continue;
    }
    if (!options.empty()) options += registry.option_separator();
    options += label.display_name;
  }
  if (has_nota) {
    if (!options.empty()) options += registry.option_separator();
    options += registry.nota_option();
  }
  PromptText p;
  p.stage = Stage::vanilla;
  p.slots = {{"subject", subject.surface}, {"object", object.surface}, {"context", instance.text}, {"options", options}};
  p.text = fill_placeholders(registry.pattern(Stage::vanilla), p.slots);
  return p;
}

// --- question templates (question-generation ablation) ----------------------

struct QuestionTemplate {
  // "*" marks a generic template usable for any relation.
  std::string relation_id;
  std::string pattern;
};

inline void check_template(const QuestionTemplate& t) {
  if (count_occurrences(t.pattern, "{subject}") != 1 || count_occurrences(t.pattern, "{object}") != 1)
    throw ValidationError("templates[" + t.relation_id + "].pattern",
                          "must contain {subject} and {object} exactly once");
}

inline std::string build_template_question(const TripleText& triple, const QuestionTemplate& t) {
  if (t.relation_id != "*" && t.relation_id != triple.relation_id)
    throw MismatchError("template for '" + t.relation_id + "' applied to relation '" + triple.relation_id + "'");
  check_template(t);
  return fill_placeholders(t.pattern,
                           {{"subject", triple.subject}, {"object", triple.object}, {"relation", triple.relation_name}});
}

class TemplateSet {
 public:
  TemplateSet() = default;
  explicit TemplateSet(std::vector<QuestionTemplate> templates) {
    for (auto& t : templates) {
      check_template(t);
      if (t.relation_id == "*")
        generic_ = t;
      else
        by_relation_[t.relation_id] = std::move(t);
    }
  }

  // Accepts a bare list or {"templates": [...]}.
  static TemplateSet from_json(const json& j) {
    const json& list = j.is_object() ? j.at("templates") : j;
    std::vector<QuestionTemplate> templates;
    for (const auto& item : list) templates.push_back({item.at("relation_id").get<std::string>(), item.at("pattern").get<std::string>()});
    return TemplateSet(std::move(templates));
  }

  static TemplateSet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open question templates '" + path + "'");
    return from_json(json::parse(in));
  }

  // Relation-specific template first, generic fallback second.
  const QuestionTemplate* find(std::string_view relation_id) const {
    if (auto it = by_relation_.find(std::string(relation_id)); it != by_relation_.end()) return &it->second;
    return generic_ ? &*generic_ : nullptr;
  }

  std::string question_for(const TripleText& triple) const {
    const auto* t = find(triple.relation_id);
    if (!t) throw MismatchError("no question template for relation '" + triple.relation_id + "'");
    return build_template_question(triple, *t);
  }

 private:
  std::map<std::string, QuestionTemplate> by_relation_;
  std::optional<QuestionTemplate> generic_;
};

// --- parsing ----------------------------------------------------------------

// Word characters for boundary detection: ASCII letters plus every byte of a
// multi-byte UTF-8 sequence.
inline bool is_word_byte(unsigned char c) { return std::isalpha(c) || c >= 0x80; }

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool whole_word_at(std::string_view lowered, std::size_t pos, std::string_view word) {
  if (lowered.compare(pos, word.size(), word) != 0) return false;
  if (pos > 0 && is_word_byte(static_cast<unsigned char>(lowered[pos - 1])) &&
      is_word_byte(static_cast<unsigned char>(word.front())))
    return false;
  const std::size_t end = pos + word.size();
  if (end < lowered.size() && is_word_byte(static_cast<unsigned char>(lowered[end])) &&
      is_word_byte(static_cast<unsigned char>(word.back())))
    return false;
  return true;
}

inline ParsedAnswer parse_yes_no(std::string_view raw) {
  ParsedAnswer answer;
  answer.raw = std::string(raw);
  const std::string lowered = ascii_lower(raw);
  for (std::size_t pos = 0; pos < lowered.size(); ++pos) {
    if (pos + 3 <= lowered.size() && whole_word_at(lowered, pos, "yes")) {
      answer.verdict = Verdict::yes;
      answer.matched_span = {pos, pos + 3};
      return answer;
    }
    if (pos + 2 <= lowered.size() && whole_word_at(lowered, pos, "no")) {
      answer.verdict = Verdict::no;
      answer.matched_span = {pos, pos + 2};
      return answer;
    }
  }
  return answer;
}

// First schema label whose display name occurs as a whole phrase in raw,
// longest match winning at equal positions. The registry's NoTA option text
// also resolves to the schema's NoTA label. Unresolvable output maps to NoTA
// when the schema has one, otherwise to RelationLabel::invalid_output().
inline RelationLabel parse_vanilla_label(std::string_view raw, const RelationSchema& schema,
                                         const PromptRegistry& registry = PromptRegistry::builtin()) {
  std::vector<std::pair<std::string, const RelationLabel*>> names;
  for (const auto& label : schema.labels()) {
    auto name = ascii_lower(label.display_name);
    if (!name.empty()) names.emplace_back(std::move(name), &label);
  }
  if (const auto* nota = schema.nota()) names.emplace_back(ascii_lower(registry.nota_option()), nota);

  const std::string lowered = ascii_lower(raw);
  for (std::size_t pos = 0; pos < lowered.size(); ++pos) {
    const RelationLabel* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& [name, label] : names) {
      if (name.size() > best_len && pos + name.size() <= lowered.size() && whole_word_at(lowered, pos, name)) {
        best = label;
        best_len = name.size();
      }
    }
    if (best) return *best;
  }
  if (const auto* nota = schema.nota()) return *nota;
  return RelationLabel::invalid_output();
}

}  // namespace sumask
