#pragma once
// Scoring: macro/micro F1 variants, NoTA-excluded scoring, triple-level
// micro, per-relation accuracy and the N-triple / overlap-pattern splits.

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sumask/core.hpp"
#include "sumask/pipeline.hpp"

namespace sumask {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

inline PRF prf_from_counts(std::size_t tp, std::size_t predicted, std::size_t gold) {
  PRF m;
  m.precision = safe_div(static_cast<double>(tp), static_cast<double>(predicted));
  m.recall = safe_div(static_cast<double>(tp), static_cast<double>(gold));
  m.f1 = harmonic(m.precision, m.recall);
  return m;
}

inline void to_json(json& j, const PRF& m) { j = json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}}; }
inline void from_json(const json& j, PRF& m) {
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").get<double>();
}

struct ClassScore {
  PRF prf;
  std::size_t tp = 0, predicted = 0, support = 0;
  double accuracy = 0.0;  // tp / support
};

inline void check_aligned(const std::vector<std::string>& preds, const std::vector<std::string>& golds) {
  if (preds.size() != golds.size())
    throw LabelMismatchError("predictions (" + std::to_string(preds.size()) + ") and golds (" + std::to_string(golds.size()) +
                             ") differ in length");
}

// Per-class counts over `labels`. Predictions outside `labels` (the invalid
// output sentinel, NoTA when excluded) are simply wrong.
inline std::map<std::string, ClassScore> per_class_prf(const std::vector<std::string>& preds, const std::vector<std::string>& golds,
                                                       const std::vector<std::string>& labels) {
  check_aligned(preds, golds);
  std::map<std::string, ClassScore> out;
  for (const auto& l : labels) out[l];
  for (std::size_t i = 0; i < golds.size(); ++i) {
    auto g = out.find(golds[i]);
    if (g == out.end()) throw LabelMismatchError("gold label '" + golds[i] + "' is not in the label set");
    ++g->second.support;
    if (auto p = out.find(preds[i]); p != out.end()) {
      ++p->second.predicted;
      if (preds[i] == golds[i]) ++p->second.tp;
    }
  }
  for (auto& [_, s] : out) {
    s.prf = prf_from_counts(s.tp, s.predicted, s.support);
    s.accuracy = safe_div(static_cast<double>(s.tp), static_cast<double>(s.support));
  }
  return out;
}

// Unweighted mean of per-class P, R and F1.
inline PRF macro_prf(const std::vector<std::string>& preds, const std::vector<std::string>& golds, const std::vector<std::string>& labels) {
  if (labels.empty()) throw LabelMismatchError("empty label set");
  const auto classes = per_class_prf(preds, golds, labels);
  PRF m;
  for (const auto& [_, s] : classes) {
    m.precision += s.prf.precision;
    m.recall += s.prf.recall;
    m.f1 += s.prf.f1;
  }
  const auto n = static_cast<double>(classes.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

// Single-label micro over all classes: P = R = F1 = accuracy.
inline PRF micro_all(const std::vector<std::string>& preds, const std::vector<std::string>& golds) {
  check_aligned(preds, golds);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) correct += preds[i] == golds[i];
  const double acc = safe_div(static_cast<double>(correct), static_cast<double>(golds.size()));
  return {acc, acc, acc};
}

// Any non-NoTA prediction counts as a guess, including the invalid-output
// sentinel.
inline PRF micro_nota_excluded(const std::vector<std::string>& preds, const std::vector<std::string>& golds, const std::string& nota) {
  check_aligned(preds, golds);
  std::size_t tp = 0, guessed = 0, gold = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const bool pred_pos = preds[i] != nota, gold_pos = golds[i] != nota;
    guessed += pred_pos;
    gold += gold_pos;
    tp += pred_pos && gold_pos && preds[i] == golds[i];
  }
  return prf_from_counts(tp, guessed, gold);
}

inline PRF triple_micro(const std::vector<std::vector<Triple>>& pred_sets, const std::vector<std::vector<Triple>>& gold_sets) {
  if (pred_sets.size() != gold_sets.size()) throw LabelMismatchError("prediction and gold triple lists differ in length");
  std::size_t tp = 0, predicted = 0, gold = 0;
  for (std::size_t i = 0; i < gold_sets.size(); ++i) {
    const std::set<Triple> p(pred_sets[i].begin(), pred_sets[i].end());
    const std::set<Triple> g(gold_sets[i].begin(), gold_sets[i].end());
    predicted += p.size();
    gold += g.size();
    for (const auto& t : p) tp += g.count(t);
  }
  return prf_from_counts(tp, predicted, gold);
}

enum class OverlapPattern { SEP, EPO, SEO, NEO };

inline std::string_view to_string(OverlapPattern p) {
  switch (p) {
    case OverlapPattern::SEP: return "SEP";
    case OverlapPattern::EPO: return "EPO";
    case OverlapPattern::SEO: return "SEO";
    case OverlapPattern::NEO: return "NEO";
  }
  return "NEO";
}

inline constexpr OverlapPattern kAllPatterns[] = {OverlapPattern::SEP, OverlapPattern::NEO, OverlapPattern::SEO, OverlapPattern::EPO};

// Precedence SEP > EPO > SEO > NEO over unordered entity pairs. Duplicate
// triples are counted once.
inline OverlapPattern overlap_pattern(const std::vector<Triple>& triples) {
  if (triples.empty()) throw EmptyError("overlap pattern of an empty triple set");
  const std::set<Triple> unique(triples.begin(), triples.end());
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> pair_count;
  std::map<std::size_t, std::size_t> entity_count;
  for (const auto& t : unique) {
    ++pair_count[std::minmax(t.subject, t.object)];
    ++entity_count[t.subject];
    if (t.object != t.subject) ++entity_count[t.object];
  }
  if (pair_count.size() == 1) return OverlapPattern::SEP;
  for (const auto& [_, c] : pair_count)
    if (c >= 2) return OverlapPattern::EPO;
  for (const auto& [_, c] : entity_count)
    if (c >= 2) return OverlapPattern::SEO;
  return OverlapPattern::NEO;
}

inline constexpr const char* kTripleBuckets[] = {"1", "2", "3", "4", "5+"};

inline std::string triple_bucket(std::size_t n) {
  if (n == 0) throw ValidationError("gold_triples", "triple-count buckets need at least one triple");
  return n >= 5 ? "5+" : std::to_string(n);
}

inline std::map<std::string, std::vector<Instance>> bucket_by_triple_count(const std::vector<Instance>& instances) {
  std::map<std::string, std::vector<Instance>> out;
  for (const auto* key : kTripleBuckets) out[key];
  for (const auto& in : instances) out[triple_bucket(in.gold_triples.size())].push_back(in);
  return out;
}

// --- per-relation accuracy -------------------------------------------------

struct RelationAccuracy {
  std::size_t yes = 0, total = 0;
  double accuracy() const { return safe_div(static_cast<double>(yes), static_cast<double>(total)); }
};

struct RelationAccuracyResult {
  std::map<std::string, RelationAccuracy> per_relation;
  std::size_t errored = 0;
};

// For each gold triple, asks only the gold relation's chains; accuracy is the
// fraction voting yes. Provider failures are counted, auth failures abort.
inline RelationAccuracyResult per_relation_accuracy(const std::vector<Instance>& instances, const PipelineConfig& cfg, PipelineContext& ctx) {
  validate_config(cfg);
  RelationAccuracyResult result;
  for (const auto& instance : instances) {
    for (const auto& triple : instance.gold_triples) {
      const auto& label = ctx.schema.at(triple.relation);
      if (label.is_nota) continue;
      try {
        const auto set = run_chains(instance, {triple.subject, triple.object}, label, cfg, ctx);
        auto& acc = result.per_relation[label.id];
        ++acc.total;
        acc.yes += set.vote == Verdict::yes;
      } catch (const AuthError&) {
        throw;
      } catch (const ProviderError&) {
        ++result.errored;
      }
    }
  }
  return result;
}

// --- reports ---------------------------------------------------------------

// One instance's predictions as read back from a predictions file.
struct ScoredInstance {
  std::string id;
  bool errored = false;
  std::vector<Prediction> pairs;
};

inline std::string predicted_label(const ScoredInstance& s) {
  if (s.pairs.empty() || s.pairs.front().predicted.empty()) return RelationLabel::invalid_output().id;
  return s.pairs.front().predicted.front();
}

inline std::vector<Triple> predicted_triples(const ScoredInstance& s, const RelationSchema& schema) {
  std::vector<Triple> out;
  for (const auto& p : s.pairs)
    for (const auto& r : p.predicted) {
      const auto* label = schema.find(r);
      if (label && !label->is_nota) out.push_back({p.pair.subject, r, p.pair.object});
    }
  return out;
}

struct EvalReport {
  std::string dataset;
  std::string task;
  std::map<std::string, PRF> overall;  // metric mode -> scores
  std::map<std::string, ClassScore> per_relation;
  std::map<std::string, PRF> per_triple_count;
  std::map<std::string, std::size_t> triple_count_support;
  std::map<std::string, PRF> per_pattern;
  std::map<std::string, std::size_t> pattern_support;
  std::map<std::string, RelationAccuracy> relation_accuracy;
  std::size_t scored_count = 0;
  std::size_t errored_count = 0;
  std::vector<std::string> notes;
};

// Aligns predictions with golds by id; both sides must carry exactly the
// same ids.
inline std::vector<std::pair<const Instance*, const ScoredInstance*>> align_by_id(const std::vector<Instance>& golds,
                                                                                  const std::vector<ScoredInstance>& preds) {
  std::map<std::string, const ScoredInstance*> by_id;
  for (const auto& p : preds)
    if (!by_id.emplace(p.id, &p).second) throw MismatchError("duplicate prediction for instance '" + p.id + "'");
  std::vector<std::pair<const Instance*, const ScoredInstance*>> out;
  for (const auto& g : golds) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) throw MismatchError("no prediction for instance '" + g.id + "'");
    out.emplace_back(&g, it->second);
    by_id.erase(it);
  }
  if (!by_id.empty()) throw MismatchError("prediction for unknown instance '" + by_id.begin()->first + "'");
  return out;
}

// Single-label scoring. Macro averages run over the gold labels present in
// the scored set, so an m-relation subset is averaged over its m classes.
inline EvalReport evaluate_classification(const std::vector<Instance>& golds, const std::vector<ScoredInstance>& preds,
                                          const RelationSchema& schema, const std::string& dataset = "") {
  EvalReport report;
  report.dataset = dataset;
  report.task = "single-label";
  std::vector<std::string> p, g;
  std::set<std::string> present;
  for (const auto& [gold, pred] : align_by_id(golds, preds)) {
    if (pred->errored) {
      ++report.errored_count;
      continue;
    }
    const auto label = single_gold(*gold);
    if (!label) throw LabelMismatchError("instance '" + gold->id + "' has no gold relation");
    g.push_back(*label);
    p.push_back(predicted_label(*pred));
    present.insert(*label);
  }
  report.scored_count = g.size();
  if (g.empty()) {
    report.notes.push_back("no scored instances");
    return report;
  }
  const auto* nota = schema.nota();
  std::vector<std::string> labels, labels_no_nota;
  for (const auto& l : schema.labels())
    if (present.count(l.id)) {
      labels.push_back(l.id);
      if (!l.is_nota) labels_no_nota.push_back(l.id);
    }
  for (const auto& id : present)
    if (!schema.contains(id)) throw LabelMismatchError("gold label '" + id + "' is not in the schema");

  report.per_relation = per_class_prf(p, g, labels);
  report.overall["micro-all"] = micro_all(p, g);
  if (nota) {
    report.overall["micro-nota-excluded"] = micro_nota_excluded(p, g, nota->id);
    report.overall["macro-nota-included"] = macro_prf(p, g, labels);
    report.notes.push_back("micro-all counts NoTA as a class; micro-nota-excluded scores only non-NoTA predictions");
  } else {
    report.overall["macro-prf"] = macro_prf(p, g, labels);
  }
  if (report.errored_count)
    report.notes.push_back(std::to_string(report.errored_count) + " errored instance(s) excluded from all denominators");
  return report;
}

inline EvalReport evaluate_triples(const std::vector<Instance>& golds, const std::vector<ScoredInstance>& preds,
                                   const RelationSchema& schema, const std::string& dataset = "") {
  EvalReport report;
  report.dataset = dataset;
  report.task = "multi-triple";
  std::vector<std::vector<Triple>> all_p, all_g;
  std::map<std::string, std::pair<std::vector<std::vector<Triple>>, std::vector<std::vector<Triple>>>> buckets, patterns;
  for (const auto& [gold, pred] : align_by_id(golds, preds)) {
    if (pred->errored) {
      ++report.errored_count;
      continue;
    }
    auto pt = predicted_triples(*pred, schema);
    all_p.push_back(pt);
    all_g.push_back(gold->gold_triples);
    if (!gold->gold_triples.empty()) {
      auto& b = buckets[triple_bucket(gold->gold_triples.size())];
      b.first.push_back(pt);
      b.second.push_back(gold->gold_triples);
      auto& q = patterns[std::string(to_string(overlap_pattern(gold->gold_triples)))];
      q.first.push_back(pt);
      q.second.push_back(gold->gold_triples);
    }
  }
  report.scored_count = all_g.size();
  report.overall["triple-micro"] = triple_micro(all_p, all_g);
  for (const auto* key : kTripleBuckets) {
    auto it = buckets.find(key);
    report.triple_count_support[key] = it == buckets.end() ? 0 : it->second.second.size();
    if (it != buckets.end()) report.per_triple_count[key] = triple_micro(it->second.first, it->second.second);
  }
  for (auto pat : kAllPatterns) {
    const std::string key(to_string(pat));
    auto it = patterns.find(key);
    report.pattern_support[key] = it == patterns.end() ? 0 : it->second.second.size();
    if (it != patterns.end()) report.per_pattern[key] = triple_micro(it->second.first, it->second.second);
  }

  // Per-relation P/R/F1 over triples.
  std::map<std::string, ClassScore> per;
  for (std::size_t i = 0; i < all_g.size(); ++i) {
    const std::set<Triple> ps(all_p[i].begin(), all_p[i].end()), gs(all_g[i].begin(), all_g[i].end());
    for (const auto& t : ps) {
      auto& s = per[t.relation];
      ++s.predicted;
      s.tp += gs.count(t);
    }
    for (const auto& t : gs) ++per[t.relation].support;
  }
  for (auto& [_, s] : per) {
    s.prf = prf_from_counts(s.tp, s.predicted, s.support);
    s.accuracy = safe_div(static_cast<double>(s.tp), static_cast<double>(s.support));
  }
  report.per_relation = std::move(per);
  report.notes.push_back("overlap patterns use unordered entity pairs with precedence SEP > EPO > SEO > NEO");
  if (report.errored_count)
    report.notes.push_back(std::to_string(report.errored_count) + " errored instance(s) excluded from all denominators");
  return report;
}

inline json report_to_json(const EvalReport& r) {
  json per_relation = json::object();
  for (const auto& [id, s] : r.per_relation)
    per_relation[id] = {{"precision", s.prf.precision}, {"recall", s.prf.recall}, {"f1", s.prf.f1},
                        {"accuracy", s.accuracy},       {"support", s.support},   {"predicted", s.predicted}};
  json buckets = json::object();
  for (const auto& [k, n] : r.triple_count_support) {
    json entry{{"support", n}};
    if (auto it = r.per_triple_count.find(k); it != r.per_triple_count.end()) entry.update(json(it->second));
    buckets[k] = entry;
  }
  json patterns = json::object();
  for (const auto& [k, n] : r.pattern_support) {
    json entry{{"support", n}};
    if (auto it = r.per_pattern.find(k); it != r.per_pattern.end()) entry.update(json(it->second));
    patterns[k] = entry;
  }
  json accuracy = json::object();
  for (const auto& [id, a] : r.relation_accuracy) accuracy[id] = {{"yes", a.yes}, {"total", a.total}, {"accuracy", a.accuracy()}};
  return json{{"dataset", r.dataset},
              {"task", r.task},
              {"overall", r.overall},
              {"per_relation", per_relation},
              {"per_triple_count", buckets},
              {"per_pattern", patterns},
              {"relation_accuracy", accuracy},
              {"scored_count", r.scored_count},
              {"errored_count", r.errored_count},
              {"notes", r.notes}};
}

inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

inline std::string pad(const std::string& s, std::size_t width) { return s.size() >= width ? s : s + std::string(width - s.size(), ' '); }

inline std::string report_to_text(const EvalReport& r) {
  std::ostringstream out;
  out << "dataset: " << (r.dataset.empty() ? "-" : r.dataset) << "  task: " << r.task << "  scored: " << r.scored_count
      << "  errored: " << r.errored_count << "\n\n";
  out << pad("metric", 22) << pad("P", 9) << pad("R", 9) << "F1\n";
  for (const auto& [mode, m] : r.overall) out << pad(mode, 22) << pad(pct(m.precision), 9) << pad(pct(m.recall), 9) << pct(m.f1) << '\n';
  if (!r.per_triple_count.empty()) {
    out << '\n' << pad("N", 22) << pad("P", 9) << pad("R", 9) << pad("F1", 9) << "n\n";
    for (const auto& [k, m] : r.per_triple_count)
      out << pad(k, 22) << pad(pct(m.precision), 9) << pad(pct(m.recall), 9) << pad(pct(m.f1), 9) << r.triple_count_support.at(k) << '\n';
  }
  if (!r.per_pattern.empty()) {
    out << '\n' << pad("pattern", 22) << pad("P", 9) << pad("R", 9) << pad("F1", 9) << "n\n";
    for (auto pat : kAllPatterns) {
      const std::string k(to_string(pat));
      if (auto it = r.per_pattern.find(k); it != r.per_pattern.end())
        out << pad(k, 22) << pad(pct(it->second.precision), 9) << pad(pct(it->second.recall), 9) << pad(pct(it->second.f1), 9)
            << r.pattern_support.at(k) << '\n';
    }
  }
  if (!r.per_relation.empty()) {
    std::size_t width = 10;
    for (const auto& [id, _] : r.per_relation) width = std::max(width, id.size() + 2);
    out << '\n' << pad("relation", width) << pad("P", 9) << pad("R", 9) << pad("F1", 9) << pad("acc", 9) << "support\n";
    for (const auto& [id, s] : r.per_relation)
      out << pad(id, width) << pad(pct(s.prf.precision), 9) << pad(pct(s.prf.recall), 9) << pad(pct(s.prf.f1), 9) << pad(pct(s.accuracy), 9)
          << s.support << '\n';
  }
  if (!r.relation_accuracy.empty()) {
    out << "\ngold-chain accuracy\n";
    for (const auto& [id, a] : r.relation_accuracy) out << pad(id, 40) << pad(pct(a.accuracy()), 9) << a.total << '\n';
  }
  for (const auto& n : r.notes) out << "note: " << n << '\n';
  return out.str();
}

// Figure-style CSV: one row per overlap pattern, then one per N bucket.
inline std::string report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "group,key,precision,recall,f1,support\n";
  auto row = [&](const char* group, const std::string& key, const PRF& m, std::size_t n) {
    out << group << ',' << key << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << n << '\n';
  };
  for (const auto& [mode, m] : r.overall) row("overall", mode, m, r.scored_count);
  for (auto pat : kAllPatterns) {
    const std::string k(to_string(pat));
    if (auto it = r.per_pattern.find(k); it != r.per_pattern.end()) row("pattern", k, it->second, r.pattern_support.at(k));
  }
  for (const auto& [k, m] : r.per_triple_count) row("triple_count", k, m, r.triple_count_support.at(k));
  for (const auto& [id, s] : r.per_relation) row("relation", id, s.prf, s.support);
  return out.str();
}

// Mean of each overall metric across reports (e.g. several seeds).
inline json average_reports(const std::vector<json>& reports) {
  if (reports.empty()) throw EmptyError("no reports to average");
  std::map<std::string, std::vector<PRF>> by_mode;
  for (const auto& r : reports)
    for (const auto& [mode, m] : r.at("overall").items()) by_mode[mode].push_back(m.get<PRF>());
  json out = json::object();
  for (const auto& [mode, list] : by_mode) {
    PRF mean;
    for (const auto& m : list) {
      mean.precision += m.precision;
      mean.recall += m.recall;
      mean.f1 += m.f1;
    }
    const auto n = static_cast<double>(list.size());
    mean.precision /= n;
    mean.recall /= n;
    mean.f1 /= n;
    out[mode] = json(mean);
    out[mode]["runs"] = list.size();
  }
  return out;
}

}  // namespace sumask
