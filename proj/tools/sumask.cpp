// sumask: ingest, run, eval, report, cache and validate-mapping.
//
// Exit codes: 0 ok, 1 usage or other failure, 2 input parse failure,
// 3 provider authentication failure, 4 prediction/gold id mismatch,
// 5 mapping excludes gold triples.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sumask/sumask.hpp"

namespace {

using namespace sumask;

enum Exit { kOk = 0, kFailure = 1, kParse = 2, kAuth = 3, kMismatch = 4, kViolations = 5 };

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(1, path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

struct Globals {
  std::string cache_dir;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_parallel;
};

// --- ingest -------------------------------------------------------------------

struct IngestArgs {
  std::string format = "canonical-jsonl";
  std::string input;
  std::string output;
  std::string pid2name;
  std::string nota = "no_relation";
  std::string schema_out;
  std::string name;
};

int cmd_ingest(const IngestArgs& a) {
  std::vector<Instance> instances;
  std::optional<RelationSchema> schema;
  switch (format_from_string(a.format)) {
    case SourceFormat::canonical_jsonl:
      instances = read_jsonl(a.input);
      break;
    case SourceFormat::fewrel_native: {
      auto [in, s] = adapt_fewrel(parse_json_file(a.input), a.pid2name.empty() ? json::object() : parse_json_file(a.pid2name));
      instances = std::move(in);
      schema = std::move(s);
      break;
    }
    case SourceFormat::tacred_native: {
      auto [in, s] = adapt_tacred(parse_json_file(a.input), a.nota);
      instances = std::move(in);
      schema = std::move(s);
      break;
    }
    case SourceFormat::nyt_native: {
      std::ifstream file(a.input);
      if (!file) throw Error("cannot open '" + a.input + "'");
      auto [in, s] = adapt_nyt(file);
      instances = std::move(in);
      schema = std::move(s);
      break;
    }
  }
  if (!schema) schema = infer_schema(instances);
  for (auto& in : instances) in = validate_instance(std::move(in), *schema);
  export_jsonl(instances, a.output);

  std::size_t triples = 0;
  for (const auto& in : instances) triples += in.gold_triples.size();
  std::cout << "instances: " << instances.size() << "\nrelations: " << schema->size() << "\ntriples: " << triples << '\n';
  if (!a.schema_out.empty()) {
    DatasetDescriptor d;
    d.name = a.name.empty() ? std::filesystem::path(a.output).stem().string() : a.name;
    d.schema = *schema;
    d.task = a.format == "nyt-native" ? TaskKind::multi_triple : TaskKind::single_label;
    d.typed_entities = a.format != "fewrel-native";
    write_text(a.schema_out, descriptor_to_json(d).dump(2) + "\n");
    std::cout << "descriptor: " << a.schema_out << '\n';
  }
  return kOk;
}

// --- run ----------------------------------------------------------------------

int cmd_run(RunOptions o) {
  auto r = run_experiment(o);
  std::cout << "instances: " << r.instances << "  scored: " << r.scored << "  errored: " << r.errored << '\n'
            << "requested: " << r.calls.requested << "  provider calls: " << r.calls.provider_calls
            << "  cache hits: " << r.calls.cache_hits << "  embedding calls: " << r.embedding_calls << '\n'
            << "predictions: " << o.out << "\nmanifest: " << manifest_path(o) << '\n';
  return kOk;
}

// --- eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string predictions;
  std::string gold;
  std::string descriptor;
  std::string manifest;
  std::string nota;
  std::string json_out;
  std::string text_out;
  std::string csv_out;
};

int cmd_eval(EvalArgs a) {
  if (!a.manifest.empty()) {
    const auto m = read_json(a.manifest);
    if (a.predictions.empty()) a.predictions = m.at("options").at("out").get<std::string>();
    if (a.gold.empty()) a.gold = m.at("split").at("gold").get<std::string>();
    if (a.descriptor.empty()) a.descriptor = m.at("options").value("descriptor", std::string());
    if (a.nota.empty()) a.nota = m.at("options").value("nota", std::string());
  }
  if (a.predictions.empty() || a.gold.empty()) throw ValidationError("eval", "need --predictions and --gold, or --manifest");

  const auto golds = read_jsonl(a.gold);
  const auto file = read_predictions(a.predictions);
  std::string name;
  RelationSchema schema;
  std::optional<TaskKind> task;
  if (!a.descriptor.empty()) {
    const auto d = load_descriptor(a.descriptor);
    name = d.name;
    schema = d.schema;
    task = d.task;
  } else {
    name = std::filesystem::path(a.gold).stem().string();
    schema = infer_schema(golds, a.nota.empty() ? std::nullopt : std::optional<std::string>(a.nota));
  }

  bool overlapping = task == TaskKind::multi_triple;
  for (const auto& s : file.instances)
    for (const auto& p : s.pairs) overlapping = overlapping || p.mode == ExtractionMode::overlapping;

  EvalReport report;
  if (file.has_relation_accuracy) {
    align_by_id(golds, file.instances);
    report.dataset = name;
    report.task = "relation-accuracy";
    report.relation_accuracy = file.relation_accuracy;
    for (const auto& s : file.instances) (s.errored ? report.errored_count : report.scored_count) += 1;
    std::size_t yes = 0, total = 0;
    for (const auto& [_, acc] : file.relation_accuracy) {
      yes += acc.yes;
      total += acc.total;
    }
    const double overall = safe_div(static_cast<double>(yes), static_cast<double>(total));
    report.overall["gold-chain-accuracy"] = PRF{overall, overall, overall};
    report.notes.push_back("accuracy = fraction of gold triples whose gold-relation chains vote yes");
  } else if (overlapping) {
    report = evaluate_triples(golds, file.instances, schema, name);
  } else {
    report = evaluate_classification(golds, file.instances, schema, name);
  }

  std::cout << report_to_text(report);
  if (!a.json_out.empty()) write_text(a.json_out, report_to_json(report).dump(2) + "\n");
  if (!a.text_out.empty()) write_text(a.text_out, report_to_text(report));
  if (!a.csv_out.empty()) write_text(a.csv_out, report_to_csv(report));
  return kOk;
}

// --- report -------------------------------------------------------------------

int cmd_report(const std::vector<std::string>& files, bool csv) {
  std::vector<json> reports;
  for (const auto& f : files) reports.push_back(read_json(f));
  std::set<std::string> modes;
  for (const auto& r : reports)
    for (const auto& [mode, _] : r.at("overall").items()) modes.insert(mode);

  if (csv) {
    std::cout << "run,group,key,precision,recall,f1,support\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      for (const auto& [mode, m] : r.at("overall").items())
        std::cout << files[i] << ",overall," << mode << ',' << m["precision"] << ',' << m["recall"] << ',' << m["f1"] << ','
                  << r.value("scored_count", 0) << '\n';
      for (const char* group : {"per_pattern", "per_triple_count"})
        for (const auto& [key, m] : r.value(group, json::object()).items())
          if (m.contains("f1"))
            std::cout << files[i] << ',' << group << ',' << key << ',' << m["precision"] << ',' << m["recall"] << ',' << m["f1"]
                      << ',' << m["support"] << '\n';
    }
    return kOk;
  }

  std::size_t width = 8;
  for (const auto& f : files) width = std::max(width, f.size() + 2);
  for (const auto& mode : modes) {
    std::cout << mode << '\n' << pad("run", width) << pad("P", 9) << pad("R", 9) << "F1\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& overall = reports[i].at("overall");
      if (!overall.contains(mode)) continue;
      const auto m = overall.at(mode).get<PRF>();
      std::cout << pad(files[i], width) << pad(pct(m.precision), 9) << pad(pct(m.recall), 9) << pct(m.f1) << '\n';
    }
    const auto avg = average_reports(reports);
    if (reports.size() > 1 && avg.contains(mode)) {
      const auto m = avg.at(mode).get<PRF>();
      std::cout << pad("mean (" + std::to_string(avg.at(mode).at("runs").get<std::size_t>()) + ")", width) << pad(pct(m.precision), 9)
                << pad(pct(m.recall), 9) << pct(m.f1) << '\n';
    }
    std::cout << '\n';
  }
  return kOk;
}

// --- validate-mapping ---------------------------------------------------------

int cmd_validate_mapping(const std::string& mapping, const std::string& descriptor, const std::string& dataset, const std::string& mode) {
  const auto d = load_descriptor(descriptor);
  const auto table = MappingTable::load(mapping, d.schema);
  std::vector<Instance> instances;
  if (!dataset.empty()) instances = load(d, dataset).instances;
  const auto m = mode.empty() ? (d.task == TaskKind::multi_triple ? ExtractionMode::overlapping : ExtractionMode::classification)
                              : mode_from_string(mode);
  const auto report = validate_mapping(table, d.schema, instances, m);
  std::cout << to_json_report(report).dump(2) << '\n';
  if (!report.violations.empty()) {
    std::cerr << report.violations.size() << " gold triple(s) excluded by their own type pair\n";
    return kViolations;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SumAsk zero-shot relation extraction"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", sumask::kToolVersion);

  Globals g;
  app.add_option("--cache-dir", g.cache_dir, "response cache directory")->envname("SUMASK_CACHE_DIR");
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--seed", g.seed, "random seed for splits and seeded choices");
  app.add_option("--max-parallel", g.max_parallel, "bounded provider concurrency")->check(CLI::PositiveNumber);

  // ingest
  IngestArgs ingest;
  auto* ing = app.add_subcommand("ingest", "convert a native dataset to canonical JSONL");
  ing->add_option("--format", ingest.format, "canonical-jsonl | fewrel-native | tacred-native | nyt-native");
  ing->add_option("--pid2name", ingest.pid2name, "FewRel relation-name map");
  ing->add_option("--nota", ingest.nota, "TACRED no-relation label");
  ing->add_option("--descriptor-out", ingest.schema_out, "also write a dataset descriptor");
  ing->add_option("--name", ingest.name, "dataset name for the descriptor");
  ing->add_option("input", ingest.input)->required();
  ing->add_option("output", ingest.output)->required();

  // run
  auto* run = app.add_subcommand("run", "run a method over a dataset split");
  std::string method, dataset, descriptor, provider, embedder, mapping, templates, prompts, profiles, out, manifest_out, replay,
      distance, chaining, mode, nota, model;
  std::size_t m = 0, sample_size = 0;
  int k = 0, max_tokens = 0, max_retries = 0;
  double max_product = 0.0, temperature = 0.0, rpm = 0.0;
  bool no_summarize = false, no_uncertainty = false, strict = false, emit_raw = false, packing = false, no_fsync = false;
  std::map<std::string, CLI::Option*> opt;
  opt["method"] = run->add_option("--method", method, "sumask | vanilla | relation-accuracy");
  opt["dataset"] = run->add_option("--dataset", dataset, "canonical JSONL");
  opt["descriptor"] = run->add_option("--descriptor", descriptor, "dataset descriptor (schema, task)");
  opt["nota"] = run->add_option("--nota", nota, "NoTA id when the schema is inferred");
  opt["m"] = run->add_option("--m", m, "number of unseen relations to sample");
  opt["sample_size"] = run->add_option("--sample-size", sample_size, "stratified sample size");
  opt["provider"] = run->add_option("--provider", provider, "completion provider URI");
  opt["embedder"] = run->add_option("--embedder", embedder, "embedding provider URI");
  opt["profiles"] = run->add_option("--profiles", profiles, "provider profiles for http: URIs")->envname("SUMASK_PROFILES");
  opt["mapping"] = run->add_option("--mapping", mapping, "entity-type to relation mapping");
  opt["templates"] = run->add_option("--template-questions", templates, "fixed question templates (no question generation)");
  opt["prompts"] = run->add_option("--prompts", prompts, "prompt registry file");
  opt["out"] = run->add_option("--out", out, "predictions JSONL");
  opt["manifest"] = run->add_option("--manifest-out", manifest_out, "manifest path");
  opt["replay"] = run->add_option("--manifest", replay, "rerun with the options recorded in a manifest");
  opt["k"] = run->add_option("--k", k, "samples per stage")->check(CLI::PositiveNumber);
  opt["distance"] = run->add_option("--distance", distance, "euclidean | cosine");
  opt["chaining"] = run->add_option("--chaining", chaining, "aligned | broadcast-best");
  opt["mode"] = run->add_option("--mode", mode, "classification | overlapping");
  opt["max_product"] = run->add_option("--max-product", max_product, "overlapping: keep yes votes with u1*u2*u3 at most this");
  opt["temperature"] = run->add_option("--temperature", temperature);
  opt["max_tokens"] = run->add_option("--max-tokens", max_tokens);
  opt["model"] = run->add_option("--model", model, "model id sent to the provider");
  opt["rpm"] = run->add_option("--requests-per-minute", rpm);
  opt["max_retries"] = run->add_option("--max-retries", max_retries);
  opt["no_summarize"] = run->add_flag("--no-summarize", no_summarize, "answer from the raw sentence");
  opt["no_uncertainty"] = run->add_flag("--no-uncertainty", no_uncertainty, "seeded random choice among yes votes");
  opt["strict"] = run->add_flag("--strict-yes-no", strict, "ask for a bare yes/no answer");
  opt["emit_raw"] = run->add_flag("--emit-raw", emit_raw, "store every chain in the predictions");
  opt["packing"] = run->add_flag("--prompt-packing", packing, "ask for several samples in one prompt");
  opt["no_fsync"] = run->add_flag("--no-cache-fsync", no_fsync, "skip fsync on cache writes");

  // eval
  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "score predictions against gold");
  ev->add_option("--predictions", eval.predictions);
  ev->add_option("--gold", eval.gold, "gold split (written by run next to the predictions)");
  ev->add_option("--descriptor", eval.descriptor);
  ev->add_option("--manifest", eval.manifest, "take predictions, gold and descriptor from a run manifest");
  ev->add_option("--nota", eval.nota);
  ev->add_option("--json", eval.json_out);
  ev->add_option("--text", eval.text_out);
  ev->add_option("--csv", eval.csv_out);

  // report
  std::vector<std::string> report_files;
  bool report_csv = false;
  auto* rep = app.add_subcommand("report", "tabulate (and average) evaluation reports");
  rep->add_option("reports", report_files, "report JSON files")->required();
  rep->add_flag("--csv", report_csv, "per-pattern and per-N rows as CSV");

  // cache
  auto* cache = app.add_subcommand("cache", "inspect or clear the response cache");
  cache->require_subcommand(1);
  auto* cache_stats = cache->add_subcommand("stats", "entry count and size");
  auto* cache_purge = cache->add_subcommand("purge", "delete every entry");

  // validate-mapping
  std::string vm_mapping, vm_descriptor, vm_dataset, vm_mode;
  auto* vm = app.add_subcommand("validate-mapping", "check a type-pair mapping against a dataset");
  vm->add_option("--mapping", vm_mapping)->required();
  vm->add_option("--descriptor", vm_descriptor)->required();
  vm->add_option("--dataset", vm_dataset);
  vm->add_option("--mode", vm_mode, "classification | overlapping");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kFailure;
  }

  try {
    if (ing->parsed()) return cmd_ingest(ingest);

    if (run->parsed()) {
      RunOptions o;
      if (!replay.empty()) o = options_from_json(read_json(replay).at("options"));
      if (!g.config.empty()) o = options_from_json(read_json(g.config), o);
      auto given = [&](const char* name) { return opt.at(name)->count() > 0; };
      if (given("method")) o.method = method_from_string(method);
      if (given("dataset")) o.dataset = dataset;
      if (given("descriptor")) o.descriptor = descriptor;
      if (given("nota")) o.nota = nota;
      if (given("m")) o.m = m;
      if (given("sample_size")) o.sample_size = sample_size;
      if (given("provider")) o.provider = provider;
      if (given("embedder")) o.embedder = embedder;
      if (given("profiles")) o.profiles = profiles;
      if (given("mapping")) o.mapping = mapping;
      if (given("templates")) o.templates = templates;
      if (given("prompts")) o.prompts = prompts;
      if (given("out")) o.out = out;
      if (given("manifest")) o.manifest = manifest_out;
      if (given("k")) o.pipeline.k = k;
      if (given("distance")) o.pipeline.distance = distance_from_string(distance);
      if (given("chaining")) o.pipeline.chaining = chaining_from_string(chaining);
      if (given("mode")) o.pipeline.mode = mode_from_string(mode);
      if (given("max_product")) o.pipeline.max_product = max_product;
      if (given("temperature")) o.pipeline.temperature = temperature;
      if (given("max_tokens")) o.pipeline.max_tokens = max_tokens;
      if (given("model")) o.pipeline.model_id = model;
      if (given("rpm")) o.requests_per_minute = rpm;
      if (given("max_retries")) o.max_retries = max_retries;
      if (given("no_summarize")) o.pipeline.summarize = !no_summarize;
      if (given("no_uncertainty")) o.pipeline.use_uncertainty = !no_uncertainty;
      if (given("strict")) o.pipeline.strict_yes_no = strict;
      if (given("emit_raw")) o.emit_raw = emit_raw;
      if (given("packing")) o.prompt_packing = packing;
      if (given("no_fsync")) o.cache_fsync = !no_fsync;
      if (!g.cache_dir.empty()) o.cache_dir = g.cache_dir;
      if (g.seed) o.pipeline.seed = *g.seed;
      if (g.max_parallel) o.pipeline.max_parallel = *g.max_parallel;
      validate_config(o.pipeline);
      return cmd_run(o);
    }

    if (ev->parsed()) return cmd_eval(eval);
    if (rep->parsed()) return cmd_report(report_files, report_csv);

    if (cache->parsed()) {
      if (g.cache_dir.empty()) throw ValidationError("cache-dir", "no cache directory (use --cache-dir or SUMASK_CACHE_DIR)");
      ResponseCache c(g.cache_dir);
      if (cache_stats->parsed()) {
        const auto s = c.stats();
        std::cout << json{{"root", g.cache_dir}, {"entries", s.entries}, {"bytes", s.bytes}}.dump(2) << '\n';
      } else if (cache_purge->parsed()) {
        std::cout << "purged " << c.purge() << " entries\n";
      }
      return kOk;
    }

    if (vm->parsed()) return cmd_validate_mapping(vm_mapping, vm_descriptor, vm_dataset, vm_mode);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kParse;
  } catch (const AuthError& e) {
    std::cerr << "authentication failed: " << e.what() << " (partial results kept)\n";
    return kAuth;
  } catch (const MismatchError& e) {
    std::cerr << "id mismatch: " << e.what() << '\n';
    return kMismatch;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
