#include <gtest/gtest.h>

#include <numeric>

#include "support.hpp"

using namespace sumask;
using namespace testing_support;

namespace {

std::vector<std::string> ids(const std::vector<RelationLabel>& labels) {
  std::vector<std::string> out;
  for (const auto& l : labels) out.push_back(l.id);
  return out;
}

std::size_t total(const std::map<std::string, std::size_t>& quotas) {
  return std::accumulate(quotas.begin(), quotas.end(), std::size_t{0}, [](std::size_t a, const auto& kv) { return a + kv.second; });
}

}  // namespace

TEST(Descriptors, ShippedSchemasHaveReleaseSizes) {
  const auto fewrel = load_descriptor(source_path("data/datasets/fewrel.json"));
  EXPECT_EQ(fewrel.schema.size(), 80u);
  EXPECT_FALSE(fewrel.schema.nota());
  const auto nyt = load_descriptor(source_path("data/datasets/nyt.json"));
  EXPECT_EQ(nyt.schema.size(), 24u);
  EXPECT_EQ(nyt.task, TaskKind::multi_triple);
  EXPECT_TRUE(nyt.typed_entities);
  for (const char* name : {"tacred", "tacrev"}) {
    const auto d = load_descriptor(source_path(std::string("data/datasets/") + name + ".json"));
    EXPECT_EQ(d.schema.size(), 42u);
    ASSERT_TRUE(d.schema.nota());
    EXPECT_EQ(d.schema.nota()->id, "no_relation");
  }
}

TEST(Descriptors, RoundTripAndMultiTripleNeedsTypes) {
  const auto d = load_descriptor(source_path("data/datasets/nyt.json"));
  const auto back = descriptor_from_json(descriptor_to_json(d));
  EXPECT_EQ(descriptor_to_json(back), descriptor_to_json(d));
  auto j = descriptor_to_json(d);
  j["typed_entities"] = false;
  EXPECT_THROW(descriptor_from_json(j), ValidationError);
  j["typed_entities"] = true;
  j["task"] = "multi-label";
  EXPECT_THROW(descriptor_from_json(j), ValidationError);
}

TEST(Load, SamplesValidate) {
  const auto fewrel = load(load_descriptor(source_path("samples/fewrel_mini.descriptor.json")), source_path("samples/fewrel_mini.jsonl"));
  EXPECT_EQ(fewrel.instances.size(), 100u);
  const auto tacred = load(load_descriptor(source_path("data/datasets/tacred.json")), source_path("samples/tacred_mini.jsonl"));
  EXPECT_EQ(tacred.instances.size(), 60u);
  // a subset of the release triggers an informational warning, not a failure
  EXPECT_FALSE(tacred.warnings.empty());
  const auto nyt = load(load_descriptor(source_path("data/datasets/nyt.json")), source_path("samples/nyt_mini.jsonl"));
  EXPECT_EQ(nyt.instances.size(), 34u);
}

TEST(Load, MalformedLineReportsLineNumber) {
  TempDir dir;
  std::istringstream src(read_file(source_path("samples/fewrel_mini.jsonl")));
  std::string text, line;
  for (int n = 1; std::getline(src, line); ++n) text += (n == 17 ? line.substr(0, line.size() / 2) : line) + "\n";
  write_file(dir.file("bad.jsonl"), text);
  try {
    load(load_descriptor(source_path("samples/fewrel_mini.descriptor.json")), dir.file("bad.jsonl"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 17u);
  }
  std::ifstream in(dir.file("bad.jsonl"));
  try {
    parse_jsonl(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 17u);
  }
}

TEST(Load, ValidationFailuresAggregated) {
  TempDir dir;
  const auto d = load_descriptor(source_path("samples/fewrel_mini.descriptor.json"));
  auto instances = read_jsonl(source_path("samples/fewrel_mini.jsonl"));
  instances[3].gold_triples[0].relation = "P999";
  instances[3].gold_relation = "P999";
  instances[8].entities[1].span = Span{50, 60};
  export_jsonl(instances, dir.file("two.jsonl"));
  try {
    load(d, dir.file("two.jsonl"));
    FAIL();
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("2 invalid"), std::string::npos) << what;
    EXPECT_NE(what.find("line 4"), std::string::npos) << what;
    EXPECT_NE(what.find("line 9"), std::string::npos) << what;
  }
}

TEST(Load, JsonlRoundTrip) {
  TempDir dir;
  const auto instances = read_jsonl(source_path("samples/nyt_mini.jsonl"));
  export_jsonl(instances, dir.file("copy.jsonl"));
  EXPECT_EQ(read_jsonl(dir.file("copy.jsonl")), instances);
}

TEST(Bounds, KnownReleaseSizes) {
  EXPECT_EQ(known_bounds("FewRel")->relations, 80u);
  EXPECT_EQ(known_bounds("tacred")->instances, 15509u);
  EXPECT_EQ(known_bounds("nyt")->relations, 24u);
  EXPECT_FALSE(known_bounds("fewrel-mini"));
}

TEST(Unseen, UniformSubsetInSchemaOrder) {
  const auto d = load_descriptor(source_path("data/datasets/fewrel.json"));
  const auto a = select_unseen(d.schema, 15, 1), b = select_unseen(d.schema, 15, 1), c = select_unseen(d.schema, 15, 2);
  EXPECT_EQ(ids(a), ids(b));
  EXPECT_NE(ids(a), ids(c));
  ASSERT_EQ(a.size(), 15u);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LT(*d.schema.index_of(a[i - 1].id), *d.schema.index_of(a[i].id));
  EXPECT_EQ(select_unseen(d.schema, 80, 9).size(), 80u);
  EXPECT_THROW(select_unseen(d.schema, 81, 1), ValidationError);

  // every relation is drawn about equally often
  std::map<std::string, int> hits;
  for (std::uint64_t seed = 0; seed < 2000; ++seed)
    for (const auto& l : select_unseen(d.schema, 10, seed)) ++hits[l.id];
  EXPECT_EQ(hits.size(), 80u);
  for (const auto& [_, n] : hits) EXPECT_NEAR(n, 250, 70);
}

TEST(Unseen, NotaNeverDrawn) {
  const auto d = load_descriptor(source_path("data/datasets/tacred.json"));
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    for (const auto& l : select_unseen(d.schema, 41, seed)) EXPECT_FALSE(l.is_nota);
}

TEST(Quotas, BalancedClasses) {
  std::map<std::string, std::size_t> counts;
  for (int i = 0; i < 80; ++i) counts["P" + std::to_string(i)] = 700;
  const auto q = allocate_quotas(counts, 1000);
  EXPECT_EQ(total(q), 1000u);
  for (const auto& [_, n] : q) EXPECT_TRUE(n == 12 || n == 13);
}

TEST(Quotas, ProportionalWithinOne) {
  const std::map<std::string, std::size_t> counts{{"a", 12184}, {"b", 2000}, {"c", 1000}, {"d", 325}};
  for (std::size_t n : {1u, 7u, 100u, 999u, 1000u, 15509u}) {
    const auto q = allocate_quotas(counts, n);
    EXPECT_EQ(total(q), n);
    for (const auto& [k, c] : counts) EXPECT_LE(std::abs(static_cast<double>(q.at(k)) - n * c / 15509.0), 1.0) << k << " n=" << n;
  }
  EXPECT_THROW(allocate_quotas(counts, 15510), ValidationError);
}

TEST(Stratified, DeterministicProportionalAndIdentityAtFull) {
  const auto instances = read_jsonl(source_path("samples/tacred_mini.jsonl"));
  const auto a = stratified_sample(instances, 20, 5), b = stratified_sample(instances, 20, 5);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 20u);
  std::size_t nota = 0;
  for (const auto& in : a) nota += class_of(in) == "no_relation";
  EXPECT_NEAR(static_cast<double>(nota), 20.0 * 40 / 60, 1.0);
  EXPECT_EQ(stratified_sample(instances, instances.size(), 3), sorted_by_id(instances));
  std::set<std::string> unique;
  for (const auto& in : a) unique.insert(in.id);
  EXPECT_EQ(unique.size(), a.size());
}

TEST(Adapters, FewrelNative) {
  const auto [instances, schema] = adapt_fewrel(parse_json_file(source_path("samples/native/fewrel_native.json")),
                                                parse_json_file(source_path("samples/native/fewrel_pid2name.json")));
  ASSERT_FALSE(instances.empty());
  EXPECT_EQ(schema.at("P26").display_name, "spouse");
  const auto first = *std::find_if(instances.begin(), instances.end(), [](const Instance& i) { return i.gold_relation == "P26"; });
  EXPECT_EQ(first.entities[0].surface, "Dmitri Weber");
  EXPECT_EQ(first.entities[0].span, (Span{3, 5}));
  for (const auto& in : instances) EXPECT_NO_THROW(validate_instance(in, schema));
}

TEST(Adapters, TacredNativeEndsInclusive) {
  const auto [instances, schema] = adapt_tacred(parse_json_file(source_path("samples/native/tacred_native.json")));
  ASSERT_FALSE(instances.empty());
  const auto& first = instances.front();
  EXPECT_EQ(first.entities[0].surface, "Vera Dahl");
  EXPECT_EQ(first.entities[0].span, (Span{0, 2}));
  EXPECT_EQ(first.entities[1].type, std::optional<std::string>("PERSON"));
  EXPECT_TRUE(first.gold_triples.empty());
  ASSERT_TRUE(schema.nota());
  EXPECT_EQ(schema.nota()->id, "no_relation");
  for (const auto& in : instances) EXPECT_NO_THROW(validate_instance(in, schema));
}

TEST(Adapters, TacredNativeMatchesCanonicalSample) {
  const auto [instances, _] = adapt_tacred(parse_json_file(source_path("samples/native/tacred_native.json")));
  std::map<std::string, Instance> canonical;
  for (auto& in : read_jsonl(source_path("samples/tacred_mini.jsonl"))) canonical[in.id] = in;
  ASSERT_EQ(instances.size(), 12u);
  for (const auto& in : instances) {
    ASSERT_TRUE(canonical.count(in.id)) << in.id;
    EXPECT_EQ(in.entities, canonical[in.id].entities) << in.id;
    EXPECT_EQ(in.gold_relation, canonical[in.id].gold_relation);
  }
}

TEST(Adapters, NytNative) {
  std::ifstream in(source_path("samples/native/nyt_native.jsonl"));
  const auto [instances, schema] = adapt_nyt(in);
  ASSERT_FALSE(instances.empty());
  const auto& first = instances.front();
  EXPECT_EQ(first.id, "nyt-000");
  ASSERT_EQ(first.entities.size(), 2u);
  EXPECT_EQ(first.entities[0].surface, "Aldoria");
  EXPECT_EQ(first.entities[0].type, std::optional<std::string>("LOCATION"));
  EXPECT_EQ(first.gold_triples, (std::vector<Triple>{{0, "/location/location/contains", 1}}));
  const auto nyt = load_descriptor(source_path("data/datasets/nyt.json"));
  for (const auto& i : instances) EXPECT_NO_THROW(validate_instance(i, nyt.schema));

  std::istringstream bad("{\"text\": \"a\", \"triple_list\": []}\n{oops\n");
  try {
    adapt_nyt(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Adapters, InferSchemaMarksNota) {
  const auto instances = read_jsonl(source_path("samples/tacred_mini.jsonl"));
  const auto s = infer_schema(instances, std::string("no_relation"));
  ASSERT_TRUE(s.nota());
  EXPECT_EQ(s.nota()->id, "no_relation");
  EXPECT_TRUE(s.contains("per:spouse"));
  EXPECT_FALSE(infer_schema(instances).nota());
}
