#include <gtest/gtest.h>

#include "support.hpp"

using namespace sumask;
using namespace testing_support;

namespace {

std::vector<std::string> ids(const std::vector<RelationLabel>& labels) {
  std::vector<std::string> out;
  for (const auto& l : labels) out.push_back(l.id);
  return out;
}

struct Tacred {
  DatasetDescriptor descriptor = load_descriptor(source_path("data/datasets/tacred.json"));
  MappingTable table = MappingTable::load(source_path("data/mappings/tacred.json"), descriptor.schema);
};

}  // namespace

TEST(Candidates, PersonCity) {
  const Tacred t;
  EXPECT_EQ(ids(candidates_for(std::string("PERSON"), std::string("CITY"), t.table, t.descriptor.schema)),
            (std::vector<std::string>{"per:cities_of_residence", "per:city_of_birth", "per:city_of_death"}));
}

TEST(Candidates, SchemaOrderNoNotaNoDuplicates) {
  const auto schema = abc_schema();
  const MappingTable table({{"X", "Y", {"C", "A"}}, {"*", "Y", {"A", "B"}}}, DefaultPolicy::none, schema);
  EXPECT_EQ(ids(candidates_for(std::string("X"), std::string("Y"), table, schema)), (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_EQ(ids(candidates_for(std::nullopt, std::string("Y"), table, schema)), (std::vector<std::string>{"A", "B"}));
}

TEST(Candidates, DefaultPolicyAndUntypedEntities) {
  const auto schema = abc_schema();
  const MappingTable none({{"X", "Y", {"A"}}}, DefaultPolicy::none, schema);
  const MappingTable all({{"X", "Y", {"A"}}}, DefaultPolicy::all, schema);
  EXPECT_TRUE(candidates_for(std::string("Y"), std::string("X"), none, schema).empty());
  EXPECT_EQ(ids(candidates_for(std::string("Y"), std::string("X"), all, schema)), (std::vector<std::string>{"A", "B", "C"}));
  // untyped entities only match wildcards, so they fall to the default
  EXPECT_EQ(candidates_for(std::nullopt, std::nullopt, all, schema).size(), 3u);
  EXPECT_TRUE(candidates_for(std::nullopt, std::nullopt, none, schema).empty());
}

TEST(Candidates, SubsetSchemaDropsOtherRelations) {
  const auto full = abc_schema();
  const MappingTable table({{"X", "Y", {"A", "C"}}}, DefaultPolicy::none, full);
  const RelationSchema subset({label("A", "alpha"), label("B", "beta")});
  EXPECT_EQ(ids(candidates_for(std::string("X"), std::string("Y"), table, subset)), std::vector<std::string>{"A"});
}

TEST(MappingTable, RejectsBadRules) {
  const auto schema = abc_schema();
  EXPECT_THROW(MappingTable({{"X", "Y", {"Z"}}}, DefaultPolicy::all, schema), UnknownRelationError);
  EXPECT_THROW(MappingTable({{"X", "Y", {}}}, DefaultPolicy::all, schema), ValidationError);
  EXPECT_THROW(MappingTable({{"*", "*", {"A"}}, {"*", "*", {"B"}}}, DefaultPolicy::all, schema), ValidationError);
  EXPECT_THROW(MappingTable::from_json(json{{"default", "some"}, {"rules", json::array()}}, schema), ValidationError);
  const auto list = MappingTable::from_json(json::parse(R"([{"subject_type":"X","object_type":"Y","relations":["A"]}])"), schema);
  EXPECT_EQ(list.default_policy(), DefaultPolicy::all);
}

TEST(Coverage, ShippedTableCoversSample) {
  const Tacred t;
  const auto loaded = load(t.descriptor, source_path("samples/tacred_mini.jsonl"));
  const auto report = validate_mapping(t.table, t.descriptor.schema, loaded.instances, ExtractionMode::classification);
  EXPECT_TRUE(report.violations.empty()) << to_json_report(report).dump();
  EXPECT_EQ(report.pairs, loaded.instances.size());
  EXPECT_EQ(report.schema_relations, 41u);
  EXPECT_GT(report.mean_candidates, 0.0);
  EXPECT_LT(report.mean_candidates, 41.0);
}

TEST(Coverage, MissingRelationReportedPerTriple) {
  const Tacred t;
  const auto loaded = load(t.descriptor, source_path("samples/tacred_mini.jsonl"));
  auto j = json::parse(read_file(source_path("data/mappings/tacred.json")));
  for (auto& rule : j["rules"]) {
    auto& rels = rule["relations"];
    rels.erase(std::remove(rels.begin(), rels.end(), json("per:spouse")), rels.end());
  }
  const auto broken = MappingTable::from_json(j, t.descriptor.schema);
  const auto report = validate_mapping(broken, t.descriptor.schema, loaded.instances, ExtractionMode::classification);
  std::size_t spouses = 0;
  for (const auto& in : loaded.instances) spouses += in.gold_relation == std::optional<std::string>("per:spouse");
  ASSERT_EQ(report.violations.size(), spouses);
  for (const auto& v : report.violations) {
    EXPECT_EQ(v.relation, "per:spouse");
    EXPECT_EQ(v.subject_type, std::optional<std::string>("PERSON"));
    EXPECT_FALSE(v.instance_id.empty());
  }
}

TEST(Coverage, NytTableCoversSample) {
  const auto d = load_descriptor(source_path("data/datasets/nyt.json"));
  const auto table = MappingTable::load(source_path("data/mappings/nyt.json"), d.schema);
  const auto loaded = load(d, source_path("samples/nyt_mini.jsonl"));
  const auto report = validate_mapping(table, d.schema, loaded.instances, ExtractionMode::overlapping);
  EXPECT_TRUE(report.violations.empty()) << to_json_report(report).dump();
  EXPECT_LT(report.mean_candidates, static_cast<double>(d.schema.size()));
}

TEST(QueryPairs, ClassificationVersusOverlapping) {
  Instance in = pair_instance("q", "a b c", "a", "b", std::nullopt);
  in.entities.push_back({"c", std::nullopt, std::nullopt});
  EXPECT_EQ(query_pairs(in, ExtractionMode::classification).size(), 1u);
  const auto pairs = query_pairs(in, ExtractionMode::overlapping);
  EXPECT_EQ(pairs.size(), 6u);
  for (const auto& p : pairs) EXPECT_NE(p.subject, p.object);
}
