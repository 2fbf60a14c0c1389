#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "phenoeval/concepts.hpp"
#include "phenoeval/error.hpp"
#include "phenoeval/hashing.hpp"
#include "test_support.hpp"

namespace phenoeval {
namespace {

using testing::TempDir;

const TableSpec& spec_named(const std::string& table) {
  const TableSpec* s = find_spec_for_stem(default_table_specs(), table);
  if (s == nullptr) throw std::runtime_error("no spec " + table);
  return *s;
}

RawRow row(const std::string& table, std::map<std::string, std::optional<std::string>> values) {
  return RawRow{table, std::move(values)};
}

TEST(TableSpecs, DefaultConfigHasTheNineTables) {
  const auto& specs = default_table_specs();
  ASSERT_EQ(specs.size(), 9u);
  std::set<std::string> ids;
  for (const auto& s : specs) ids.insert(s.pattern_id);
  for (auto id : supported_pattern_ids()) EXPECT_TRUE(ids.contains(std::string(id))) << id;
}

TEST(TableSpecs, ValidationRejectsBadSpecs) {
  EXPECT_THROW(validate_table_spec({"Infusion Drug", {"drugname"}, "not_a_table"}), ConfigError);
  EXPECT_THROW(validate_table_spec({"", {"drugname"}, "infusion_drug"}), ConfigError);
  EXPECT_THROW(validate_table_spec({"Infusion Drug", {}, "infusion_drug"}), ConfigError);
  EXPECT_THROW(validate_table_spec({"Infusion Drug", {"a", "a"}, "infusion_drug"}), ConfigError);
  EXPECT_NO_THROW(validate_table_spec({"Infusion Drug", {"drugname"}, "infusion_drug"}));
}

TEST(TableSpecs, StemMatchingIgnoresCaseAndSeparators) {
  const auto& specs = default_table_specs();
  for (auto stem : {"nurseCharting", "nurse_charting", "Nurse Charting", "NURSE-CHARTING"}) {
    const TableSpec* s = find_spec_for_stem(specs, stem);
    ASSERT_NE(s, nullptr) << stem;
    EXPECT_EQ(s->table_name, "Nurse Charting");
  }
  EXPECT_EQ(find_spec_for_stem(specs, "vitalPeriodic"), nullptr);
}

// Golden renderings, one per supported table.
TEST(BuildConcept, GoldenRenderingForEveryTable) {
  struct Case {
    std::string table;
    std::map<std::string, std::optional<std::string>> values;
    std::string expected;
  };
  const std::vector<Case> cases = {
      {"Care Plan General", {{"cplgroup", "Ventilation"}, {"cplitemvalue", "Non-invasive ventilation"}},
       "Source = Care Plan General; Concept = Ventilation: Non-invasive ventilation"},
      {"Infusion Drug", {{"drugname", "Propofol"}}, "Source = Infusion Drug; Concept = Propofol"},
      {"Medication", {{"drugname", "MIDAZOLAM 1 MG/ML IJ SOLN"}}, "Source = Medication; Concept = MIDAZOLAM 1 MG/ML IJ SOLN"},
      {"Note", {{"notevalue", "Airway"}, {"notetext", "intubated"}}, "Source = Note; Concept = Airway: intubated"},
      {"Nurse Care", {{"cellattributevalue", "ventilator alarms checked"}},
       "Source = Nurse Care; Concept = ventilator alarms checked"},
      {"Nurse Charting", {{"nursingchartcelltypevalname", "O2 Admin Device"}, {"nursingchartvalue", "BiPAP/CPAP"}},
       "Source = Nurse Charting; Concept = O2 Admin Device: BiPAP/CPAP"},
      {"Nurse Charting", {{"nursingchartcelltypevalname", "O2 Admin Device"}, {"nursingchartvalue", "nasal cannula"}},
       "Source = Nurse Charting; Concept = O2 Admin Device: nasal cannula"},
      {"Respiratory Care", {{"airwaytype", "Tracheostomy"}}, "Source = Respiratory Care; Concept = Tracheostomy"},
      {"Respiratory Charting",
       {{"respcharttypecat", "respFlowSettings"}, {"respchartvaluelabel", "PEEP"}, {"respchartvalue", "5"}},
       "Source = Respiratory Charting; Concept = respFlowSettings: PEEP: 5"},
      {"Treatment", {{"treatmentstring", "pulmonary|ventilation and oxygenation|mechanical ventilation"}},
       "Source = Treatment; Concept = pulmonary|ventilation and oxygenation|mechanical ventilation"},
  };
  for (const auto& c : cases) {
    const auto built = build_concept(spec_named(c.table), row(c.table, c.values));
    ASSERT_TRUE(built) << c.table;
    EXPECT_EQ(built->rendered, c.expected);
    EXPECT_EQ(built->source_table, c.table);
    EXPECT_EQ(built->concept_id, content_id128(c.expected));
    EXPECT_EQ(built->rendered.rfind("Source = " + c.table + "; Concept = ", 0), 0u);
  }
}

TEST(BuildConcept, SkipsNullAndBlankColumnsAndDropsEmptyRows) {
  const auto& nc = spec_named("Nurse Charting");
  auto partial = build_concept(nc, row("Nurse Charting", {{"nursingchartcelltypevalname", std::nullopt},
                                                          {"nursingchartvalue", "  room air "}}));
  ASSERT_TRUE(partial);
  EXPECT_EQ(partial->concept_text, "room air");
  EXPECT_FALSE(build_concept(spec_named("Treatment"), row("Treatment", {{"treatmentstring", std::nullopt}})));
  EXPECT_FALSE(build_concept(nc, row("Nurse Charting", {{"nursingchartcelltypevalname", " \t"},
                                                        {"nursingchartvalue", ""}})));
}

TEST(BuildConcept, CollapsesInternalWhitespace) {
  const auto c = build_concept(spec_named("Infusion Drug"), row("Infusion Drug", {{"drugname", "  Propofol \t\n (mcg)  "}}));
  ASSERT_TRUE(c);
  EXPECT_EQ(c->concept_text, "Propofol (mcg)");
}

TEST(BuildConcept, ContractViolations) {
  const auto& spec = spec_named("Infusion Drug");
  EXPECT_THROW(build_concept(spec, row("Medication", {{"drugname", "x"}})), ContractError);
  EXPECT_THROW(build_concept(spec, row("Infusion Drug", {{"other", "x"}})), ContractError);
  EXPECT_THROW(build_concept({"Infusion Drug", {"drugname"}, "bogus"}, row("Infusion Drug", {{"drugname", "x"}})),
               ConfigError);
}

TEST(ConceptId, StableAndDistinct) {
  EXPECT_EQ(concept_id_for("Source = Medication; Concept = A"), concept_id_for("Source = Medication; Concept = A"));
  EXPECT_EQ(concept_id_for("x").size(), 32u);
  // SHA-256("abc") = ba7816bf8f01cfea414140de5dae2223...
  EXPECT_EQ(content_id128("abc"), "ba7816bf8f01cfea414140de5dae2223");
  std::set<std::string> ids;
  for (int i = 0; i < 20000; ++i) ids.insert(concept_id_for("Source = Note; Concept = " + std::to_string(i)));
  EXPECT_EQ(ids.size(), 20000u);
}

TEST(Dedupe, Examples) {
  const auto c1 = make_concept("Medication", "a");
  const auto c2 = make_concept("Medication", "b");
  const std::vector<ConstructedConcept> in = {c1, c1, c2};
  EXPECT_EQ(dedupe(in), (std::vector<ConstructedConcept>{c1, c2}));
  EXPECT_TRUE(dedupe(std::vector<ConstructedConcept>{}).empty());
}

TEST(Dedupe, FiveHundredRowsWithEightyThreeDistinct) {
  std::mt19937 rng(5);
  std::vector<ConstructedConcept> stream;
  for (int i = 0; i < 83; ++i) stream.push_back(make_concept("Treatment", "t" + std::to_string(i)));
  std::uniform_int_distribution<int> pick(0, 82);
  while (stream.size() < 500) stream.push_back(stream[static_cast<std::size_t>(pick(rng))]);
  std::shuffle(stream.begin(), stream.end(), rng);

  // Oracle: first-seen order via a set.
  std::set<std::string> seen;
  std::vector<std::string> expected;
  for (const auto& c : stream) {
    if (seen.insert(c.rendered).second) expected.push_back(c.rendered);
  }
  const auto out = dedupe(stream);
  ASSERT_EQ(out.size(), 83u);
  ASSERT_EQ(expected.size(), 83u);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].rendered, expected[i]);
}

TEST(Sample, ZeroAndDeterminism) {
  const auto all = testing::synthetic_concepts(300);
  EXPECT_TRUE(sample(all, 0, 1).empty());
  EXPECT_EQ(sample(all, 100, 42), sample(all, 100, 42));
  EXPECT_NE(sample(all, 100, 42), sample(all, 100, 43));
}

TEST(Sample, DistinctMembersOfTheInput) {
  const auto all = testing::synthetic_concepts(200);
  std::set<std::string> universe;
  for (const auto& c : all) universe.insert(c.concept_id);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = sample(all, 150, seed);
    std::set<std::string> ids;
    for (const auto& c : s) {
      EXPECT_TRUE(universe.contains(c.concept_id));
      ids.insert(c.concept_id);
    }
    EXPECT_EQ(ids.size(), 150u);
  }
}

TEST(Sample, ExclusionLeavesNoOverlapOverFiftySeeds) {
  const auto all = testing::synthetic_concepts(400);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto prior = sample(all, 100, seed + 1000);
    std::unordered_set<std::string> exclude;
    for (const auto& c : prior) exclude.insert(c.concept_id);
    const auto s = sample(all, 100, seed, exclude);
    ASSERT_EQ(s.size(), 100u);
    for (const auto& c : s) EXPECT_FALSE(exclude.contains(c.concept_id)) << "seed " << seed;
  }
}

TEST(Sample, ShortfallIsReported) {
  const auto all = testing::synthetic_concepts(10);
  std::unordered_set<std::string> exclude = {all[0].concept_id, all[1].concept_id};
  try {
    sample(all, 9, 1, exclude);
    FAIL() << "expected SamplingError";
  } catch (const SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("short by 1"), std::string::npos) << e.what();
  }
}

// Each of N items should be drawn with probability n/N.
TEST(Sample, InclusionFrequenciesAreUniform) {
  const auto all = testing::synthetic_concepts(20);
  std::map<std::string, int> hits;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    for (const auto& c : sample(all, 5, static_cast<std::uint64_t>(t))) ++hits[c.concept_id];
  }
  const double expected = trials * 5.0 / 20.0;  // 5000
  const double sd = std::sqrt(trials * 0.25 * 0.75);
  for (const auto& c : all) EXPECT_NEAR(hits[c.concept_id], expected, 5 * sd) << c.rendered;
}

TEST(Csv, BuildFromFilesDedupesAcrossRows) {
  TempDir dir;
  testing::write_file(dir / "infusionDrug.csv", "patientunitstayid,drugname\n1,Propofol\n2,  Propofol \n3,\n4,Heparin\n");
  testing::write_file(dir / "medication.csv", "drugname,dosage\n\"LORAZEPAM, 2 MG\",1\nPropofol,2\n");
  const std::vector<std::filesystem::path> files = {dir / "infusionDrug.csv", dir / "medication.csv"};
  const auto out = build_concepts_from_files(files, default_table_specs());
  std::vector<std::string> rendered;
  for (const auto& c : out) rendered.push_back(c.rendered);
  EXPECT_EQ(rendered, (std::vector<std::string>{"Source = Infusion Drug; Concept = Propofol",
                                                "Source = Infusion Drug; Concept = Heparin",
                                                "Source = Medication; Concept = LORAZEPAM, 2 MG",
                                                "Source = Medication; Concept = Propofol"}));
}

TEST(Csv, BuildRejectsUnknownTablesAndMissingColumns) {
  TempDir dir;
  testing::write_file(dir / "vitalPeriodic.csv", "a\n1\n");
  testing::write_file(dir / "treatment.csv", "other\n1\n");
  EXPECT_THROW(build_concepts_from_csv(dir / "vitalPeriodic.csv", default_table_specs()), ConfigError);
  EXPECT_THROW(build_concepts_from_csv(dir / "treatment.csv", default_table_specs()), DataError);
}

TEST(ConceptsJsonl, RoundTripAndConsistencyCheck) {
  const auto all = testing::synthetic_concepts(5);
  std::stringstream buf;
  write_concepts_jsonl(buf, all);
  EXPECT_EQ(read_concepts_jsonl(buf), all);

  nlohmann::json bad = all[0];
  bad["rendered"] = "Source = Infusion Drug; Concept = tampered";
  std::stringstream tampered(bad.dump() + "\n");
  EXPECT_THROW(read_concepts_jsonl(tampered), DataError);
}

TEST(Truth, ReadsRenderedOrIdColumns) {
  const auto c = make_concept("Medication", "Propofol");
  std::stringstream by_rendered("rendered,relevant\n\"" + c.rendered + "\",YES\n\"Source = Medication; Concept = x\",no\n");
  const auto labels = read_truth_csv(by_rendered);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0], (GroundTruthLabel{c.concept_id, true}));
  EXPECT_FALSE(labels[1].relevant);

  std::stringstream by_id("concept_id,relevant\n" + c.concept_id + ",1\n");
  EXPECT_EQ(read_truth_csv(by_id)[0], (GroundTruthLabel{c.concept_id, true}));

  std::stringstream dup("concept_id,relevant\n" + c.concept_id + ",1\n" + c.concept_id + ",0\n");
  EXPECT_THROW(read_truth_csv(dup), DataError);
  std::stringstream junk("concept_id,relevant\n" + c.concept_id + ",maybe\n");
  EXPECT_THROW(read_truth_csv(junk), DataError);
}

}  // namespace
}  // namespace phenoeval
