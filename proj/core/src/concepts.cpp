#include "phenoeval/concepts.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <future>
#include <random>
#include <set>
#include <unordered_map>

#include "embedded_data.hpp"
#include "phenoeval/csv.hpp"
#include "phenoeval/error.hpp"
#include "phenoeval/hashing.hpp"

namespace phenoeval {

namespace {

constexpr std::array<std::string_view, 9> kPatternIds = {
    "care_plan_general", "infusion_drug",    "medication",           "note",      "nurse_care",
    "nurse_charting",    "respiratory_care", "respiratory_charting", "treatment",
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string fold_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

// Uniform integer in [0, bound) from a 64-bit engine, by rejection. Unlike
// std::uniform_int_distribution the result is identical across standard
// library implementations.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::span<const std::string_view> supported_pattern_ids() { return kPatternIds; }

void validate_table_spec(const TableSpec& spec) {
  if (std::find(kPatternIds.begin(), kPatternIds.end(), spec.pattern_id) == kPatternIds.end()) {
    throw ConfigError("unknown pattern_id '" + spec.pattern_id + "' for table '" + spec.table_name + "'");
  }
  if (spec.table_name.empty()) throw ConfigError("table spec '" + spec.pattern_id + "' has an empty table_name");
  if (spec.concept_columns.empty()) throw ConfigError("table spec '" + spec.table_name + "' has no concept columns");
  std::set<std::string> seen;
  for (const auto& col : spec.concept_columns) {
    if (col.empty()) throw ConfigError("table spec '" + spec.table_name + "' has an empty column name");
    if (!seen.insert(col).second) {
      throw ConfigError("table spec '" + spec.table_name + "' lists column '" + col + "' twice");
    }
  }
}

std::vector<TableSpec> table_specs_from_json(const nlohmann::json& doc) {
  const auto& tables = doc.contains("tables") ? doc.at("tables") : doc;
  if (!tables.is_array()) throw ConfigError("table config: expected an array of tables");
  std::vector<TableSpec> specs;
  std::set<std::string> names;
  for (const auto& t : tables) {
    TableSpec spec;
    try {
      spec.table_name = t.at("table_name").get<std::string>();
      spec.pattern_id = t.at("pattern_id").get<std::string>();
      spec.concept_columns = t.at("concept_columns").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("table config: ") + e.what());
    }
    validate_table_spec(spec);
    if (!names.insert(fold_name(spec.table_name)).second) {
      throw ConfigError("table config: duplicate table '" + spec.table_name + "'");
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

std::vector<TableSpec> load_table_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open table config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("table config " + path.string() + ": " + e.what());
  }
  return table_specs_from_json(doc);
}

const std::vector<TableSpec>& default_table_specs() {
  static const std::vector<TableSpec> specs = table_specs_from_json(nlohmann::json::parse(embedded::kTableSpecsJson));
  return specs;
}

const TableSpec* find_spec_for_stem(std::span<const TableSpec> specs, std::string_view stem) {
  const std::string key = fold_name(stem);
  for (const auto& spec : specs) {
    if (fold_name(spec.table_name) == key) return &spec;
  }
  return nullptr;
}

std::string normalize_whitespace(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  bool pending_space = false;
  for (char c : value) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string render_concept(std::string_view table_name, std::string_view concept_text) {
  std::string out = "Source = ";
  out += table_name;
  out += "; Concept = ";
  out += concept_text;
  return out;
}

std::string concept_id_for(std::string_view rendered) { return content_id128(rendered); }

ConstructedConcept make_concept(std::string_view table_name, std::string_view concept_text) {
  ConstructedConcept c;
  c.source_table = std::string(table_name);
  c.concept_text = std::string(concept_text);
  c.rendered = render_concept(table_name, concept_text);
  c.concept_id = concept_id_for(c.rendered);
  return c;
}

std::optional<ConstructedConcept> build_concept(const TableSpec& spec, const RawRow& row) {
  validate_table_spec(spec);
  if (row.table_name != spec.table_name) {
    throw ContractError("row from table '" + row.table_name + "' passed with spec for '" + spec.table_name + "'");
  }
  std::string text;
  for (const auto& column : spec.concept_columns) {
    const auto it = row.values.find(column);
    if (it == row.values.end()) {
      throw ContractError("row from table '" + row.table_name + "' has no column '" + column + "'");
    }
    if (!it->second) continue;
    const std::string value = normalize_whitespace(*it->second);
    if (value.empty()) continue;
    if (!text.empty()) text += ": ";
    text += value;
  }
  if (text.empty()) return std::nullopt;
  return make_concept(spec.table_name, text);
}

std::vector<ConstructedConcept> dedupe(std::span<const ConstructedConcept> concepts) {
  std::vector<ConstructedConcept> out;
  std::unordered_map<std::string_view, std::size_t> seen;
  seen.reserve(concepts.size());
  for (const auto& c : concepts) {
    if (seen.emplace(c.rendered, out.size()).second) out.push_back(c);
  }
  return out;
}

std::vector<ConstructedConcept> sample(std::span<const ConstructedConcept> concepts, std::size_t n,
                                       std::uint64_t seed, const std::unordered_set<std::string>& exclude) {
  std::vector<std::size_t> eligible;
  eligible.reserve(concepts.size());
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (!exclude.contains(concepts[i].concept_id)) eligible.push_back(i);
  }
  if (n > eligible.size()) {
    throw SamplingError("cannot sample " + std::to_string(n) + " concepts: only " + std::to_string(eligible.size()) +
                        " eligible after exclusions (short by " + std::to_string(n - eligible.size()) + ")");
  }
  std::mt19937_64 rng(seed);
  std::vector<ConstructedConcept> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(bounded(rng, eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
    out.push_back(concepts[eligible[i]]);
  }
  return out;
}

std::vector<ConstructedConcept> build_concepts_from_csv(const std::filesystem::path& csv_path,
                                                        std::span<const TableSpec> specs) {
  const TableSpec* spec = find_spec_for_stem(specs, csv_path.stem().string());
  if (spec == nullptr) {
    throw ConfigError("no table spec matches file " + csv_path.filename().string());
  }
  const CsvTable table = read_csv_file(csv_path.string());
  std::vector<int> columns;
  for (const auto& col : spec->concept_columns) {
    int idx = table.column_index(col);
    if (idx < 0) {
      // Exports differ in header case; fall back to a case-insensitive match.
      for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (lower(table.header[i]) == lower(col)) idx = static_cast<int>(i);
      }
    }
    if (idx < 0) throw DataError(csv_path.filename().string() + ": missing column '" + col + "'");
    columns.push_back(idx);
  }
  std::vector<ConstructedConcept> out;
  RawRow row;
  row.table_name = spec->table_name;
  for (const auto& fields : table.rows) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::string& v = fields[static_cast<std::size_t>(columns[c])];
      row.values[spec->concept_columns[c]] = v.empty() ? std::nullopt : std::optional<std::string>(v);
    }
    if (auto built = build_concept(*spec, row)) out.push_back(std::move(*built));
  }
  return dedupe(out);
}

std::vector<ConstructedConcept> build_concepts_from_files(std::span<const std::filesystem::path> csv_paths,
                                                          std::span<const TableSpec> specs) {
  std::vector<std::future<std::vector<ConstructedConcept>>> parts;
  parts.reserve(csv_paths.size());
  for (const auto& path : csv_paths) {
    parts.push_back(std::async(std::launch::async, [&path, specs] { return build_concepts_from_csv(path, specs); }));
  }
  std::vector<ConstructedConcept> all;
  for (auto& part : parts) {
    auto concepts = part.get();
    all.insert(all.end(), std::make_move_iterator(concepts.begin()), std::make_move_iterator(concepts.end()));
  }
  return dedupe(all);
}

void to_json(nlohmann::json& j, const ConstructedConcept& c) {
  j = nlohmann::json{{"concept_id", c.concept_id},
                     {"source_table", c.source_table},
                     {"concept_text", c.concept_text},
                     {"rendered", c.rendered}};
}

void from_json(const nlohmann::json& j, ConstructedConcept& c) {
  j.at("concept_id").get_to(c.concept_id);
  j.at("source_table").get_to(c.source_table);
  j.at("concept_text").get_to(c.concept_text);
  j.at("rendered").get_to(c.rendered);
}

void write_concepts_jsonl(std::ostream& out, std::span<const ConstructedConcept> concepts) {
  for (const auto& c : concepts) out << nlohmann::json(c).dump() << '\n';
}

std::vector<ConstructedConcept> read_concepts_jsonl(std::istream& in) {
  std::vector<ConstructedConcept> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto c = nlohmann::json::parse(line).get<ConstructedConcept>();
      if (c.rendered != render_concept(c.source_table, c.concept_text) || c.concept_id != concept_id_for(c.rendered)) {
        throw DataError("concepts line " + std::to_string(line_no) + ": fields are inconsistent");
      }
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("concepts line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ConstructedConcept> read_concepts_jsonl_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open concepts file " + path.string());
  return read_concepts_jsonl(in);
}

std::vector<GroundTruthLabel> read_truth_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  const int id_col = table.column_index("concept_id");
  const int rendered_col = table.column_index("rendered");
  const int relevant_col = table.column_index("relevant");
  if (relevant_col < 0 || (id_col < 0 && rendered_col < 0)) {
    throw DataError("truth CSV needs a 'relevant' column and a 'concept_id' or 'rendered' column");
  }
  std::vector<GroundTruthLabel> labels;
  std::set<std::string> seen;
  for (const auto& row : table.rows) {
    GroundTruthLabel label;
    label.concept_id = id_col >= 0 && !row[static_cast<std::size_t>(id_col)].empty()
                           ? row[static_cast<std::size_t>(id_col)]
                           : concept_id_for(row[static_cast<std::size_t>(rendered_col)]);
    const std::string v = lower(normalize_whitespace(row[static_cast<std::size_t>(relevant_col)]));
    if (v == "yes" || v == "true" || v == "1") {
      label.relevant = true;
    } else if (v == "no" || v == "false" || v == "0") {
      label.relevant = false;
    } else {
      throw DataError("truth CSV: unreadable relevance value '" + v + "' for " + label.concept_id);
    }
    if (!seen.insert(label.concept_id).second) throw DataError("truth CSV: duplicate label for " + label.concept_id);
    labels.push_back(std::move(label));
  }
  return labels;
}

std::vector<GroundTruthLabel> read_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open truth file " + path.string());
  return read_truth_csv(in);
}

}  // namespace phenoeval
