#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

namespace phenoeval {

/// How one source table is turned into constructed concepts.
///
/// `pattern_id` must name one of the nine supported source tables (see
/// `supported_pattern_ids()`); `concept_columns` lists the columns whose
/// values are joined with ": " in this order.
struct TableSpec {
  std::string table_name;
  std::vector<std::string> concept_columns;
  std::string pattern_id;

  bool operator==(const TableSpec&) const = default;
};

/// One row of a table export. Absent and null values are both `nullopt`.
struct RawRow {
  std::string table_name;
  std::map<std::string, std::optional<std::string>> values;
};

/// The unit of classification: "Source = {table}; Concept = {values}".
struct ConstructedConcept {
  std::string concept_id;
  std::string source_table;
  std::string concept_text;
  std::string rendered;

  bool operator==(const ConstructedConcept&) const = default;
};

struct GroundTruthLabel {
  std::string concept_id;
  bool relevant = false;

  bool operator==(const GroundTruthLabel&) const = default;
};

// Pattern ids of the nine supported tables, in table order.
std::span<const std::string_view> supported_pattern_ids();

// The shipped table configuration, parsed from the embedded JSON config.
const std::vector<TableSpec>& default_table_specs();

// Throws ConfigError on an unknown pattern id, empty table name, or empty /
// duplicated concept columns.
void validate_table_spec(const TableSpec& spec);

std::vector<TableSpec> table_specs_from_json(const nlohmann::json& doc);
std::vector<TableSpec> load_table_specs(const std::filesystem::path& path);

// Finds the table spec whose table name matches a CSV filename stem, ignoring case
// and any non-alphanumeric characters ("nurseCharting" ~ "Nurse Charting").
const TableSpec* find_spec_for_stem(std::span<const TableSpec> specs, std::string_view stem);

// Trims and collapses internal whitespace runs to one space.
std::string normalize_whitespace(std::string_view value);

std::string render_concept(std::string_view table_name, std::string_view concept_text);
std::string concept_id_for(std::string_view rendered);
ConstructedConcept make_concept(std::string_view table_name, std::string_view concept_text);

/// Builds one constructed concept from a row. Null or blank column values are
/// skipped; returns nullopt when nothing remains.
std::optional<ConstructedConcept> build_concept(const TableSpec& spec, const RawRow& row);

/// Exact-duplicate removal keyed on the rendered string; first-seen order.
std::vector<ConstructedConcept> dedupe(std::span<const ConstructedConcept> concepts);

/// Draws `n` concepts uniformly without replacement from `concepts` minus
/// `exclude`. Deterministic for a fixed (input order, n, seed); the result is
/// in draw order. Throws SamplingError when fewer than `n` are eligible.
std::vector<ConstructedConcept> sample(std::span<const ConstructedConcept> concepts, std::size_t n,
                                       std::uint64_t seed,
                                       const std::unordered_set<std::string>& exclude = {});

// Reads one table export; the table is chosen by filename stem. Throws
// ConfigError when no spec matches.
std::vector<ConstructedConcept> build_concepts_from_csv(const std::filesystem::path& csv_path,
                                                        std::span<const TableSpec> specs);

// Builds every file (concurrently), concatenating per-file results in the
// order given, then dedupes.
std::vector<ConstructedConcept> build_concepts_from_files(std::span<const std::filesystem::path> csv_paths,
                                                          std::span<const TableSpec> specs);

void to_json(nlohmann::json& j, const ConstructedConcept& c);
void from_json(const nlohmann::json& j, ConstructedConcept& c);

void write_concepts_jsonl(std::ostream& out, std::span<const ConstructedConcept> concepts);
std::vector<ConstructedConcept> read_concepts_jsonl(std::istream& in);
std::vector<ConstructedConcept> read_concepts_jsonl_file(const std::filesystem::path& path);

/// Ground truth CSV: header with `relevant` plus either `concept_id` or
/// `rendered`. Accepts yes/no, true/false, 1/0 (case-insensitive). Throws
/// DataError on a duplicate label or unreadable value.
std::vector<GroundTruthLabel> read_truth_csv(const std::filesystem::path& path);
std::vector<GroundTruthLabel> read_truth_csv(std::istream& in);

}  // namespace phenoeval
