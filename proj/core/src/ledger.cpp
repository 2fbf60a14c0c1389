#include "phenoeval/ledger.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "phenoeval/error.hpp"

namespace phenoeval {

namespace {

constexpr std::string_view kHeader = "| Criterion | Traditional approach | LLM-based approach | Verdict |";
constexpr std::string_view kRule = "| --- | --- | --- | --- |";

template <typename E, std::size_t N>
E lookup(std::string_view s, const std::array<E, N>& values, std::string_view what,
         std::string_view (*name)(E)) {
  for (E v : values) {
    if (name(v) == s) return v;
  }
  throw DataError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::array<LedgerCategory, 2> kCategories = {LedgerCategory::DevelopmentEffort,
                                                       LedgerCategory::DevelopmentSchedule};
constexpr std::array<Verdict, 4> kVerdicts = {Verdict::TraditionalSuperior, Verdict::LLMSuperior, Verdict::Tie,
                                              Verdict::NotApplicable};

std::string_view cat_str(LedgerCategory c) { return to_string(c); }
std::string_view crit_str(LedgerCriterion c) { return to_string(c); }
std::string_view verdict_str(Verdict v) { return to_string(v); }
std::string_view cat_name(LedgerCategory c) { return display_name(c); }
std::string_view crit_name(LedgerCriterion c) { return display_name(c); }
std::string_view verdict_name(Verdict v) { return display_name(v); }

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

// Cell escaping: backslash, pipe and '<' are backslash-escaped, newlines
// become <br>.
std::string escape_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '|': out += "\\|"; break;
      case '<': out += "\\<"; break;
      case '\n': out += "<br>"; break;
      case '\r': break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_cell(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      out.push_back(s[++i]);
    } else if (s.substr(i, 4) == "<br>") {
      out.push_back('\n');
      i += 3;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

// Splits a table row on unescaped pipes; cells keep their escapes.
std::vector<std::string> split_row(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool started = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '\\' && i + 1 < line.size()) {
      cur.push_back(c);
      cur.push_back(line[++i]);
    } else if (c == '|') {
      if (started) cells.push_back(cur);
      started = true;
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  for (auto& cell : cells) {
    const auto b = cell.find_first_not_of(' ');
    const auto e = cell.find_last_not_of(' ');
    cell = b == std::string::npos ? std::string() : cell.substr(b, e - b + 1);
  }
  return cells;
}

}  // namespace

std::string_view to_string(LedgerCategory c) {
  return c == LedgerCategory::DevelopmentEffort ? "DevelopmentEffort" : "DevelopmentSchedule";
}

std::string_view to_string(LedgerCriterion c) {
  switch (c) {
    case LedgerCriterion::ModelHostEnvironments: return "ModelHostEnvironments";
    case LedgerCriterion::HardwareRequirements: return "HardwareRequirements";
    case LedgerCriterion::SoftwareAvailability: return "SoftwareAvailability";
    case LedgerCriterion::TimeForPipelineDevelopment: return "TimeForPipelineDevelopment";
    case LedgerCriterion::TimeForManualReview: return "TimeForManualReview";
    case LedgerCriterion::PhenotypeRuntime: return "PhenotypeRuntime";
  }
  return "?";
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::TraditionalSuperior: return "TraditionalSuperior";
    case Verdict::LLMSuperior: return "LLMSuperior";
    case Verdict::Tie: return "Tie";
    case Verdict::NotApplicable: return "NotApplicable";
  }
  return "?";
}

LedgerCategory ledger_category_from_string(std::string_view s) { return lookup(s, kCategories, "category", cat_str); }
LedgerCriterion ledger_criterion_from_string(std::string_view s) {
  return lookup(s, kAllCriteria, "criterion", crit_str);
}
Verdict verdict_from_string(std::string_view s) { return lookup(s, kVerdicts, "verdict", verdict_str); }

LedgerCategory category_of(LedgerCriterion c) {
  switch (c) {
    case LedgerCriterion::ModelHostEnvironments:
    case LedgerCriterion::HardwareRequirements:
    case LedgerCriterion::SoftwareAvailability: return LedgerCategory::DevelopmentEffort;
    default: return LedgerCategory::DevelopmentSchedule;
  }
}

std::string_view display_name(LedgerCategory c) {
  return c == LedgerCategory::DevelopmentEffort ? "Development Effort" : "Development Schedule";
}

std::string_view display_name(LedgerCriterion c) {
  switch (c) {
    case LedgerCriterion::ModelHostEnvironments: return "Model Host Environments";
    case LedgerCriterion::HardwareRequirements: return "Hardware Requirements";
    case LedgerCriterion::SoftwareAvailability: return "Software Availability";
    case LedgerCriterion::TimeForPipelineDevelopment: return "Time for Pipeline Development";
    case LedgerCriterion::TimeForManualReview: return "Time for Manual Review";
    case LedgerCriterion::PhenotypeRuntime: return "Phenotype Runtime";
  }
  return "?";
}

std::string_view display_name(Verdict v) {
  switch (v) {
    case Verdict::TraditionalSuperior: return "Traditional superior";
    case Verdict::LLMSuperior: return "LLM-based superior";
    case Verdict::Tie: return "Tie";
    case Verdict::NotApplicable: return "Not applicable";
  }
  return "?";
}

void to_json(nlohmann::json& j, const LedgerEntry& e) {
  j = nlohmann::json{{"category", to_string(e.category)},
                     {"criterion", to_string(e.criterion)},
                     {"traditional_note", e.traditional_note},
                     {"llm_note", e.llm_note},
                     {"verdict", to_string(e.verdict)},
                     {"verdict_rationale", e.verdict_rationale}};
}

void from_json(const nlohmann::json& j, LedgerEntry& e) {
  e = LedgerEntry{};
  e.criterion = ledger_criterion_from_string(j.at("criterion").get<std::string>());
  e.category = j.contains("category") ? ledger_category_from_string(j.at("category").get<std::string>())
                                      : category_of(e.criterion);
  e.traditional_note = j.value("traditional_note", std::string());
  e.llm_note = j.value("llm_note", std::string());
  e.verdict = verdict_from_string(j.at("verdict").get<std::string>());
  e.verdict_rationale = j.value("verdict_rationale", std::string());
}

std::vector<LedgerEntry> ledger_from_json(const nlohmann::json& doc) {
  try {
    const nlohmann::json& list = doc.is_object() ? doc.at("entries") : doc;
    if (!list.is_array()) throw DataError("ledger entries must be a JSON array");
    return list.get<std::vector<LedgerEntry>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("ledger: ") + e.what());
  }
}

nlohmann::json ledger_to_json(std::span<const LedgerEntry> entries) {
  return nlohmann::json{{"entries", std::vector<LedgerEntry>(entries.begin(), entries.end())}};
}

std::vector<LedgerEntry> load_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open ledger " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return ledger_from_json(doc);
}

std::vector<std::string> validate_ledger(std::span<const LedgerEntry> entries) {
  std::vector<std::string> violations;
  std::map<LedgerCriterion, int> seen;
  for (const auto& e : entries) {
    const std::string name(display_name(e.criterion));
    if (++seen[e.criterion] == 2) violations.push_back(name + ": listed more than once");
    if (category_of(e.criterion) != e.category) {
      violations.push_back(name + ": belongs to " + std::string(display_name(category_of(e.criterion))) + ", not " +
                           std::string(display_name(e.category)));
    }
    if (e.verdict != Verdict::NotApplicable && blank(e.verdict_rationale)) {
      violations.push_back(name + ": verdict " + std::string(display_name(e.verdict)) + " has no rationale");
    }
  }
  for (LedgerCriterion c : kAllCriteria) {
    if (!seen.contains(c)) violations.push_back(std::string(display_name(c)) + ": missing");
  }
  return violations;
}

std::string render_comparison(std::span<const LedgerEntry> entries) {
  const auto violations = validate_ledger(entries);
  if (!violations.empty()) {
    std::string msg = "invalid ledger:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw ValidationError(msg);
  }
  std::map<LedgerCriterion, const LedgerEntry*> by_criterion;
  for (const auto& e : entries) by_criterion[e.criterion] = &e;

  std::ostringstream out;
  bool first = true;
  for (LedgerCategory cat : kCategories) {
    if (!first) out << '\n';
    first = false;
    out << "## " << display_name(cat) << "\n\n" << kHeader << '\n' << kRule << '\n';
    for (LedgerCriterion c : kAllCriteria) {
      if (category_of(c) != cat) continue;
      const LedgerEntry& e = *by_criterion.at(c);
      out << "| " << display_name(c) << " | " << escape_cell(e.traditional_note) << " | " << escape_cell(e.llm_note)
          << " | **" << display_name(e.verdict) << "**";
      if (!e.verdict_rationale.empty()) out << ": " << escape_cell(e.verdict_rationale);
      out << " |\n";
    }
  }
  return out.str();
}

std::vector<LedgerEntry> parse_comparison(std::string_view markdown) {
  std::vector<LedgerEntry> entries;
  std::optional<LedgerCategory> category;
  std::istringstream in{std::string(markdown)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("## ", 0) == 0) {
      category = lookup(std::string_view(line).substr(3), kCategories, "category heading", cat_name);
      continue;
    }
    if (line.empty() || line[0] != '|' || line == kHeader || line == kRule) continue;
    const auto where = "comparison line " + std::to_string(line_no);
    if (!category) throw DataError(where + ": table row before any category heading");
    const auto cells = split_row(line);
    if (cells.size() != 4) throw DataError(where + ": expected 4 cells, got " + std::to_string(cells.size()));

    LedgerEntry e;
    e.category = *category;
    e.criterion = lookup(cells[0], kAllCriteria, "criterion", crit_name);
    e.traditional_note = unescape_cell(cells[1]);
    e.llm_note = unescape_cell(cells[2]);
    const std::string& verdict = cells[3];
    const auto close = verdict.find("**", 2);
    if (verdict.rfind("**", 0) != 0 || close == std::string::npos) throw DataError(where + ": malformed verdict cell");
    e.verdict = lookup(std::string_view(verdict).substr(2, close - 2), kVerdicts, "verdict", verdict_name);
    const std::string_view rest = std::string_view(verdict).substr(close + 2);
    if (rest.rfind(": ", 0) == 0) {
      e.verdict_rationale = unescape_cell(rest.substr(2));
    } else if (!rest.empty()) {
      throw DataError(where + ": unexpected text after verdict");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace phenoeval
