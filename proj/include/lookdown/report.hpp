#pragma once

// Experiment reports and the CSV/JSON file formats.
//
// Floats are written in the shortest form that reads back to the same
// double (std::to_chars). CSV files use ',' and '\n', no quoting, and carry
// provenance as leading "# key=value" comment lines.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lookdown/error.hpp"
#include "lookdown/lookdown.hpp"
#include "lookdown/rng.hpp"
#include "lookdown/treelength.hpp"

namespace lookdown {

inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::json;

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ParameterError("parse_double: malformed number '" + std::string(text) + "'");
  return value;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports.

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;

  void add_row(std::vector<Json> row) {
    detail::require(row.size() == columns.size(), "Table: row width differs from column count");
    rows.push_back(std::move(row));
  }

  std::optional<std::size_t> column_index(std::string_view column) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == column) return i;
    return std::nullopt;
  }
};

enum class VerdictStatus { kPass, kFail, kInconclusive, kInformational };

inline const char* to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::kPass: return "pass";
    case VerdictStatus::kFail: return "fail";
    case VerdictStatus::kInconclusive: return "inconclusive";
    case VerdictStatus::kInformational: return "informational";
  }
  return "unknown";
}

struct CellRef {
  std::string table;
  std::size_t row = 0;
  std::string column;
};

struct Verdict {
  std::string name;
  double observed = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  VerdictStatus status = VerdictStatus::kFail;
  CellRef ref;
  std::string note;

  bool pass() const noexcept { return status == VerdictStatus::kPass; }
};

struct ExperimentReport {
  std::string experiment;
  Json params = Json::object();
  std::uint64_t seed = 0;
  std::string generator = kGeneratorId;
  std::deque<Table> tables;  // deque keeps references from add_table valid
  std::vector<Verdict> verdicts;

  Table& add_table(std::string name, std::vector<std::string> columns) {
    tables.push_back(Table{std::move(name), std::move(columns), {}});
    return tables.back();
  }

  const Table* find_table(std::string_view name) const {
    for (const auto& t : tables)
      if (t.name == name) return &t;
    return nullptr;
  }

  bool any_failed() const {
    for (const auto& v : verdicts)
      if (v.status == VerdictStatus::kFail) return true;
    return false;
  }

  // Every verdict points at an existing table cell.
  bool references_resolve() const {
    for (const auto& v : verdicts) {
      const auto* t = find_table(v.ref.table);
      if (t == nullptr || v.ref.row >= t->rows.size() || !t->column_index(v.ref.column)) return false;
    }
    return true;
  }
};

inline Json to_json(const ExperimentReport& report) {
  Json j;
  j["experiment"] = report.experiment;
  j["params"] = report.params;
  j["seed"] = report.seed;
  j["generator"] = report.generator;
  j["version"] = kToolVersion;
  Json tables = Json::array();
  for (const auto& t : report.tables) {
    Json rows = Json::array();
    for (const auto& r : t.rows) rows.push_back(Json(r));
    tables.push_back({{"name", t.name}, {"columns", t.columns}, {"rows", std::move(rows)}});
  }
  j["tables"] = std::move(tables);
  Json verdicts = Json::array();
  for (const auto& v : report.verdicts) {
    verdicts.push_back({{"name", v.name},
                        {"observed", v.observed},
                        {"expected", v.expected},
                        {"tolerance", v.tolerance},
                        {"pass", v.pass()},
                        {"status", to_string(v.status)},
                        {"ref", {{"table", v.ref.table}, {"row", v.ref.row}, {"column", v.ref.column}}},
                        {"note", v.note}});
  }
  j["verdicts"] = std::move(verdicts);
  return j;
}

inline std::string format_cell(const Json& cell) {
  if (cell.is_number_float()) return format_double(cell.get<double>());
  if (cell.is_boolean()) return cell.get<bool>() ? "true" : "false";
  if (cell.is_string()) return cell.get<std::string>();
  if (cell.is_null()) return "";
  return cell.dump();
}

inline void write_provenance(std::ostream& os, std::string_view what, std::uint64_t seed, const Json& params) {
  os << "# " << what << "\n";
  os << "# version=" << kToolVersion << "\n";
  os << "# generator=" << kGeneratorId << "\n";
  os << "# seed=" << seed << "\n";
  for (const auto& [key, value] : params.items()) os << "# " << key << "=" << format_cell(value) << "\n";
}

inline void write_table_csv(std::ostream& os, const Table& table) {
  for (std::size_t c = 0; c < table.columns.size(); ++c) os << (c ? "," : "") << table.columns[c];
  os << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << format_cell(row[c]);
    os << "\n";
  }
}

// All tables of a report, each introduced by a "# table=<name>" line.
inline void write_report_csv(std::ostream& os, const ExperimentReport& report) {
  write_provenance(os, "experiment=" + report.experiment, report.seed, report.params);
  for (const auto& v : report.verdicts)
    os << "# verdict " << v.name << "=" << to_string(v.status) << " observed=" << format_double(v.observed)
       << " expected=" << format_double(v.expected) << " tolerance=" << format_double(v.tolerance) << "\n";
  for (const auto& t : report.tables) {
    os << "# table=" << t.name << "\n";
    write_table_csv(os, t);
  }
}

// ---------------------------------------------------------------------------
// Event logs, line records and paths.

struct CsvDocument {
  std::map<std::string, std::string> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

inline CsvDocument read_csv_document(std::istream& is) {
  CsvDocument doc;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = std::string_view(line).substr(1);
      const auto eq = body.find('=');
      if (eq != std::string_view::npos) {
        auto key = body.substr(0, eq);
        while (!key.empty() && key.front() == ' ') key.remove_prefix(1);
        doc.meta.emplace(std::string(key), std::string(body.substr(eq + 1)));
      }
      continue;
    }
    std::vector<std::string> cells;
    for (const auto part : split_csv_line(line)) cells.emplace_back(part);
    if (!have_header) {
      doc.columns = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != doc.columns.size()) throw ParameterError("read_csv: row width differs from header");
      doc.rows.push_back(std::move(cells));
    }
  }
  return doc;
}

inline void write_event_log_csv(std::ostream& os, const EventLog& log, std::uint64_t seed) {
  write_provenance(os, "event log", seed,
                   Json{{"N", log.N}, {"t_start", log.t_start}, {"t_end", log.t_end}, {"tie_warnings", log.tie_warnings}});
  os << "time,source,target\n";
  for (const auto& e : log.events) os << format_double(e.time) << "," << e.source_level << "," << e.target_level << "\n";
}

inline EventLog read_event_log_csv(std::istream& is) {
  const auto doc = read_csv_document(is);
  if (doc.columns != std::vector<std::string>{"time", "source", "target"})
    throw ParameterError("read_event_log_csv: unexpected columns");
  EventLog log;
  log.N = std::stoi(doc.meta.at("N"));
  log.t_start = parse_double(doc.meta.at("t_start"));
  log.t_end = parse_double(doc.meta.at("t_end"));
  log.tie_warnings = std::stoull(doc.meta.at("tie_warnings"));
  for (const auto& r : doc.rows) log.events.push_back(Event{parse_double(r[0]), std::stoi(r[1]), std::stoi(r[2])});
  return log;
}

inline void write_line_records_csv(std::ostream& os, const std::vector<LineRecord>& lines, std::uint64_t seed,
                                   const Json& params) {
  write_provenance(os, "line records", seed, params);
  os << "birth_time,birth_level,exit_time,life_length,truncation_level\n";
  for (const auto& l : lines) {
    os << format_double(l.birth_time) << "," << l.birth_level << "," << format_double(l.exit_time) << ","
       << format_double(l.life_length) << ",";
    if (l.truncation_level) os << *l.truncation_level;
    os << "\n";
  }
}

inline std::vector<LineRecord> read_line_records_csv(std::istream& is) {
  const auto doc = read_csv_document(is);
  if (doc.columns != std::vector<std::string>{"birth_time", "birth_level", "exit_time", "life_length", "truncation_level"})
    throw ParameterError("read_line_records_csv: unexpected columns");
  std::vector<LineRecord> lines;
  for (const auto& r : doc.rows) {
    LineRecord l;
    l.birth_time = parse_double(r[0]);
    l.birth_level = std::stoi(r[1]);
    l.exit_time = parse_double(r[2]);
    l.life_length = parse_double(r[3]);
    if (!r[4].empty()) l.truncation_level = std::stoull(r[4]);
    lines.push_back(l);
  }
  return lines;
}

// Header comments carry N, t0, t_end, v0 and the compensated flag; one row
// per jump. exit_age is the uncorrected drop.
inline void write_path_csv(std::ostream& os, const TreeLengthPath& path, std::uint64_t seed, const Json& extra = {}) {
  Json params = extra.is_object() ? extra : Json::object();
  params["N"] = path.N();
  params["t0"] = path.t0();
  params["t_end"] = path.t_end();
  params["v0"] = path.v0();
  params["compensated"] = path.compensated();
  write_provenance(os, "tree length path", seed, params);
  os << "time,value_right_limit,jump_magnitude,exit_age,root_corrected\n";
  for (const auto& j : path.jumps())
    os << format_double(j.time) << "," << format_double(path.eval(j.time)) << "," << format_double(j.magnitude) << ","
       << format_double(j.exit_age) << "," << (j.root_corrected ? 1 : 0) << "\n";
}

inline TreeLengthPath read_path_csv(std::istream& is) {
  const auto doc = read_csv_document(is);
  if (doc.columns != std::vector<std::string>{"time", "value_right_limit", "jump_magnitude", "exit_age", "root_corrected"})
    throw ParameterError("read_path_csv: unexpected columns");
  std::vector<Jump> jumps;
  jumps.reserve(doc.rows.size());
  for (const auto& r : doc.rows) {
    Jump j;
    j.time = parse_double(r[0]);
    j.magnitude = parse_double(r[2]);
    j.exit_age = parse_double(r[3]);
    j.root_corrected = r[4] == "1";
    jumps.push_back(j);
  }
  return TreeLengthPath(std::stoi(doc.meta.at("N")), parse_double(doc.meta.at("t0")),
                        parse_double(doc.meta.at("t_end")), parse_double(doc.meta.at("v0")),
                        doc.meta.at("compensated") == "true", std::move(jumps));
}

}  // namespace lookdown
