#include "thz/scenarios.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace thz {

namespace {

using Json = nlohmann::ordered_json;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// NaN and infinities have no JSON literal; they become null.
Json number(Real v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json meta_block(const RunMeta& meta) {
  Json m;
  m["version"] = kVersion;
  m["command"] = meta.command;
  m["config_hash"] = meta.config_hash;
  m["seed"] = meta.seed ? Json(*meta.seed) : Json(nullptr);
  return m;
}

}  // namespace

std::string format_real(Real v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(std::ostream& os, const Table& t) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << csv_field(t.columns[i]);
  if (t.error_column) os << ",error";
  os << '\n';
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_real(row[i]);
    if (t.error_column) os << ',' << csv_field(t.errors[r]);
    os << '\n';
  }
}

std::string table_csv(const Table& t) {
  std::ostringstream os;
  write_csv(os, t);
  return os.str();
}

std::string table_json(const Table& t, const RunMeta& meta) {
  Json j;
  j["meta"] = meta_block(meta);
  Json notes = Json::object();
  for (const auto& [k, v] : t.notes) notes[k] = v;
  j["notes"] = notes;
  j["columns"] = t.columns;
  Json rows = Json::array();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Json row;
    for (std::size_t i = 0; i < t.columns.size(); ++i) row[t.columns[i]] = number(t.rows[r][i]);
    if (t.error_column) row["error"] = t.errors[r].empty() ? Json(nullptr) : Json(t.errors[r]);
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

std::string stats_json(const EmissionStats& st, const RunMeta& meta) {
  Json j;
  j["meta"] = meta_block(meta);
  j["method"] = to_string(st.method);
  j["P0"] = number(st.p0);
  j["P1"] = number(st.p1);
  j["P2"] = number(st.p2);
  j["P_gt1"] = number(st.p_gt1);
  j["g2"] = number(st.g2);
  j["purity"] = number(st.purity);
  j["purity_estimate"] = number(st.purity_estimate);
  j["tau_ns"] = number(st.tau);
  j["tau_max_ns"] = number(st.tau_max);
  j["P_max"] = number(st.p_max);
  j["E"] = number(st.e);
  j["E_tilde"] = number(st.e_tilde);
  j["I"] = number(st.indist);
  j["I_error"] = number(st.indist_error);
  j["ci"] = st.ci ? Json::array({number(st.ci->first), number(st.ci->second)}) : Json(nullptr);
  j["fallback"] = st.fallback;
  j["monotone"] = st.monotone;
  j["warnings"] = st.warnings;
  return j.dump(2) + "\n";
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

}  // namespace thz
