#include "resolvent/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace resolvent {

void ResidualReport::add(const std::string& label, double residual) {
  points.push_back({label, residual});
}

void ResidualReport::note(const std::string& text) { notes.push_back(text); }

void ResidualReport::finalize(double tol_rel) {
  tol = tol_rel;
  max_residual = 0.0;
  for (const auto& p : points)
    max_residual = std::max(max_residual, p.residual);
  scale = std::max(scale, 1.0);
  max_relative = max_residual / scale;
  passed = max_relative <= tol;
}

CheckResult ResidualReport::summary() const {
  CheckResult c;
  c.name = name;
  c.residual = max_relative;
  c.tol = tol;
  c.passed = passed;
  for (const auto& n : notes) {
    if (!c.note.empty()) c.note += "; ";
    c.note += n;
  }
  return c;
}

namespace {

nlohmann::json to_json_obj(const ResidualReport& r) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : r.points)
    points.push_back({{"label", p.label}, {"residual", p.residual}});
  return nlohmann::json{
      {"name", r.name},           {"points", points},
      {"scale", r.scale},         {"tol", r.tol},
      {"max_residual", r.max_residual}, {"max_relative", r.max_relative},
      {"passed", r.passed},       {"notes", r.notes},
  };
}

void write_atomic(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out << body;
    if (!out.good()) throw IoError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot move " + tmp + " into place at " + path);
  }
}

}  // namespace

std::string report_to_json(const ResidualReport& r) {
  nlohmann::json j{{"schema", 1}, {"report", to_json_obj(r)}};
  return j.dump(2) + "\n";
}

std::string reports_to_json(const std::vector<ResidualReport>& rs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rs) arr.push_back(to_json_obj(r));
  nlohmann::json j{{"schema", 1}, {"reports", arr}};
  return j.dump(2) + "\n";
}

void write_report_json(const std::string& path, const ResidualReport& r) {
  write_atomic(path, report_to_json(r));
}

void write_reports_json(const std::string& path,
                        const std::vector<ResidualReport>& rs) {
  write_atomic(path, reports_to_json(rs));
}

}  // namespace resolvent
