#pragma once

#include <string>
#include <vector>

#include "resolvent/types.hpp"

namespace resolvent {

struct ResidualEntry {
  std::string label;
  double residual = 0.0;
};

// Aggregated residual evidence for one verification run: per-point
// residuals, max and scale-relative norms, the tolerance verdict, and free
// form quadrature notes.
struct ResidualReport {
  std::string name;
  std::vector<ResidualEntry> points;
  double scale = 1.0;  // normalization, at least 1
  double tol = 0.0;    // relative tolerance behind the verdict
  double max_residual = 0.0;
  double max_relative = 0.0;
  bool passed = false;
  std::vector<std::string> notes;

  void add(const std::string& label, double residual);
  void note(const std::string& text);
  // Recomputes the norms and the verdict against a relative tolerance.
  void finalize(double tol_rel);
  CheckResult summary() const;
};

// Stable JSON rendering ("schema": 1) and atomic file writes (temporary
// file plus rename); IoError on filesystem failures.
std::string report_to_json(const ResidualReport& r);
std::string reports_to_json(const std::vector<ResidualReport>& rs);
void write_report_json(const std::string& path, const ResidualReport& r);
void write_reports_json(const std::string& path,
                        const std::vector<ResidualReport>& rs);

}  // namespace resolvent
