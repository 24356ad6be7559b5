#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gsfg/simulator.hpp"

namespace gsfg {

/// Parses the sectioned key-value scenario format. Throws ParseError with
/// line/column for malformed text and SemanticError for bad cross-references.
Scenario load_scenario(const std::string& text, const std::string& name = "scenario");

Scenario load_scenario_file(const std::string& path);

/// Canonical text form; loading it back reproduces the scenario, and printing
/// is a fixed point.
std::string print_scenario(const Scenario& scenario);

/// CSV trace: header `t,y_<id>...,w_<i>_<j>...,E`, one row per step, 17
/// significant digits. Returns the number of data rows.
std::size_t write_csv(const SimulationTrace& trace, std::ostream& out);
std::size_t write_csv_file(const SimulationTrace& trace, const std::string& path);

struct CsvData {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

CsvData read_csv(std::istream& in);
CsvData read_csv_file(const std::string& path);

/// Key-value run summary: scenario meta, final weights (using branch labels),
/// first/final-window tracking statistics, and the convergence flag.
std::string write_summary(const Scenario& scenario, const SimulationTrace& trace,
                          const std::vector<std::string>& overrides = {});

}  // namespace gsfg
