#pragma once

#include <string>
#include <vector>

#include "nibm/equilibrium.hpp"

namespace nibm {

/// Minimal CSV table: header row plus string cells. Numeric cells are
/// written with %.17g so reruns are byte-identical.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void addRow(std::vector<std::string> cells) { rows.push_back(std::move(cells)); }
};

std::string formatDouble(double v);

void writeCsv(const std::string& path, const CsvTable& table);
CsvTable readCsv(const std::string& path); // throws MissingArtifact / ParseError

/// densities.csv: "component,x,rho" with uniform per-component abscissas.
void writeDensities(const std::string& path, const EquilibriumSolution& sol);
/// supports.csv: "component,alpha,beta,L".
void writeSupports(const std::string& path, const EquilibriumSolution& sol);

/// Rebuilds a solution (measures + supports + constants) from the two CSV
/// files; grids are inferred from the uniform abscissas.
EquilibriumSolution readSolution(const std::string& densitiesPath, const std::string& supportsPath);

} // namespace nibm
