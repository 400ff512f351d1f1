#include "nibm/csv.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "nibm/errors.hpp"

namespace nibm {

std::string formatDouble(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void writeCsv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw MissingArtifact("cannot open " + path + " for writing");
    auto writeRow = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out << ',';
            out << cells[i];
        }
        out << '\n';
    };
    writeRow(table.header);
    for (const auto& row : table.rows) writeRow(row);
}

CsvTable readCsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            table.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != table.header.size())
                throw ParseError(path + ": row width does not match header");
            table.rows.push_back(std::move(cells));
        }
    }
    if (first) throw ParseError(path + ": missing header row");
    return table;
}

void writeDensities(const std::string& path, const EquilibriumSolution& sol) {
    CsvTable t;
    t.header = {"component", "x", "rho"};
    for (int i = 0; i < sol.measures.components(); ++i) {
        const auto& grid = sol.measures.grids[static_cast<std::size_t>(i)];
        for (int c = 0; c < grid.cells; ++c)
            t.addRow({std::to_string(i + 1), formatDouble(grid.mid(c)),
                      formatDouble(sol.measures.density(i, c))});
    }
    writeCsv(path, t);
}

void writeSupports(const std::string& path, const EquilibriumSolution& sol) {
    CsvTable t;
    t.header = {"component", "alpha", "beta", "L"};
    for (int i = 0; i < sol.measures.components(); ++i) {
        const auto& s = sol.supports[static_cast<std::size_t>(i)];
        t.addRow({std::to_string(i + 1), formatDouble(s.alpha), formatDouble(s.beta),
                  formatDouble(sol.constants[static_cast<std::size_t>(i)])});
    }
    writeCsv(path, t);
}

EquilibriumSolution readSolution(const std::string& densitiesPath, const std::string& supportsPath) {
    const CsvTable dens = readCsv(densitiesPath);
    const CsvTable supp = readCsv(supportsPath);
    if (dens.header != std::vector<std::string>{"component", "x", "rho"})
        throw ParseError(densitiesPath + ": unexpected header");
    if (supp.header != std::vector<std::string>{"component", "alpha", "beta", "L"})
        throw ParseError(supportsPath + ": unexpected header");

    std::map<int, std::vector<std::pair<double, double>>> byComp;
    for (const auto& row : dens.rows)
        byComp[std::stoi(row[0])].push_back({std::stod(row[1]), std::stod(row[2])});

    EquilibriumSolution sol;
    int expect = 1;
    for (const auto& [comp, pts] : byComp) {
        if (comp != expect++) throw ParseError(densitiesPath + ": non-contiguous component ids");
        if (pts.size() < 2) throw ParseError(densitiesPath + ": component with fewer than 2 cells");
        const double h = pts[1].first - pts[0].first;
        ComponentGrid grid{pts.front().first - 0.5 * h, pts.back().first + 0.5 * h,
                           static_cast<int>(pts.size())};
        Eigen::VectorXd w(grid.cells);
        double mass = 0.0;
        for (int c = 0; c < grid.cells; ++c) {
            w[c] = pts[static_cast<std::size_t>(c)].second * h;
            mass += w[c];
        }
        sol.measures.grids.push_back(grid);
        sol.measures.weights.push_back(std::move(w));
        sol.measures.masses.push_back(mass);
    }
    for (const auto& row : supp.rows) {
        sol.supports.push_back({std::stod(row[1]), std::stod(row[2])});
        sol.constants.push_back(std::stod(row[3]));
    }
    if (sol.supports.size() != sol.measures.grids.size())
        throw ParseError(supportsPath + ": component count mismatch with densities");
    sol.converged = true;
    sol.supportsDisjoint = true;
    for (std::size_t i = 0; i + 1 < sol.supports.size(); ++i)
        if (!(sol.supports[i + 1].beta < sol.supports[i].alpha)) sol.supportsDisjoint = false;
    return sol;
}

} // namespace nibm
