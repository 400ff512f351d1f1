#include "nibm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace nibm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> splitCommas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

double parseDouble(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw ParseError("trailing characters in value for " + key);
        return v;
    } catch (const ParseError&) {
        throw;
    } catch (...) {
        throw ParseError("cannot parse number '" + s + "' for " + key);
    }
}

std::int64_t parseInt(const std::string& s, const std::string& key) {
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError("cannot parse integer '" + s + "' for " + key);
    return v;
}

bool parseBool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ParseError("cannot parse boolean '" + s + "' for " + key);
}

} // namespace

Rational parseRational(const std::string& text) {
    const std::string s = trim(text);
    const auto slash = s.find('/');
    auto parsePart = [&](const std::string& part) {
        std::int64_t v = 0;
        const std::string t = trim(part);
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc{} || p != t.data() + t.size())
            throw ParseError("cannot parse rational part '" + part + "'");
        return v;
    };
    if (slash == std::string::npos) return Rational(parsePart(s), 1);
    const std::int64_t den = parsePart(s.substr(slash + 1));
    if (den == 0) throw ParseError("rational with zero denominator: " + s);
    return Rational(parsePart(s.substr(0, slash)), den);
}

RunConfig parseRunConfig(std::istream& in) {
    RunConfig cfg;
    std::string section;
    std::string line;
    int lineNo = 0;
    std::vector<std::vector<Rational>> rows;
    bool sawProblem = false;

    while (std::getline(in, line)) {
        ++lineNo;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("unterminated section header at line " + std::to_string(lineNo));
            section = trim(line.substr(1, line.size() - 2));
            if (section != "problem" && section != "transition" && section != "solver" &&
                section != "ensemble" && section != "output")
                throw ParseError("unknown section [" + section + "]");
            if (section == "problem") sawProblem = true;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value at line " + std::to_string(lineNo));
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (section.empty()) throw ParseError("key '" + key + "' before any section");

        if (section == "problem") {
            if (key == "p") cfg.problem.p = static_cast<int>(parseInt(val, key));
            else if (key == "q") cfg.problem.q = static_cast<int>(parseInt(val, key));
            else if (key == "a") {
                cfg.problem.a.clear();
                for (const auto& tok : splitCommas(val)) cfg.problem.a.push_back(parseDouble(tok, key));
            } else if (key == "b") {
                cfg.problem.b.clear();
                for (const auto& tok : splitCommas(val)) cfg.problem.b.push_back(parseDouble(tok, key));
            } else if (key == "t") cfg.problem.t = parseDouble(val, key);
            else if (key == "T") cfg.problem.T = parseDouble(val, key);
            else throw ParseError("unknown key '" + key + "' in [problem]");
        } else if (section == "transition") {
            if (key != "row") throw ParseError("unknown key '" + key + "' in [transition]");
            std::vector<Rational> row;
            for (const auto& tok : splitCommas(val)) row.push_back(parseRational(tok));
            rows.push_back(std::move(row));
        } else if (section == "solver") {
            if (key == "grid") cfg.solver.gridCells = static_cast<int>(parseInt(val, key));
            else if (key == "tol") cfg.solver.tol = parseDouble(val, key);
            else if (key == "max_iterations") cfg.solver.maxIterations = static_cast<int>(parseInt(val, key));
            else if (key == "refine") cfg.solver.refine = parseBool(val, key);
            else if (key == "refine_tol") cfg.solver.refineTol = parseDouble(val, key);
            else if (key == "chebyshev_nodes") cfg.solver.chebyshevNodes = static_cast<int>(parseInt(val, key));
            else throw ParseError("unknown key '" + key + "' in [solver]");
        } else if (section == "ensemble") {
            if (key == "n") cfg.ensemble.n = parseInt(val, key);
            else if (key == "seed") cfg.ensemble.seed = static_cast<std::uint64_t>(parseInt(val, key));
            else if (key == "time_steps") cfg.ensemble.timeSteps = static_cast<int>(parseInt(val, key));
            else if (key == "bundles") cfg.ensemble.bundles = parseInt(val, key);
            else if (key == "basis") {
                if (val == "hermite") cfg.ensemble.basis = BasisMode::Hermite;
                else if (val == "monomial") cfg.ensemble.basis = BasisMode::Monomial;
                else throw ParseError("unknown basis '" + val + "'");
            } else if (key == "rounding") {
                if (val == "strict") cfg.ensemble.rounding = RoundingMode::Strict;
                else if (val == "largest_remainder") cfg.ensemble.rounding = RoundingMode::LargestRemainder;
                else throw ParseError("unknown rounding mode '" + val + "'");
            } else if (key == "sampler") {
                if (val == "corrected") cfg.ensemble.sampler = SamplerMode::Corrected;
                else if (val == "grid") cfg.ensemble.sampler = SamplerMode::GridRejection;
                else throw ParseError("unknown sampler mode '" + val + "'");
            } else throw ParseError("unknown key '" + key + "' in [ensemble]");
        } else if (section == "output") {
            if (key == "dir") cfg.outDir = val;
            else throw ParseError("unknown key '" + key + "' in [output]");
        }
    }

    if (!sawProblem) throw ParseError("missing [problem] section");
    if (rows.empty()) throw ParseError("missing [transition] rows");
    cfg.transition.p = static_cast<int>(rows.size());
    cfg.transition.q = static_cast<int>(rows.front().size());
    if (cfg.transition.p != cfg.problem.p || cfg.transition.q != cfg.problem.q)
        throw ParseError("transition matrix shape does not match p x q");
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != cfg.transition.q)
            throw ParseError("ragged transition matrix rows");
        for (const auto& r : row) cfg.transition.entries.push_back(r);
    }
    cfg.problem.validate();
    cfg.transition.validate();
    return cfg;
}

RunConfig parseRunConfigFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open config file " + path);
    return parseRunConfig(in);
}

RunConfig parseRunConfigString(const std::string& text) {
    std::istringstream in(text);
    return parseRunConfig(in);
}

} // namespace nibm
