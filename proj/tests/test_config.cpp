#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nibm/config.hpp>
#include <nibm/csv.hpp>

using namespace nibm;

namespace {

std::string fixturePath(const std::string& name) {
    return std::string(TEST_FIXTURE_DIR) + "/" + name;
}

} // namespace

TEST_CASE("parseRational reads exact fractions and integers") {
    CHECK(parseRational("4/30") == Rational(4, 30));
    CHECK(parseRational("4/30") == Rational(2, 15));
    CHECK(parseRational("1/3") == Rational(1, 3));
    CHECK(parseRational("0") == Rational(0));
    CHECK(parseRational("2") == Rational(2));
    CHECK_THROWS_AS(parseRational("1/0"), ParseError);
    CHECK_THROWS_AS(parseRational("0.5"), ParseError);
    CHECK_THROWS_AS(parseRational("one"), ParseError);
}

TEST_CASE("fixture configs parse with the expected values") {
    const RunConfig cfg = parseRunConfigFile(fixturePath("pq2.conf"));
    CHECK(cfg.problem.p == 2);
    CHECK(cfg.problem.q == 2);
    CHECK(cfg.problem.a == std::vector<double>{1.0, -1.0});
    CHECK(cfg.problem.b == std::vector<double>{1.0, -1.0});
    CHECK(cfg.problem.t == 0.5);
    CHECK(cfg.problem.T == 0.05);
    CHECK(cfg.transition.at(0, 0) == Rational(1, 3));
    CHECK(cfg.transition.at(1, 0) == Rational(0));
    CHECK(cfg.solver.gridCells == 512);
    CHECK(cfg.solver.tol == 1e-6);
    CHECK(cfg.ensemble.n == 6);
    CHECK(cfg.ensemble.seed == 42);
    CHECK(cfg.ensemble.timeSteps == 16);
    CHECK(cfg.ensemble.bundles == 100);
    CHECK(cfg.ensemble.rounding == RoundingMode::LargestRemainder);
    CHECK(cfg.outDir == "out");

    const RunConfig p2q4 = parseRunConfigFile(fixturePath("p2q4.conf"));
    CHECK(p2q4.problem.p == 2);
    CHECK(p2q4.problem.q == 4);
    CHECK(p2q4.transition.at(1, 3) == Rational(11, 30));
}

TEST_CASE("unknown keys and sections are rejected") {
    const std::string base = "[problem]\np = 1\nq = 1\na = 0\nb = 0\n[transition]\nrow = 1\n";
    CHECK_NOTHROW(parseRunConfigString(base));
    CHECK_THROWS_AS(parseRunConfigString(base + "[solver]\nbogus = 3\n"), ParseError);
    CHECK_THROWS_AS(parseRunConfigString(base + "[mystery]\nx = 1\n"), ParseError);
    CHECK_THROWS_AS(parseRunConfigString("[problem]\np = one\n"), ParseError);
}

TEST_CASE("enum-valued keys parse and reject typos") {
    const std::string base = "[problem]\np = 1\nq = 1\na = 0\nb = 0\n[transition]\nrow = 1\n";
    auto with = [&](const std::string& kv) {
        return parseRunConfigString(base + "[ensemble]\n" + kv + "\n");
    };
    CHECK(with("basis = monomial").ensemble.basis == BasisMode::Monomial);
    CHECK(with("basis = hermite").ensemble.basis == BasisMode::Hermite);
    CHECK(with("rounding = strict").ensemble.rounding == RoundingMode::Strict);
    CHECK(with("sampler = grid").ensemble.sampler == SamplerMode::GridRejection);
    CHECK(with("sampler = corrected").ensemble.sampler == SamplerMode::Corrected);
    CHECK_THROWS_AS(with("sampler = fancy"), ParseError);
    CHECK_THROWS_AS(with("basis = fourier"), ParseError);
}

TEST_CASE("value-level violations raise InvalidConfig") {
    // starting points must be strictly decreasing
    CHECK_THROWS_AS(
        parseRunConfigString(
            "[problem]\np = 2\nq = 1\na = -1, 1\nb = 0\n[transition]\nrow = 1/2\nrow = 1/2\n"),
        InvalidConfig);
    // t outside (0,1)
    CHECK_THROWS_AS(parseRunConfigString(
                        "[problem]\np = 1\nq = 1\na = 0\nb = 0\nt = 1.5\n[transition]\nrow = 1\n"),
                    InvalidConfig);
    // missing transition section
    CHECK_THROWS_AS(parseRunConfigFile(fixturePath("empty.conf")), Error);
}

TEST_CASE("csv round-trips byte-identically") {
    CsvTable t;
    t.header = {"x", "y"};
    t.addRow({formatDouble(1.0 / 3.0), formatDouble(-2.5e-17)});
    t.addRow({formatDouble(0.0), formatDouble(1e300)});

    const std::string path = (std::filesystem::temp_directory_path() / "nibm_csv_test.csv").string();
    writeCsv(path, t);
    const CsvTable back = readCsv(path);
    CHECK(back.header == t.header);
    REQUIRE(back.rows.size() == t.rows.size());
    CHECK(back.rows == t.rows);
    CHECK(std::stod(back.rows[0][0]) == 1.0 / 3.0);
    std::remove(path.c_str());
}

TEST_CASE("missing csv reports a missing artifact") {
    CHECK_THROWS_AS(readCsv("/nonexistent/definitely_not_here.csv"), MissingArtifact);
}
