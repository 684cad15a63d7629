#include "mobilab/io.hpp"
#include "mobilab/earnings.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

using namespace mobilab;

namespace {

std::string header_line() {
    std::string s;
    for (const auto& h : lineage_header()) s += (s.empty() ? "" : ",") + h;
    return s;
}

std::string row(const std::string& fixed, const std::string& child_schooling, const std::string& child_rank = "") {
    std::string s = fixed + "," + child_schooling + ",," + child_rank;
    for (std::size_t i = 1; i < kRelativeCount; ++i) s += ",,,";
    return s;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("mobilab_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("shortest round-trip formatting") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z(0.0, 1e3);
    for (int i = 0; i < 1000; ++i) {
        const double v = z(rng);
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(kMissing).empty());
    CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("CSV splitting and escaping") {
    CHECK(split_csv_line("a,,\"b,c\",d") == std::vector<std::string>{"a", "", "b,c", "d"});
    CHECK(split_csv_line("\"x \"\"y\"\"\"") == std::vector<std::string>{"x \"y\""});
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("a,b") == "\"a,b\"");
    std::ostringstream os;
    CsvWriter w(os);
    w.field("name").field(1.5).field(std::size_t{3}).field(true).end_row();
    CHECK(os.str() == "name,1.5,3,1\n");
}

TEST_CASE("FNV-1a reference values") {
    CHECK(hex64(fnv1a("")) == "cbf29ce484222325");
    CHECK(hex64(fnv1a("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("lineage CSV round trip is exact") {
    GeneratorConfig cfg;
    cfg.seed = 4;
    RegionParams p;
    p.region_id = 3;
    p.n_lineages = 200;
    p.schooling.gen_means = {13.0, 12.0, 9.0};
    p.schooling.gen_sds = {2.0, 2.0, 2.0};
    p.schooling.missing_rates[index_of(Relative::MaternalGrandmother)] = 0.4;
    cfg.regions = {p};
    auto recs = generate_population(cfg);
    for (auto& r : recs)
        for (Relative rel : kAllRelatives)
            if (present(r.at(rel).log_earnings)) r.at(rel).earnings_rank = 0.5;
    std::stringstream ss;
    write_lineage_csv(ss, recs);
    const auto rep = ingest_lineage_csv(ss);
    REQUIRE(rep.records.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) CHECK(same_record(recs[i], rep.records[i]));
    CHECK(rep.errors.empty());
}

TEST_CASE("header mismatch is a validation error even when skipping rows") {
    std::stringstream ss("child_id,region\n1,2\n");
    IngestOptions opt;
    opt.fail_fast = false;
    try {
        ingest_lineage_csv(ss, opt);
        FAIL("header accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Validation);
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
}

TEST_CASE("fail-fast reports line and column; skip mode logs and continues") {
    const std::string text = header_line() + "\n" + row("1,1,1985,M", "12") + "\n" + row("2,1,1985,M", "45") + "\n" +
                             row("3,1,1985,F", "11", "1.5") + "\n" + row("4,1,1985,X", "10") + "\n" +
                             row("5,1,1985,F", "9") + "\n";
    {
        std::stringstream ss(text);
        try {
            ingest_lineage_csv(ss);
            FAIL("bad row accepted");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Validation);
            CHECK(std::string(e.what()) == "line 3, column child_schooling: schooling 45 outside [0, 30]");
        }
    }
    std::stringstream ss(text);
    IngestOptions opt;
    opt.fail_fast = false;
    const auto rep = ingest_lineage_csv(ss, opt);
    CHECK(rep.rows_read == 5);
    REQUIRE(rep.records.size() == 2);
    CHECK(rep.records[0].child_id == 1);
    CHECK(rep.records[1].child_id == 5);
    REQUIRE(rep.errors.size() == 3);
    CHECK(rep.errors[0].line == 3);
    CHECK(rep.errors[1].column == "child_earnings_rank");
    CHECK(rep.errors[2].column == "child_gender");
    std::ostringstream report;
    write_ingest_report(report, rep);
    CHECK(report.str().find("child_schooling") != std::string::npos);
}

TEST_CASE("categorical education accepts only attainment codes") {
    const std::string text = header_line() + "\n" + row("1,1,1985,M", "10.5") + "\n" + row("2,1,1985,M", "11") + "\n";
    IngestOptions opt;
    opt.categorical_education = true;
    opt.fail_fast = false;
    std::stringstream ss(text);
    const auto rep = ingest_lineage_csv(ss, opt);
    CHECK(rep.records.size() == 1);
    CHECK(rep.errors.size() == 1);
}

TEST_CASE("ragged rows are rejected") {
    std::stringstream ss(header_line() + "\n1,1,1985,M\n");
    CHECK_THROWS_AS(ingest_lineage_csv(ss), Error);
}

TEST_CASE("panel CSV round trip") {
    const auto dir = temp_dir("panel");
    std::vector<EarningsPanelRow> rows(3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].person_id = 10 + i;
        rows[i].region_id = 2;
        rows[i].gender = i == 1 ? Gender::Female : Gender::Male;
        rows[i].edu_group = static_cast<int>(i);
        rows[i].birth_year = 1950;
        rows[i].year = 1990 + static_cast<int>(i);
        rows[i].age = 40 + static_cast<int>(i);
        rows[i].log_earnings = 12.0 + 0.1 * static_cast<double>(i);
        rows[i].below_floor = i == 2;
    }
    write_panel_csv(dir / "panel.csv", rows);
    CHECK(read_panel_csv(dir / "panel.csv") == rows);
    CHECK_THROWS_AS(read_panel_csv(dir / "missing.csv"), Error);
}

TEST_CASE("tables read back by column name") {
    const auto dir = temp_dir("table");
    {
        std::ofstream os(dir / "t.csv");
        os << "a,b\n1,x\n2.5,\"y,z\"\n";
    }
    const Table t = read_table(dir / "t.csv");
    CHECK(t.rows.size() == 2);
    CHECK(t.number(1, "a") == doctest::Approx(2.5));
    CHECK(t.text(1, "b") == "y,z");
    CHECK_THROWS_AS(t.column("c"), Error);
}

TEST_CASE("calibrated populations ingest cleanly") {
    CalibrationOptions opt;
    opt.total_lineages = 60'000;
    auto recs = generate_population(calibrated_config(12, opt));
    assign_earnings_ranks(recs);
    std::stringstream ss;
    write_lineage_csv(ss, recs);
    const auto rep = ingest_lineage_csv(ss);
    CHECK(rep.errors.empty());
    CHECK(rep.records.size() == recs.size());
}
