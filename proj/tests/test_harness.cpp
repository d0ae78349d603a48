#include <doctest.h>

#include <fstream>
#include <sstream>

#include "hjh/harness.hpp"

using namespace hjh;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = HJH_CONFIG_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

Json small_residual_doc() {
    return Json::parse(R"({
      "schema_version": 1,
      "name": "harness-small",
      "problem": "problems/quadratic-cos.json",
      "initial_data": {"family": "logcosh-ramp", "axes": [{"p_minus": 1.0, "p_plus": 1.5, "sigma": 0.25}]},
      "orders": [1, 2],
      "eps": [0.25, 0.125, 0.0625],
      "grids": {"N": 32, "slow_hx": 0.0625, "slow_nt": 9},
      "window": {"lo": [-0.125], "hi": [0.125]},
      "T": 0.125,
      "mode": "residual",
      "validation_samples": 64
    })");
}

}  // namespace

TEST_CASE("fit_slope on exact power laws") {
    const std::vector<double> eps{0.5, 0.25, 0.125, 0.0625};
    std::vector<double> e1, e2;
    for (double e : eps) {
        e1.push_back(0.3 * e);
        e2.push_back(2.0 * e * e);
    }
    const RateFit a = fit_slope(eps, e1), b = fit_slope(eps, e2);
    CHECK(a.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(a.points == 4);
    CHECK_FALSE(a.exact);
    CHECK(a.ci_low == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(a.ci_high == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fit_slope confidence interval brackets a noisy slope") {
    const std::vector<double> eps{0.5, 0.25, 0.125, 0.0625, 0.03125};
    const std::vector<double> err{0.26, 0.06, 0.017, 0.0038, 0.00099};
    const RateFit f = fit_slope(eps, err);
    CHECK(f.ci_low < f.slope);
    CHECK(f.slope < f.ci_high);
    CHECK(f.slope == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("fit_slope floor, exactness and input checks") {
    const std::vector<double> eps{0.5, 0.25, 0.125, 0.0625};
    SUBCASE("rows below the floor are dropped") {
        const RateFit f = fit_slope(eps, std::vector<double>{0.25, 0.0625, 1e-12, 1e-13});
        CHECK(f.points == 2);
        CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(std::isnan(f.ci_low));
    }
    SUBCASE("a single row above the floor is insufficient") {
        const RateFit f = fit_slope(eps, std::vector<double>{0.25, 1e-12, 1e-12, 1e-12});
        CHECK(f.points == 1);
        CHECK_FALSE(f.exact);
        CHECK(std::isnan(f.slope));
    }
    SUBCASE("all rows below the floor") {
        const RateFit f = fit_slope(eps, std::vector<double>(4, 1e-14));
        CHECK(f.exact);
        CHECK(f.points == 0);
    }
    SUBCASE("fewer than three rows") {
        CHECK_THROWS_AS(fit_slope(std::vector<double>{0.5, 0.25}, std::vector<double>{1.0, 0.5}), InvalidInput);
    }
    SUBCASE("non-finite errors") {
        CHECK_THROWS_AS(fit_slope(eps, std::vector<double>{1.0, NAN, 0.5, 0.25}), InvalidInput);
    }
}

TEST_CASE("csv_number formatting") {
    CHECK(csv_number(0.125) == "1.250000000000e-01");
    CHECK(csv_number(-3.0) == "-3.000000000000e+00");
    CHECK(csv_number(std::nan("")).empty());
}

TEST_CASE("emit_report writes the fixed file set") {
    const fs::path dir = fs::path("harness-out") / "emit";
    fs::remove_all(dir);
    StudyReport r;
    r.config.source = Json::object();
    SUBCASE("header only") {
        emit_report(r, dir);
        CHECK(slurp(dir / "rows.csv") == "eps,m,sup_error,max_residual,direct_mismatch\n");
        CHECK(slurp(dir / "slopes.csv") == "quantity,m,slope,ci_low,ci_high,points,status\n");
        for (const char* f : {"loglog.csv", "acceptance.csv", "config-echo.json", "stages.log", "timings.csv",
                              "environment.json"})
            CHECK(fs::exists(dir / f));
    }
    SUBCASE("twelve rows") {
        for (int j = 1; j <= 6; ++j)
            for (int m = 1; m <= 2; ++m) {
                const double eps = std::ldexp(1.0, -j);
                StudyRow row{eps, m};
                row.max_residual = std::pow(eps, m);
                r.rows.push_back(row);
            }
        r.fits = fit_rates(r.rows);
        emit_report(r, dir);
        const auto rows = lines(slurp(dir / "rows.csv"));
        REQUIRE(rows.size() == 13);
        CHECK(rows[1] == "5.000000000000e-01,1,,5.000000000000e-01,");
        CHECK(rows[12] == "1.562500000000e-02,2,,2.441406250000e-04,");
        const auto slopes = lines(slurp(dir / "slopes.csv"));
        REQUIRE(slopes.size() == 3);
        CHECK(slopes[1].rfind("max_residual,1,1.000000000000e+00", 0) == 0);
        CHECK(slopes[2].rfind("max_residual,2,2.000000000000e+00", 0) == 0);
    }
}

TEST_CASE("acceptance rules") {
    StudyConfig c;
    std::vector<StudyRow> rows;
    for (double eps : {0.25, 0.125, 0.0625})
        for (int m : {1, 2}) {
            StudyRow r{eps, m};
            r.sup_error = m == 1 ? eps : 0.7 * eps;  // m = 2 not second order
            rows.push_back(r);
        }
    c.acceptance.monotone_slack = 0.0;
    const auto fits = fit_rates(rows);
    const auto acc = evaluate_acceptance(c, rows, fits, std::nan(""));
    auto find = [&](const std::string& n) {
        for (const auto& a : acc)
            if (a.name == n) return a;
        FAIL("missing acceptance line " << n);
        return AcceptanceLine{};
    };
    CHECK(find("sup_error-slope m=1").pass);
    CHECK_FALSE(find("sup_error-slope m=2").pass);
    CHECK(find("sup_error-monotone-in-m").pass);
}

TEST_CASE("study config validation") {
    const Json good = small_residual_doc();
    CHECK_NOTHROW(study_config_from_json(good, kConfigs));
    auto broken = [&](auto edit) {
        Json d = good;
        edit(d);
        return d;
    };
    CHECK_THROWS_AS(study_config_from_json(broken([](Json& d) { d["colour"] = 1; }), kConfigs), InvalidInput);
    CHECK_THROWS_AS(study_config_from_json(broken([](Json& d) { d["grids"]["Nper"] = 1; }), kConfigs), InvalidInput);
    CHECK_THROWS_AS(study_config_from_json(broken([](Json& d) { d["eps"] = {0.125, 0.25}; }), kConfigs), InvalidInput);
    CHECK_THROWS_AS(study_config_from_json(broken([](Json& d) { d["eps"] = {0.75}; }), kConfigs), InvalidInput);
    CHECK_THROWS_AS(study_config_from_json(broken([](Json& d) { d["orders"] = {4}; }), kConfigs), InvalidInput);
    CHECK_THROWS_AS(study_config_from_json(broken([](Json& d) { d["orders"] = {0}; }), kConfigs), InvalidInput);
    CHECK_THROWS_AS(study_config_from_json(broken([](Json& d) { d["mode"] = "fast"; }), kConfigs), InvalidInput);
    CHECK_THROWS_AS(study_config_from_json(broken([](Json& d) { d.erase("schema_version"); }), kConfigs), InvalidInput);
    const StudyConfig c = study_config_from_json(broken([](Json& d) { d["orders"] = {2, 1, 2}; }), kConfigs);
    CHECK(c.orders == std::vector<int>{1, 2});
}

TEST_CASE("shipped configs parse") {
    for (const auto& e : fs::directory_iterator(kConfigs))
        if (e.path().extension() == ".json") CHECK_NOTHROW(load_study_config(e.path()));
}

TEST_CASE("residual study: stages, rates and byte-identical rows") {
    const StudyConfig c = study_config_from_json(small_residual_doc(), kConfigs);
    const fs::path a = fs::path("harness-out") / "run-a", b = fs::path("harness-out") / "run-b";
    fs::remove_all(a);
    fs::remove_all(b);
    const StudyReport r = run_study(c, a);
    run_study(c, b);
    for (const auto& s : r.stages) CHECK(s.find("reference") == std::string::npos);
    CHECK(r.stages.front() == "validate");
    CHECK(r.stages.back() == "acceptance");
    REQUIRE(r.rows.size() == 6);
    CHECK(r.rows[0].eps == 0.25);
    CHECK(r.rows[0].m == 1);
    CHECK(std::isnan(r.rows[0].sup_error));
    CHECK(r.passed());
    CHECK(slurp(a / "rows.csv") == slurp(b / "rows.csv"));
    CHECK(slurp(a / "slopes.csv") == slurp(b / "slopes.csv"));
    CHECK(slurp(a / "stages.log") == slurp(b / "stages.log"));
}

TEST_CASE("a failing stage is named and the partial report is written") {
    Json d = small_residual_doc();
    d["grids"]["p_box"] = {{"lo", {1.0}}, {"hi", {1.2}}, {"dp", 0.05}};  // misses the slopes of g
    const StudyConfig c = study_config_from_json(d, kConfigs);
    const fs::path out = fs::path("harness-out") / "failing";
    fs::remove_all(out);
    try {
        run_study(c, out);
        FAIL("study should have failed");
    } catch (const StudyError& e) {
        CHECK(e.stage() == "effective_table");
    }
    CHECK(slurp(out / "config-echo.json").find("effective_table") != std::string::npos);
}
