#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "hjh/errors.hpp"
#include "hjh/io.hpp"

using namespace hjh;
using fx::v1;
using fx::v2;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = HJH_CONFIG_DIR;

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "hjh-test-io";
    fs::create_directories(d);
    return d / name;
}

}  // namespace

TEST_CASE("base64 double arrays round trip bit for bit") {
    const std::vector<double> v{0.0, -0.0, 1.0 / 3.0, 1e-300, -2.5e17, std::numeric_limits<double>::quiet_NaN(),
                                std::numeric_limits<double>::infinity()};
    const std::vector<double> back = decode_doubles(encode_doubles(v));
    REQUIRE(back.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (std::isnan(v[i])) CHECK(std::isnan(back[i]));
        else CHECK(std::memcmp(&v[i], &back[i], sizeof(double)) == 0);
    }
    CHECK(decode_doubles(encode_doubles({})).empty());
    CHECK_THROWS_AS(decode_doubles("AAAA"), InvalidInput);
}

TEST_CASE("problem documents round trip") {
    for (const ProblemSpec& s : {fx::quadratic_cos(), fx::pure_quadratic(1), fx::pure_quadratic(2), fx::varying_2d()}) {
        const Json doc = problem_to_json(s);
        const ProblemSpec t = problem_from_json(doc);
        CHECK(problem_to_json(t) == doc);
        CHECK(t.dim == s.dim);
        // Same cell solution from both.
        const Vec p = s.dim == 1 ? v1(0.7) : v2(0.7, -0.3);
        const TorusGrid g(s.dim, s.dim == 1 ? 32 : 8);
        CHECK(solve_cell(s, g, p).gamma == solve_cell(t, g, p).gamma);
    }
}

TEST_CASE("problem document errors") {
    Json doc = read_json(kConfigs / "problems" / "quadratic-cos.json");
    CHECK_NOTHROW(problem_from_json(doc));
    SUBCASE("schema") {
        doc["schema_version"] = 99;
        CHECK_THROWS_AS(problem_from_json(doc), InvalidInput);
    }
    SUBCASE("family") {
        doc["hamiltonian"]["family"] = "cubic";
        CHECK_THROWS_AS(problem_from_json(doc), InvalidInput);
    }
    SUBCASE("bounds") {
        doc["bounds"]["lambda"] = -1.0;
        CHECK_THROWS_AS(problem_from_json(doc), InvalidInput);
    }
    CHECK_THROWS_AS(read_json(scratch("missing.json")), Error);
}

TEST_CASE("initial data documents round trip") {
    for (const InitialData& g : {InitialData::affine(v1(1.5)), fx::ramp(),
                                 InitialData::logcosh_ramp({RampAxis{1.0, 1.5, 0.25}, RampAxis{0.5, 1.0, 0.3}})}) {
        const InitialData h = initial_data_from_json(initial_data_to_json(g), g.dim());
        const Vec x = g.dim() == 1 ? v1(0.37) : v2(0.37, -0.2);
        CHECK(h.value(x) == g.value(x));
        CHECK(h.family() == g.family());
    }
}

TEST_CASE("effective table files round trip") {
    const ProblemSpec s = fx::quadratic_cos();
    const auto t = fx::table_1d(s, 32, 0.9, 1.6, 0.05);
    const fs::path f = scratch("table.json");
    save_table(*t, f);
    const EffectiveTable u = load_table(f);
    REQUIRE(u.nodes() == t->nodes());
    for (int k = 0; k < t->nodes(); ++k) {
        CHECK(u.hbar_at(k) == t->hbar_at(k));
        CHECK(u.bbar_at(k)(0) == t->bbar_at(k)(0));
        CHECK(u.w_at(k) == t->w_at(k));
        CHECK(u.v_at(k, 0) == t->v_at(k, 0));
    }
    for (double p : {0.93, 1.21, 1.55}) CHECK(u.H(v1(p)) == t->H(v1(p)));
}

TEST_CASE("corrector hierarchy archives round trip") {
    const fx::Built b =
        fx::build_1d(fx::quadratic_cos(), fx::ramp(), 32, 0.9, 1.6, fx::box1(-0.125, 0.125), 0.125, 1.0 / 16, 9, 2);
    const fs::path f = scratch("hierarchy.json");
    save_hierarchy(*b.h, f);
    const CorrectorHierarchy h = load_hierarchy(f);
    CHECK(h.order() == 2);
    CHECK(h.slow().size() == b.h->slow().size());
    for (double x : {-0.1, 0.0, 0.09})
        for (double t : {0.0, 0.05, 0.125}) {
            const ExpansionValue a = evaluate_expansion(*b.h, 0.125, v1(x), t, true);
            const ExpansionValue c = evaluate_expansion(h, 0.125, v1(x), t, true);
            CHECK(a.eta == c.eta);
            CHECK(a.grad(0) == c.grad(0));
            CHECK(a.scaled_hess(0, 0) == c.scaled_hess(0, 0));
        }
    const std::vector<double> eps{0.125};
    CHECK(residual_field(h, eps, fx::box1(-0.1, 0.1))[0].max_psi ==
          residual_field(*b.h, eps, fx::box1(-0.1, 0.1))[0].max_psi);
}
