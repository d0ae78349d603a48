// Command-line driver: one subcommand per pipeline stage plus `study`.
// Exit codes: 0 pass, 2 acceptance failure, 1 error.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hjh/cell.hpp"
#include "hjh/correctors.hpp"
#include "hjh/effective.hpp"
#include "hjh/harness.hpp"
#include "hjh/io.hpp"
#include "hjh/parallel.hpp"
#include "hjh/reference.hpp"

namespace fs = std::filesystem;
using namespace hjh;

namespace {

constexpr int kPass = 0;
constexpr int kError = 1;
constexpr int kFail = 2;

struct Common {
    std::string config;
    std::string out;
    unsigned threads = 0;
};

fs::path out_dir(const Common& c, const StudyConfig& cfg) {
    if (!c.out.empty()) return c.out;
    if (!cfg.out.empty()) return cfg.out;
    return fs::path("out") / cfg.name;
}

std::ofstream open_csv(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    return f;
}

std::string num(double v) { return csv_number(v); }

int print_report(const ValidationReport& r, const fs::path& csv) {
    auto f = open_csv(csv);
    f << "check,samples,worst_margin,status,violation\n";
    for (const auto& c : r.checks) {
        f << c.name << ',' << c.samples << ',' << num(c.worst_margin) << ',' << (c.pass ? "pass" : "fail") << ",\""
          << c.violation << "\"\n";
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  worst margin " << c.worst_margin
                  << (c.pass ? "" : "  at " + c.violation) << '\n';
    }
    return r.passed() ? kPass : kFail;
}

int cmd_validate(const Common& c) {
    const Json doc = read_json(c.config);
    if (doc.contains("hamiltonian")) {
        const ProblemSpec spec = problem_from_json(doc);
        const fs::path out = c.out.empty() ? fs::path("out") / "validate" : fs::path(c.out);
        return print_report(validate_problem(spec, 256, 1), out / "validation.csv");
    }
    const StudyConfig cfg = load_study_config(c.config);
    const fs::path out = out_dir(c, cfg);
    int rc = print_report(validate_problem(cfg.spec, cfg.validation_samples, cfg.seed), out / "validation.csv");
    const Pipeline p = build_table(cfg, cfg.mode != StudyMode::residual);
    InitialDataCheckOptions io;
    io.L = cfg.spec.bounds.L;
    io.k_max = cfg.spec.k_max;
    io.seed = cfg.seed;
    const int rg = print_report(
        validate_initial_data(cfg.initial_data(), *p.table, p.region.lo, p.region.hi, cfg.validation_samples, io),
        out / "initial-data.csv");
    return std::max(rc, rg);
}

int cmd_cell(const Common& c) {
    const StudyConfig cfg = load_study_config(c.config);
    const fs::path out = out_dir(c, cfg);
    const Pipeline p = build_table(cfg, false);
    const EffectiveTable& t = *p.table;
    auto f = open_csv(out / "cell.csv");
    const int n = t.dim();
    for (int a = 0; a < n; ++a) f << "p" << a << ',';
    f << "hbar";
    for (int a = 0; a < n; ++a) f << ",bbar" << a;
    f << ",iterations,residual\n";
    for (int k = 0; k < t.nodes(); ++k) {
        const Vec pk = t.node_p(k);
        for (int a = 0; a < n; ++a) f << num(pk(a)) << ',';
        f << num(t.hbar_at(k));
        for (int a = 0; a < n; ++a) f << ',' << num(t.bbar_at(k)(a));
        f << ',' << t.diagnostics_at(k).iterations << ',' << num(t.diagnostics_at(k).residual) << '\n';
    }
    save_table(t, out / "table.json");
    std::cout << "table: " << t.nodes() << " nodes, written to " << (out / "table.json").string() << '\n';
    return print_report(check_table(t, cfg.spec.bounds), out / "table-checks.csv");
}

int cmd_effective(const Common& c) {
    const StudyConfig cfg = load_study_config(c.config);
    const fs::path out = out_dir(c, cfg);
    Pipeline p = build_table(cfg, false);
    build_effective(cfg, p, cfg.max_order());
    const EffectiveSolution& sol = *p.effective;
    const int n = cfg.spec.dim;
    auto f = open_csv(out / "effective.csv");
    f << (n == 1 ? "x,t,u0,du0,d2u0,bbar\n" : "x0,x1,t,u0,du0_0,du0_1,d2u0_00,d2u0_01,d2u0_11,bbar0,bbar1\n");
    const int per = n == 1 ? 65 : 17;
    std::vector<double> times{0.0};
    for (double t : output_times(cfg)) times.push_back(t);
    for (double t : times)
        for (int j = 0; j < (n == 1 ? 1 : per); ++j)
            for (int i = 0; i < per; ++i) {
                Vec x(n);
                x(0) = cfg.window.lo(0) + (cfg.window.hi(0) - cfg.window.lo(0)) * i / (per - 1);
                if (n == 2) x(1) = cfg.window.lo(1) + (cfg.window.hi(1) - cfg.window.lo(1)) * j / (per - 1);
                const U0Eval e = sol.eval(x, t);
                const Vec b = sol.drift(x, t);
                for (int a = 0; a < n; ++a) f << num(x(a)) << ',';
                f << num(t) << ',' << num(e.value);
                for (int a = 0; a < n; ++a) f << ',' << num(e.grad(a));
                if (n == 1) f << ',' << num(e.hess(0, 0));
                else f << ',' << num(e.hess(0, 0)) << ',' << num(e.hess(0, 1)) << ',' << num(e.hess(1, 1));
                for (int a = 0; a < n; ++a) f << ',' << num(b(a));
                f << '\n';
            }
    std::cout << "fan: " << sol.fan().x.size() << " sources, min Jacobian " << sol.fan().min_jacobian
              << ", max |Bbar| " << sol.fan().max_speed << '\n';
    return kPass;
}

int cmd_correctors(const Common& c) {
    const StudyConfig cfg = load_study_config(c.config);
    const fs::path out = out_dir(c, cfg);
    Pipeline p = build_table(cfg, cfg.mode != StudyMode::residual);
    const int m = std::max(cfg.max_order(), 1);
    build_effective(cfg, p, m);
    build_correctors(cfg, p, m);
    const CorrectorHierarchy& h = *p.hierarchy;
    auto f = open_csv(out / "correctors.csv");
    const int n = cfg.spec.dim;
    for (int a = 0; a < n; ++a) f << "x" << a << ',';
    f << "t";
    for (int k = 1; k <= m; ++k) f << ",ubar" << k << ",fbar" << k;
    f << '\n';
    for (int node = 0; node < h.slow().size(); ++node) {
        const Vec x = h.slow().x(node);
        for (int a = 0; a < n; ++a) f << num(x(a)) << ',';
        f << num(h.slow().t(node));
        for (int k = 1; k <= m; ++k) f << ',' << num(h.ubar(k, node)) << ',' << num(h.fbar(k, node));
        f << '\n';
    }
    save_hierarchy(h, out / "hierarchy.json");
    std::cout << "hierarchy: order " << m << ", " << h.slow().size() << " slow nodes, chi consistency "
              << h.chi_consistency() << ", written to " << (out / "hierarchy.json").string() << '\n';
    return kPass;
}

int cmd_reference(const Common& c) {
    const StudyConfig cfg = load_study_config(c.config);
    const fs::path out = out_dir(c, cfg);
    Pipeline p = build_table(cfg, true);
    if (cfg.profile == InitialProfile::prepared) {
        build_effective(cfg, p, cfg.max_order());
        build_correctors(cfg, p, cfg.max_order());
    }
    const std::vector<double> times = output_times(cfg);
    for (double eps : cfg.eps) {
        const FineGrid1D fg = reference_grid(cfg, p.max_speed, eps);
        std::vector<double> init;
        if (p.hierarchy) init = prepared_profile(*p.hierarchy, fg, cfg.max_order());
        const ReferenceSolution ref = solve_reference(cfg.spec, cfg.initial_data(), fg, times, init);
        std::ostringstream name;
        name << "reference-eps" << num(eps) << ".csv";
        auto f = open_csv(out / name.str());
        f << "x";
        for (double t : ref.times) f << ",u(t=" << num(t) << ")";
        f << '\n';
        for (int i = 0; i < fg.points(); ++i) {
            f << num(fg.x(i));
            for (const auto& u : ref.u) f << ',' << num(u[i]);
            f << '\n';
        }
        std::cout << "eps " << eps << ": " << fg.points() << " points, " << ref.steps << " steps, max CFL "
                  << ref.max_cfl << ", Peclet " << ref.peclet << '\n';
    }
    return kPass;
}

int cmd_study(const Common& c, std::optional<StudyMode> force) {
    StudyConfig cfg = load_study_config(c.config);
    if (force) {
        cfg.mode = *force;
        cfg.source["mode"] = to_string(*force);
        if (*force == StudyMode::end_to_end && cfg.spec.dim != 1)
            throw InvalidInput("compare: end-to-end runs are one-dimensional only");
    }
    const fs::path out = out_dir(c, cfg);
    const StudyReport rep = run_study(cfg, out, [](const std::string& s) { std::cerr << "[stage] " << s << '\n'; });
    std::cout << "eps,m,sup_error,max_residual\n";
    for (const auto& r : rep.rows)
        std::cout << num(r.eps) << ',' << r.m << ',' << num(r.sup_error) << ',' << num(r.max_residual) << '\n';
    for (const auto& f : rep.fits)
        std::cout << "slope " << f.quantity << " m=" << f.m << ": "
                  << (f.exact ? std::string("exact") : num(f.slope)) << '\n';
    for (const auto& a : rep.acceptance) std::cout << (a.pass ? "PASS " : "FAIL ") << a.name << "  " << a.detail << '\n';
    std::cout << "report written to " << out.string() << '\n';
    return rep.passed() ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Homogenization of viscous Hamilton-Jacobi equations: cell problems, correctors and rate studies"};
    app.require_subcommand(1);
    Common common;
    int rc = kPass;

    auto add = [&](const char* name, const char* help, std::function<int()> run) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", common.config, "problem or study JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "output directory");
        sub->add_option("--threads", common.threads, "worker threads (0 = hardware concurrency)");
        sub->callback([&, run] {
            set_thread_count(common.threads);
            rc = run();
        });
    };
    add("validate", "check structure conditions and initial-data admissibility", [&] { return cmd_validate(common); });
    add("cell", "tabulate Hbar and Bbar and run the table property suite", [&] { return cmd_cell(common); });
    add("effective", "sample the effective solution on the window", [&] { return cmd_effective(common); });
    add("correctors", "build the corrector hierarchy and write an archive", [&] { return cmd_correctors(common); });
    add("residual", "residual rates of the expansion", [&] { return cmd_study(common, StudyMode::residual); });
    add("reference", "solve the eps-problem and write snapshots", [&] { return cmd_reference(common); });
    add("compare", "end-to-end errors against the reference solver",
        [&] { return cmd_study(common, StudyMode::end_to_end); });
    add("study", "full study as configured", [&] { return cmd_study(common, std::nullopt); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kPass : kError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kError;
    }
    return rc;
}
