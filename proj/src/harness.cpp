#include "hjh/harness.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <boost/version.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "hjh/parallel.hpp"

namespace hjh {

namespace fs = std::filesystem;

namespace {

Vec vec_of(const Json& a, int n, const char* what) {
    if (!a.is_array() || static_cast<int>(a.size()) != n)
        throw InvalidInput(std::string("study config: ") + what + " needs " + std::to_string(n) + " entries");
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = a.at(i).get<double>();
    return v;
}

Json vec_json(const Vec& v) {
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

void only_keys(const Json& doc, std::initializer_list<const char*> keys, const std::string& where) {
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, _] : doc.items())
        if (!allowed.count(k)) throw InvalidInput(where + ": unknown field \"" + k + "\"");
}

std::optional<double> opt_number(const Json& doc, const char* key) {
    if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
    return doc.at(key).get<double>();
}

bool end_to_end(StudyMode m) { return m != StudyMode::residual; }
bool residual(StudyMode m) { return m != StudyMode::end_to_end; }

std::string eps_label(double eps) {
    std::ostringstream os;
    os << "eps=" << csv_number(eps);
    return os.str();
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string to_string(StudyMode m) {
    switch (m) {
        case StudyMode::residual: return "residual";
        case StudyMode::end_to_end: return "end-to-end";
        case StudyMode::both: return "both";
    }
    return "residual";
}

std::string to_string(InitialProfile p) { return p == InitialProfile::raw ? "raw" : "prepared"; }

int StudyConfig::max_order() const { return *std::max_element(orders.begin(), orders.end()); }

const InitialData& StudyConfig::initial_data() const {
    if (g) return *g;
    if (spec.g) return *spec.g;
    throw InvalidInput("study config: no initial data in the config or the problem");
}

StudyConfig study_config_from_json(const Json& doc, const fs::path& base) {
    require_schema(doc, "study config");
    only_keys(doc,
              {"schema_version", "name", "problem", "initial_data", "table", "orders", "eps", "grids", "window", "T",
               "mode", "initial_profile", "scheme", "output_times", "seed", "validation_samples", "insulation_check",
               "acceptance", "out"},
              "study config");
    StudyConfig c;
    c.source = doc;
    c.name = doc.value("name", c.name);

    if (!doc.contains("problem")) throw InvalidInput("study config: missing field \"problem\"");
    const Json& prob = doc.at("problem");
    c.spec = prob.is_string() ? load_problem(base / prob.get<std::string>()) : problem_from_json(prob);
    const int n = c.spec.dim;
    if (doc.contains("initial_data")) c.g = initial_data_from_json(doc.at("initial_data"), n);
    if (doc.contains("table")) c.table_path = base / doc.at("table").get<std::string>();
    if (doc.contains("out")) c.out = base / doc.at("out").get<std::string>();

    if (doc.contains("orders")) c.orders = doc.at("orders").get<std::vector<int>>();
    if (c.orders.empty()) throw InvalidInput("study config: orders must not be empty");
    for (int m : c.orders)
        if (m < 0 || m > 3) throw InvalidInput("study config: orders must lie in 0..3");
    std::sort(c.orders.begin(), c.orders.end());
    c.orders.erase(std::unique(c.orders.begin(), c.orders.end()), c.orders.end());

    if (!doc.contains("eps")) throw InvalidInput("study config: missing field \"eps\"");
    c.eps = doc.at("eps").get<std::vector<double>>();
    if (c.eps.empty()) throw InvalidInput("study config: eps must not be empty");
    for (std::size_t i = 0; i < c.eps.size(); ++i) {
        if (!(c.eps[i] > 0.0 && c.eps[i] <= 0.5)) throw InvalidInput("study config: eps values must lie in (0, 1/2]");
        if (i > 0 && !(c.eps[i] < c.eps[i - 1])) throw InvalidInput("study config: eps must be sorted descending");
    }

    if (doc.contains("grids")) {
        const Json& g = doc.at("grids");
        only_keys(g, {"N", "N_per", "slow_hx", "slow_nt", "p_box"}, "study config grids");
        c.N = g.value("N", c.N);
        c.N_per = g.value("N_per", c.N_per);
        c.slow_hx = g.value("slow_hx", c.slow_hx);
        c.slow_nt = g.value("slow_nt", c.slow_nt);
        if (g.contains("p_box")) {
            const Json& b = g.at("p_box");
            c.p_lo = vec_of(b.at("lo"), n, "p_box.lo");
            c.p_hi = vec_of(b.at("hi"), n, "p_box.hi");
            c.dp = b.value("dp", c.dp);
        } else if (g.contains("dp")) {
            c.dp = g.at("dp").get<double>();
        }
    }
    if (!doc.contains("window")) throw InvalidInput("study config: missing field \"window\"");
    c.window = Box{vec_of(doc.at("window").at("lo"), n, "window.lo"), vec_of(doc.at("window").at("hi"), n, "window.hi")};
    for (int i = 0; i < n; ++i)
        if (!(c.window.lo(i) < c.window.hi(i))) throw InvalidInput("study config: empty window");
    c.T = doc.value("T", c.T);
    if (!(c.T > 0.0)) throw InvalidInput("study config: T must be positive");

    const std::string mode = doc.value("mode", std::string("residual"));
    if (mode == "residual") c.mode = StudyMode::residual;
    else if (mode == "end-to-end") c.mode = StudyMode::end_to_end;
    else if (mode == "both") c.mode = StudyMode::both;
    else throw InvalidInput("study config: mode must be residual, end-to-end or both");
    const std::string prof = doc.value("initial_profile", std::string("raw"));
    if (prof == "raw") c.profile = InitialProfile::raw;
    else if (prof == "prepared") c.profile = InitialProfile::prepared;
    else throw InvalidInput("study config: initial_profile must be raw or prepared");
    if (doc.contains("scheme")) c.scheme = scheme_from_string(doc.at("scheme").get<std::string>());
    c.output_times = doc.value("output_times", c.output_times);
    if (c.output_times < 1) throw InvalidInput("study config: output_times must be >= 1");
    c.seed = doc.value("seed", c.seed);
    c.validation_samples = doc.value("validation_samples", c.validation_samples);
    c.insulation_check = doc.value("insulation_check", c.insulation_check);

    if (doc.contains("acceptance")) {
        const Json& a = doc.at("acceptance");
        only_keys(a,
                  {"slope_slack", "residual_slopes", "end_to_end_slopes", "monotone_slack", "max_sup_error",
                   "max_residual", "max_insulation"},
                  "study config acceptance");
        c.acceptance.slope_slack = a.value("slope_slack", c.acceptance.slope_slack);
        c.acceptance.residual_slopes = a.value("residual_slopes", c.acceptance.residual_slopes);
        c.acceptance.end_to_end_slopes = a.value("end_to_end_slopes", c.acceptance.end_to_end_slopes);
        c.acceptance.monotone_slack = opt_number(a, "monotone_slack");
        c.acceptance.max_sup_error = opt_number(a, "max_sup_error");
        c.acceptance.max_residual = opt_number(a, "max_residual");
        c.acceptance.max_insulation = opt_number(a, "max_insulation");
    }

    c.initial_data();  // must exist
    if (end_to_end(c.mode) && n != 1) throw InvalidInput("study config: end-to-end mode is one-dimensional only");
    if (residual(c.mode) && c.max_order() < 1) throw InvalidInput("study config: residual mode needs an order >= 1");
    return c;
}

StudyConfig load_study_config(const fs::path& path) {
    return study_config_from_json(read_json(path), path.parent_path());
}

std::string csv_number(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12e", v);
    return buf;
}

RateFit fit_slope(std::span<const double> eps, std::span<const double> error) {
    if (eps.size() != error.size()) throw InvalidInput("fit_slope: eps and error lengths differ");
    if (eps.size() < 3) throw InvalidInput("fit_slope: at least 3 rows are needed, got " + std::to_string(eps.size()));
    std::vector<double> x, y;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0)) throw InvalidInput("fit_slope: eps must be positive");
        if (!std::isfinite(error[i])) throw InvalidInput("fit_slope: non-finite error value");
        if (error[i] < kErrorFloor) continue;
        x.push_back(std::log(eps[i]));
        y.push_back(std::log(error[i]));
    }
    RateFit f;
    f.points = static_cast<int>(x.size());
    if (x.empty()) {
        f.exact = true;
        return f;
    }
    if (x.size() < 2) return f;
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw InvalidInput("fit_slope: eps values must not all coincide");
    f.slope = sxy / sxx;
    if (x.size() >= 3) {
        double sse = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - (my + f.slope * (x[i] - mx));
            sse += r * r;
        }
        const double se = std::sqrt(sse / (n - 2) / sxx);
        const boost::math::students_t dist(n - 2);
        const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
        f.ci_low = f.slope - q * se;
        f.ci_high = f.slope + q * se;
    }
    return f;
}

std::vector<RateFit> fit_rates(std::span<const StudyRow> rows) {
    std::vector<RateFit> out;
    std::map<int, std::vector<const StudyRow*>> by_m;
    for (const auto& r : rows) by_m[r.m].push_back(&r);
    for (const char* q : {"max_residual", "sup_error"}) {
        const bool res = std::string(q) == "max_residual";
        for (const auto& [m, list] : by_m) {
            std::vector<double> e, v;
            for (const StudyRow* r : list) {
                const double val = res ? r->max_residual : r->sup_error;
                if (std::isnan(val)) continue;
                e.push_back(r->eps);
                v.push_back(val);
            }
            if (e.empty()) continue;
            RateFit f = fit_slope(e, v);
            f.quantity = q;
            f.m = m;
            out.push_back(f);
        }
    }
    return out;
}

bool StudyReport::passed() const {
    if (!error.empty()) return false;
    return std::all_of(acceptance.begin(), acceptance.end(), [](const AcceptanceLine& a) { return a.pass; });
}

std::vector<AcceptanceLine> evaluate_acceptance(const StudyConfig& cfg, std::span<const StudyRow> rows,
                                                std::span<const RateFit> fits, double insulation) {
    const AcceptanceRules& a = cfg.acceptance;
    std::vector<AcceptanceLine> out;
    for (const RateFit& f : fits) {
        const bool res = f.quantity == "max_residual";
        if (res ? !a.residual_slopes : !a.end_to_end_slopes) continue;
        if (f.m == 0 && res) continue;
        const double need = f.m - a.slope_slack;
        AcceptanceLine l;
        l.name = f.quantity + "-slope m=" + std::to_string(f.m);
        l.pass = f.exact || f.slope >= need;
        l.detail = f.exact ? "exact (all rows below " + csv_number(kErrorFloor) + ")"
                           : "slope " + fmt_fixed(f.slope, 3) + " >= " + fmt_fixed(need, 3) + " required";
        out.push_back(l);
    }
    if (a.monotone_slack) {
        AcceptanceLine l{"sup_error-monotone-in-m", true, ""};
        for (const StudyRow& r : rows)
            for (const StudyRow& s : rows) {
                if (s.eps != r.eps || s.m <= r.m || std::isnan(r.sup_error) || std::isnan(s.sup_error)) continue;
                if (s.sup_error > (1.0 + *a.monotone_slack) * r.sup_error) {
                    l.pass = false;
                    l.detail = eps_label(r.eps) + ": m=" + std::to_string(s.m) + " error " + csv_number(s.sup_error) +
                               " exceeds m=" + std::to_string(r.m) + " error " + csv_number(r.sup_error);
                }
            }
        out.push_back(l);
    }
    auto bound = [&](const char* name, std::optional<double> limit, auto get) {
        if (!limit) return;
        AcceptanceLine l{name, true, ""};
        double worst = 0.0;
        for (const StudyRow& r : rows) {
            const double v = get(r);
            if (std::isnan(v)) continue;
            worst = std::max(worst, v);
        }
        l.pass = worst <= *limit;
        l.detail = "max " + csv_number(worst) + " <= " + csv_number(*limit) + " required";
        out.push_back(l);
    };
    bound("max-sup-error", a.max_sup_error, [](const StudyRow& r) { return r.sup_error; });
    bound("max-residual", a.max_residual, [](const StudyRow& r) { return r.max_residual; });
    if (a.max_insulation) {
        AcceptanceLine l{"boundary-insulation", insulation <= *a.max_insulation,
                         "change " + csv_number(insulation) + " <= " + csv_number(*a.max_insulation) + " required"};
        out.push_back(l);
    }
    return out;
}

std::vector<double> output_times(const StudyConfig& cfg) {
    std::vector<double> t;
    for (int j = 1; j <= cfg.output_times; ++j) t.push_back(cfg.T * j / cfg.output_times);
    return t;
}

FineGrid1D reference_grid(const StudyConfig& cfg, double max_speed, double eps) {
    if (cfg.spec.dim != 1) throw InvalidInput("reference grid: one-dimensional problems only");
    const double margin =
        boundary_margin(cfg.T, max_speed, eps, cfg.spec.bounds.Lambda, cfg.initial_data().sigma_max());
    return make_fine_grid(cfg.window.lo(0) - margin, cfg.window.hi(0) + margin, eps, cfg.N_per, cfg.scheme);
}

Pipeline build_table(const StudyConfig& cfg, bool e2e) {
    Pipeline p;
    const InitialData& g = cfg.initial_data();
    const int n = cfg.spec.dim;
    if (!cfg.table_path.empty()) {
        p.table = std::make_shared<const EffectiveTable>(load_table(cfg.table_path));
        if (p.table->dim() != n) throw InvalidInput("table file dimension does not match the problem");
    } else {
        Vec lo = cfg.p_lo, hi = cfg.p_hi;
        if (lo.size() == 0) {
            // Pad the gradient range so the Hermite stencils stay inside.
            const auto [glo, ghi] = g.gradient_range();
            lo = glo.array() - 0.1;
            hi = ghi.array() + 0.1;
        }
        p.table = std::make_shared<const EffectiveTable>(effective_table(cfg.spec, TorusGrid(n, cfg.N), lo, hi, cfg.dp));
    }
    p.max_speed = max_drift_speed(g, *p.table);
    p.region = cfg.window;
    if (e2e) {
        for (double eps : cfg.eps) {
            const FineGrid1D fg = reference_grid(cfg, p.max_speed, eps);
            p.region.lo(0) = std::min(p.region.lo(0), fg.x_lo);
            p.region.hi(0) = std::max(p.region.hi(0), fg.x_hi);
        }
    }
    return p;
}

void build_effective(const StudyConfig& cfg, Pipeline& p, int m) {
    p.slow = make_slow_grid(p.region, cfg.T, cfg.slow_hx, cfg.slow_nt, std::max(m, 1), p.max_speed);
    p.effective = std::make_shared<const EffectiveSolution>(cfg.initial_data(), p.table, p.slow.box(), cfg.T);
}

void build_correctors(const StudyConfig& cfg, Pipeline& p, int m) {
    p.hierarchy.emplace(build_hierarchy(p.effective, cfg.spec, TorusGrid(cfg.spec.dim, p.table->data().N), p.slow,
                                        std::max(m, 1)));
}

Json environment_fingerprint() {
    Json e;
#if defined(__VERSION__)
    e["compiler"] = __VERSION__;
#endif
    e["cxx_standard"] = static_cast<long>(__cplusplus);
    e["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    e["boost"] = BOOST_LIB_VERSION;
    e["threads"] = thread_count();
    e["hardware_concurrency"] = std::thread::hardware_concurrency();
    return e;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw Error("write failed: " + path.string());
}

}  // namespace

void emit_report(const StudyReport& r, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());

    std::ostringstream rows;
    rows << "eps,m,sup_error,max_residual,direct_mismatch\n";
    for (const StudyRow& x : r.rows)
        rows << csv_number(x.eps) << ',' << x.m << ',' << csv_number(x.sup_error) << ',' << csv_number(x.max_residual)
             << ',' << csv_number(x.direct_mismatch) << '\n';
    write_text(dir / "rows.csv", rows.str());

    std::ostringstream slopes;
    slopes << "quantity,m,slope,ci_low,ci_high,points,status\n";
    for (const RateFit& f : r.fits)
        slopes << f.quantity << ',' << f.m << ',' << csv_number(f.slope) << ',' << csv_number(f.ci_low) << ','
               << csv_number(f.ci_high) << ',' << f.points << ','
               << (f.exact ? "exact" : std::isnan(f.slope) ? "insufficient" : "fit") << '\n';
    write_text(dir / "slopes.csv", slopes.str());

    std::ostringstream ll;
    ll << "log2_inv_eps,m,log10_sup_error,log10_max_residual\n";
    for (const StudyRow& x : r.rows) {
        auto lg = [](double v) { return v > 0.0 ? csv_number(std::log10(v)) : std::string(); };
        ll << csv_number(-std::log2(x.eps)) << ',' << x.m << ',' << lg(x.sup_error) << ',' << lg(x.max_residual)
           << '\n';
    }
    write_text(dir / "loglog.csv", ll.str());

    std::ostringstream acc;
    acc << "check,status,detail\n";
    for (const AcceptanceLine& a : r.acceptance)
        acc << a.name << ',' << (a.pass ? "pass" : "fail") << ",\"" << a.detail << "\"\n";
    write_text(dir / "acceptance.csv", acc.str());

    Json echo;
    echo["config"] = r.config.source;
    echo["resolved"] = r.resolved;
    if (!r.error.empty()) echo["error"] = {{"stage", r.failed_stage}, {"message", r.error}};
    write_text(dir / "config-echo.json", echo.dump(2) + "\n");

    std::ostringstream st;
    for (const auto& s : r.stages) st << s << '\n';
    write_text(dir / "stages.log", st.str());

    std::ostringstream tm;
    tm << "stage,seconds\n";
    for (const auto& [s, sec] : r.timings) tm << s << ',' << fmt_fixed(sec, 3) << '\n';
    write_text(dir / "timings.csv", tm.str());

    write_text(dir / "environment.json", r.environment.dump(2) + "\n");
}

StudyReport run_study(const StudyConfig& cfg, const fs::path& out, const ProgressSink& progress) {
    StudyReport rep;
    rep.config = cfg;
    rep.environment = environment_fingerprint();
    std::string stage;
    Stopwatch clock;
    auto begin = [&](std::string s) {
        stage = std::move(s);
        rep.stages.push_back(stage);
        clock = Stopwatch();
        if (progress) progress(stage);
    };
    auto end = [&] { rep.timings.emplace_back(stage, clock.seconds()); };

    try {
        const InitialData& g = cfg.initial_data();
        const bool e2e = end_to_end(cfg.mode);

        begin("validate");
        const ValidationReport vp = validate_problem(cfg.spec, cfg.validation_samples, cfg.seed);
        if (!vp.passed()) {
            std::string what = "structure conditions failed:";
            for (const auto& c : vp.checks)
                if (!c.pass) what += " " + c.name + " (" + c.violation + ")";
            throw InvalidInput(what);
        }
        end();

        begin("effective_table");
        Pipeline p = build_table(cfg, e2e);
        rep.resolved["table"] = {{"lo", vec_json(p.table->lo())},
                                 {"hi", vec_json(p.table->hi())},
                                 {"dp", p.table->dp()},
                                 {"N", p.table->data().N}};
        rep.resolved["max_speed"] = p.max_speed;
        end();

        begin("validate_initial_data");
        InitialDataCheckOptions io;
        io.L = cfg.spec.bounds.L;
        io.k_max = cfg.spec.k_max;
        io.seed = cfg.seed;
        const ValidationReport vg =
            validate_initial_data(g, *p.table, p.region.lo, p.region.hi, cfg.validation_samples, io);
        if (!vg.passed()) {
            std::string what = "initial data inadmissible:";
            for (const auto& c : vg.checks)
                if (!c.pass) what += " " + c.name + " (" + c.violation + ")";
            throw AdmissibilityError(what);
        }
        end();

        const int m = std::max(cfg.max_order(), 1);
        begin("solve_effective");
        build_effective(cfg, p, m);
        rep.resolved["slow_grid"] = {{"lo", vec_json(p.slow.lo)},
                                     {"hx", p.slow.hx},
                                     {"counts", {p.slow.counts[0], p.slow.counts[1]}},
                                     {"nt", p.slow.nt}};
        end();

        begin("build_hierarchy m=" + std::to_string(m));
        build_correctors(cfg, p, m);
        const CorrectorHierarchy& h = *p.hierarchy;
        end();

        std::map<std::pair<double, int>, StudyRow> rows;
        for (double eps : cfg.eps)
            for (int o : cfg.orders) rows[{eps, o}] = StudyRow{eps, o};

        if (residual(cfg.mode)) {
            for (int o : cfg.orders) {
                if (o < 1) continue;
                begin("residual m=" + std::to_string(o));
                const auto res = residual_field(h, cfg.eps, cfg.window, o);
                for (const auto& r : res) {
                    rows[{r.eps, o}].max_residual = r.max_psi;
                    rows[{r.eps, o}].direct_mismatch = r.direct_mismatch;
                }
                end();
            }
        }
        if (e2e) {
            const std::vector<double> times = output_times(cfg);
            Json domains = Json::array();
            for (double eps : cfg.eps) {
                const FineGrid1D fg = reference_grid(cfg, p.max_speed, eps);
                domains.push_back({{"eps", eps}, {"x_lo", fg.x_lo}, {"x_hi", fg.x_hi}, {"points", fg.points()}});
                if (cfg.profile == InitialProfile::raw) {
                    begin("reference " + eps_label(eps) + " profile=raw");
                    const ReferenceSolution ref = solve_reference(cfg.spec, g, fg, times);
                    end();
                    begin("compare " + eps_label(eps));
                    for (int o : cfg.orders) rows[{eps, o}].sup_error = compare(ref, h, cfg.window, o).sup_error;
                    end();
                } else {
                    for (int o : cfg.orders) {
                        begin("reference " + eps_label(eps) + " profile=prepared m=" + std::to_string(o));
                        const ReferenceSolution ref =
                            solve_reference(cfg.spec, g, fg, times, prepared_profile(h, fg, o));
                        end();
                        begin("compare " + eps_label(eps) + " m=" + std::to_string(o));
                        rows[{eps, o}].sup_error = compare(ref, h, cfg.window, o).sup_error;
                        end();
                    }
                }
            }
            rep.resolved["reference_domains"] = domains;

            if (cfg.insulation_check) {
                const double eps = cfg.eps.front();
                begin("insulation " + eps_label(eps));
                const FineGrid1D a = reference_grid(cfg, p.max_speed, eps);
                const double w = a.x_hi - a.x_lo;
                const FineGrid1D b = make_fine_grid(a.x_lo - 0.5 * w, a.x_hi + 0.5 * w, eps, cfg.N_per, cfg.scheme);
                const ReferenceSolution ra = solve_reference(cfg.spec, g, a, times);
                const ReferenceSolution rb = solve_reference(cfg.spec, g, b, times);
                const long shift = std::lround((a.x_lo - b.x_lo) / a.dx());
                double diff = 0.0;
                for (std::size_t k = 0; k < ra.times.size(); ++k)
                    for (int i = 0; i < a.points(); ++i) {
                        const double x = a.x(i);
                        if (x < cfg.window.lo(0) - 1e-12 || x > cfg.window.hi(0) + 1e-12) continue;
                        diff = std::max(diff, std::abs(ra.u[k][i] - rb.u[k][i + shift]));
                    }
                rep.insulation = diff;
                rep.resolved["insulation"] = diff;
                end();
            }
        }
        for (auto& [key, row] : rows) rep.rows.push_back(row);
        // Descending eps, ascending m.
        std::stable_sort(rep.rows.begin(), rep.rows.end(), [](const StudyRow& a, const StudyRow& b) {
            return a.eps != b.eps ? a.eps > b.eps : a.m < b.m;
        });

        begin("fit_rates");
        rep.fits = fit_rates(rep.rows);
        end();
        begin("acceptance");
        rep.acceptance = evaluate_acceptance(cfg, rep.rows, rep.fits, rep.insulation);
        end();
    } catch (const std::exception& e) {
        rep.failed_stage = stage;
        rep.error = e.what();
        if (!out.empty()) emit_report(rep, out);
        throw StudyError(stage, e.what());
    }
    if (!out.empty()) emit_report(rep, out);
    return rep;
}

}  // namespace hjh
