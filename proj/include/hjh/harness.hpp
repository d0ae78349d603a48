#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hjh/correctors.hpp"
#include "hjh/effective.hpp"
#include "hjh/errors.hpp"
#include "hjh/io.hpp"
#include "hjh/reference.hpp"

namespace hjh {

enum class StudyMode { residual, end_to_end, both };
/// Initial profile of the eps-problem in end-to-end runs: g itself, or the
/// order-m expansion at t = 0.
enum class InitialProfile { raw, prepared };

struct AcceptanceRules {
    double slope_slack = 0.3;                 // fitted slope >= m - slack
    bool residual_slopes = true;
    bool end_to_end_slopes = true;
    std::optional<double> monotone_slack;     // error(m+1) <= (1 + slack) error(m)
    std::optional<double> max_sup_error;
    std::optional<double> max_residual;
    std::optional<double> max_insulation;     // boundary insulation check
};

struct StudyConfig {
    std::string name = "study";
    ProblemSpec spec;
    std::optional<InitialData> g;        // falls back to spec.g
    std::filesystem::path table_path;    // optional precomputed table
    std::vector<int> orders{1};
    std::vector<double> eps;             // sorted descending
    int N = 64;
    int N_per = 128;
    double slow_hx = 1.0 / 32;
    int slow_nt = 17;
    Vec p_lo, p_hi;                      // empty: derived from the range of Dg
    double dp = 0.01;
    Box window;
    double T = 0.25;
    StudyMode mode = StudyMode::residual;
    InitialProfile profile = InitialProfile::raw;
    Scheme scheme = Scheme::imex;
    int output_times = 4;
    std::uint64_t seed = 1;
    std::size_t validation_samples = 256;
    bool insulation_check = false;
    AcceptanceRules acceptance;
    std::filesystem::path out;            // default output directory
    Json source;                          // the parsed document, echoed verbatim

    int max_order() const;
    const InitialData& initial_data() const;
};

/// Parses a study document. Relative paths resolve against `base`.
StudyConfig study_config_from_json(const Json& doc, const std::filesystem::path& base = {});
StudyConfig load_study_config(const std::filesystem::path& path);

std::string to_string(StudyMode m);
std::string to_string(InitialProfile p);

struct StudyRow {
    double eps = 0.0;
    int m = 0;
    double sup_error = std::nan("");      // NaN when the end-to-end pathway did not run
    double max_residual = std::nan("");   // NaN when the residual pathway did not run
    double direct_mismatch = std::nan("");
};

struct RateFit {
    std::string quantity;   // "sup_error" or "max_residual"
    int m = 0;
    double slope = std::nan("");
    double ci_low = std::nan("");
    double ci_high = std::nan("");
    int points = 0;         // rows above the floor
    bool exact = false;     // every row below the floor
};

inline constexpr double kErrorFloor = 1e-9;

/// Least-squares slope of log(error) against log(eps) with a 95% Student-t
/// interval. Rows below kErrorFloor are dropped; when fewer than two remain
/// the fit is reported as exact. Throws InvalidInput for fewer than 3 rows.
RateFit fit_slope(std::span<const double> eps, std::span<const double> error);
/// One fit per (quantity, m) present in the rows.
std::vector<RateFit> fit_rates(std::span<const StudyRow> rows);

struct AcceptanceLine {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct StudyReport {
    StudyConfig config;
    std::vector<StudyRow> rows;
    std::vector<RateFit> fits;
    std::vector<std::string> stages;                       // in execution order
    std::vector<std::pair<std::string, double>> timings;   // stage, seconds
    std::vector<AcceptanceLine> acceptance;
    double insulation = std::nan("");
    Json environment;
    Json resolved;                                         // derived grids and domains
    std::string failed_stage;
    std::string error;

    bool passed() const;
};

/// Aborts with the failing stage name; the partial report is still emitted.
class StudyError : public Error {
public:
    StudyError(std::string stage, const std::string& what) : Error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

using ProgressSink = std::function<void(const std::string&)>;

/// validate -> effective_table -> solve_effective -> build_hierarchy(max m)
/// -> per eps: residual_field and, in end-to-end mode, solve_reference and
/// compare. When `out` is non-empty the report is written there, also on
/// failure.
StudyReport run_study(const StudyConfig& cfg, const std::filesystem::path& out = {}, const ProgressSink& progress = {});

/// Evaluates the acceptance rules of the config against rows and fits.
std::vector<AcceptanceLine> evaluate_acceptance(const StudyConfig& cfg, std::span<const StudyRow> rows,
                                                std::span<const RateFit> fits, double insulation);

/// Writes rows.csv, slopes.csv, loglog.csv, acceptance.csv, config-echo.json,
/// stages.log, timings.csv and environment.json. Only timings.csv and
/// environment.json depend on the machine.
void emit_report(const StudyReport& report, const std::filesystem::path& dir);

/// Fixed-format number for CSV output; NaN becomes an empty cell.
std::string csv_number(double v);

/// Pieces of the pipeline, exposed for the CLI subcommands.
struct Pipeline {
    std::shared_ptr<const EffectiveTable> table;
    double max_speed = 0.0;   // max |Bbar| over the range of Dg
    Box region;               // window, or the union of the eps-problem domains
    SlowGrid slow;
    std::shared_ptr<const EffectiveSolution> effective;
    std::optional<CorrectorHierarchy> hierarchy;
};

/// Loads or computes the table and fixes max_speed and region.
Pipeline build_table(const StudyConfig& cfg, bool end_to_end);
/// Slow grid for order m over the region, and the effective solution on it.
void build_effective(const StudyConfig& cfg, Pipeline& p, int m);
void build_correctors(const StudyConfig& cfg, Pipeline& p, int m);
FineGrid1D reference_grid(const StudyConfig& cfg, double max_speed, double eps);
std::vector<double> output_times(const StudyConfig& cfg);

Json environment_fingerprint();

}  // namespace hjh
