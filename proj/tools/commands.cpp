/*
   Copyright 2026 The pstrat Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "pstrat/calibration.hpp"
#include "pstrat/datagen.hpp"
#include "pstrat/params.hpp"
#include "pstrat/quadrature.hpp"
#include "pstrat/strata.hpp"

#ifndef PSTRAT_VERSION
#define PSTRAT_VERSION "0.0.0"
#endif
#ifndef PSTRAT_SCENARIO_DIR
#define PSTRAT_SCENARIO_DIR "scenarios"
#endif

namespace fs = std::filesystem;

namespace pstrat::cli {
namespace {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string fixed4(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string utc_timestamp()
{
    auto const now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Tracks the files a command writes; the manifest goes last.
class RunOutputs {
public:
    RunOutputs(std::string dir, std::string command, std::string label, std::uint64_t seed)
        : dir_(std::move(dir)),
          command_(std::move(command)),
          label_(std::move(label)),
          seed_(seed),
          start_(std::chrono::steady_clock::now())
    {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_))
            throw IoError("cannot create output directory " + dir_);
    }

    void write(std::string const& name, std::string const& body)
    {
        auto const path = (fs::path(dir_) / name).string();
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os << body;
        os.close();
        if (!os) throw IoError("cannot write " + path);
        files_.push_back(path);
    }

    void finish()
    {
        double const seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        nlohmann::json manifest{{"scenario_label", label_},
                                {"command", command_},
                                {"timestamp", utc_timestamp()},
                                {"seed", seed_},
                                {"version", PSTRAT_VERSION},
                                {"outputs", files_},
                                {"wall_clock_seconds", seconds}};
        auto const path = (fs::path(dir_) / "manifest.json").string();
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os << manifest.dump(2) << '\n';
        os.close();
        if (!os) throw IoError("cannot write " + path);
    }

private:
    std::string dir_;
    std::string command_;
    std::string label_;
    std::uint64_t seed_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> files_;
};

ScenarioConfig load_with_overrides(std::string const& file, GlobalOptions const& global,
                                   std::optional<std::int64_t> n)
{
    auto config = load_scenario(file);
    if (global.seed) config.seed = *global.seed;
    if (n) config.n = *n;
    check_invariants(config);
    return config;
}

/// Maps exceptions onto the exit-code contract.
template <class Body>
int guarded(Streams io, Body&& body)
{
    try {
        return body();
    } catch (ConfigError const& e) {
        io.err << "configuration error";
        if (!e.key().empty()) io.err << " [" << e.key() << "]";
        io.err << ": " << e.what() << '\n';
        return kConfigError;
    } catch (QuadraturePreconditionError const& e) {
        io.err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (std::invalid_argument const& e) {
        io.err << "configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (std::exception const& e) {
        io.err << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

/// Uncertainty of the split reference as an estimate of the population
/// null value: split-to-split noise plus the sampling noise of the control
/// arm, approximated by one split's spread over sqrt(2) because each
/// pseudo-arm holds half the control subjects.
double reference_se(SplitCalibration const& c)
{
    double const r = static_cast<double>(c.offsets.size());
    return c.sd_offset * std::sqrt(1.0 / r + 0.5);
}

struct CalibrationOutcome {
    SplitCalibration calibration;
    std::optional<double> truth;  // closed-form value when Y is null
};

CalibrationOutcome run_calibration(ScenarioConfig const& config, std::string const& estimator,
                                   int R, bool keep_y, int threads)
{
    auto const records = generate(config, threads);
    auto const observed = observe(records, keep_y);
    auto const control = control_arm(observed);
    CalibrationOutcome out;
    out.calibration = split_calibrate(control, find_estimator(estimator), R, config.seed, threads);
    if (is_y_null(config.params)) out.truth = mu_star_plus(config.params);
    return out;
}

}  // namespace

std::string default_scenario_dir() { return PSTRAT_SCENARIO_DIR; }

int cmd_simulate(SimulateOptions const& opt, GlobalOptions const& global, Streams io)
{
    return guarded(io, [&] {
        auto const config = load_with_overrides(opt.scenario_file, global, opt.n);
        RunOutputs outputs(global.out, "simulate", config.label, config.seed);
        auto const records = generate(config, global.threads);
        auto const observed = observe(records, opt.keep_y);
        std::ostringstream subjects;
        write_subjects_csv(subjects, records, config.params.K);
        outputs.write("subjects.csv", subjects.str());
        std::ostringstream obs;
        write_observed_csv(obs, observed, config.params.K);
        outputs.write("observed.csv", obs.str());
        outputs.finish();

        std::int64_t adherent[2] = {0, 0};
        for (auto const& r : records) {
            adherent[0] += r.a[0];
            adherent[1] += r.a[1];
        }
        io.out << "simulated " << records.size() << " subjects (" << config.label << ")\n"
               << "  adherence rate A(0)=1: "
               << fixed4(static_cast<double>(adherent[0]) / static_cast<double>(records.size()))
               << "  A(1)=1: "
               << fixed4(static_cast<double>(adherent[1]) / static_cast<double>(records.size()))
               << '\n'
               << "  wrote subjects.csv, observed.csv, manifest.json to " << global.out << '\n';
        return kOk;
    });
}

int cmd_true_effect(TrueEffectOptions const& opt, GlobalOptions const& global, Streams io)
{
    return guarded(io, [&] {
        auto const config = load_with_overrides(opt.scenario_file, global, opt.n);
        bool const want_quad = opt.method != EffectMethod::MonteCarlo;
        bool const want_mc = opt.method != EffectMethod::Quadrature;
        if (want_quad && !is_y_null(config.params)) {
            io.err << "error: the closed-form (quadrature) stratum effect needs a scenario with "
                      "no treatment effect on Y or Z (alpha2 = 0, beta2 = 0); rerun with "
                      "--method mc\n";
            return kConfigError;
        }
        RunOutputs outputs(global.out, "true-effect", config.label, config.seed);
        std::ostringstream csv;
        write_effects_header(csv);

        std::optional<double> quad;
        if (want_quad) {
            QuadratureSpec spec;
            spec.nodes_x = opt.nodes;
            spec.nodes_xi = opt.nodes;
            quad = mu_star_plus(config.params, spec);
            // Closed-form row: no sample, so n_members and se are 0.
            write_effects_row(csv, config.label, kStarPlus.name(), 0, *quad, 0.0);
        }

        io.out << "scenario " << config.label << '\n';
        if (quad) io.out << "  mu(S_star_plus)  quadrature  " << fixed4(*quad) << '\n';

        std::optional<EffectEstimate> first_star;
        if (want_mc) {
            StratumLabel const labels[] = {kPlusPlus, kStarPlus};
            for (int r = 0; r < config.replicate_count; ++r) {
                auto const effects =
                    streamed_oracle_effects(config.params, config.n,
                                            replicate_seed(config.seed, r), labels, global.threads);
                for (auto const& e : effects) write_effects_row(csv, config.label, e);
                if (r == 0) {
                    first_star = effects[1];
                    io.out << "  mu(S_plus_plus)  monte carlo " << fixed4(effects[0].value)
                           << " (se " << fixed4(effects[0].se) << ", n=" << effects[0].n_members
                           << ")\n"
                           << "  mu(S_star_plus)  monte carlo " << fixed4(effects[1].value)
                           << " (se " << fixed4(effects[1].se) << ", n=" << effects[1].n_members
                           << ")\n";
                }
            }
            if (config.replicate_count > 1)
                io.out << "  " << config.replicate_count << " replicates written to effects.csv\n";
        }
        if (quad && first_star) {
            bool const agree = std::abs(*quad - first_star->value) <= 3.5 * first_star->se;
            io.out << "  agreement (|quadrature - mc| <= 3.5 se): " << (agree ? "AGREE" : "DISAGREE")
                   << '\n';
        }
        outputs.write("effects.csv", csv.str());
        outputs.finish();
        return kOk;
    });
}

int cmd_calibrate(CalibrateOptions const& opt, GlobalOptions const& global, Streams io)
{
    return guarded(io, [&] {
        auto const config = load_with_overrides(opt.scenario_file, global, opt.n);
        auto const estimator = find_estimator(opt.estimator);
        if (opt.R < 2) throw std::invalid_argument("--R must be >= 2");
        RunOutputs outputs(global.out, "calibrate", config.label, config.seed);
        CalibrationOutcome result;
        try {
            result = run_calibration(config, estimator.name, opt.R, opt.keep_y, global.threads);
        } catch (std::invalid_argument const& e) {
            throw std::runtime_error(e.what());
        }
        auto const& c = result.calibration;
        std::ostringstream csv;
        write_calibration_header(csv);
        write_calibration_row(csv, config.label, c);
        outputs.write("calibration.csv", csv.str());
        outputs.finish();

        io.out << "scenario " << config.label << ", estimator " << c.estimator << ", R=" << c.R
               << " (" << c.n_failed << " failed)\n"
               << "  split-calibrated null reference: " << fixed4(c.mean_offset) << " +/- "
               << fixed4(c.se_offset) << '\n';
        if (result.truth) {
            double const se = reference_se(c);
            bool const match = std::abs(c.mean_offset - *result.truth) <= 5.0 * se;
            io.out << "  true mu(S_star_plus) (quadrature): " << fixed4(*result.truth) << '\n'
                   << "  verdict at 5 se (se " << fixed4(se) << "): "
                   << (match ? "MATCH" : "MISMATCH") << '\n';
        }
        return kOk;
    });
}

namespace {

struct Claim {
    std::string name;
    std::string detail;
    bool pass = false;
};

ScenarioConfig demo_scenario(std::string const& dir, std::string const& name,
                             GlobalOptions const& global)
{
    return load_with_overrides((fs::path(dir) / (name + ".json")).string(), global, std::nullopt);
}

}  // namespace

int cmd_paper_demo(PaperDemoOptions const& opt, GlobalOptions const& global, Streams io)
{
    return guarded(io, [&] {
        std::string const dir = opt.scenario_dir.empty() ? default_scenario_dir() : opt.scenario_dir;
        auto const full = demo_scenario(dir, "full_null_default", global);
        auto const zero_g3 = demo_scenario(dir, "zero_gamma3", global);
        auto const zero_b3 = demo_scenario(dir, "zero_beta3", global);
        auto const calib = demo_scenario(dir, "calibration_full_null", global);
        auto const partial = demo_scenario(dir, "partial_null", global);

        RunOutputs outputs(global.out, "paper-demo", full.label, full.seed);
        std::ostringstream effects;
        write_effects_header(effects);
        std::ostringstream calibration;
        write_calibration_header(calibration);
        std::vector<Claim> claims;
        StratumLabel const labels[] = {kPlusPlus, kStarPlus};

        // Full null: S_plus_plus is zero, S_star_plus is not.
        double const mu_full = mu_star_plus(full.params);
        write_effects_row(effects, full.label, kStarPlus.name(), 0, mu_full, 0.0);
        auto const full_mc =
            streamed_oracle_effects(full.params, full.n, full.seed, labels, global.threads);
        for (auto const& e : full_mc) write_effects_row(effects, full.label, e);
        auto const& pp = full_mc[0];
        auto const& sp = full_mc[1];
        claims.push_back({"S_plus_plus effect is zero under the full null",
                          "mc " + fixed4(pp.value) + " (se " + fixed4(pp.se) + ")",
                          std::abs(pp.value) <= 3.5 * pp.se});
        claims.push_back(
            {"S_star_plus effect is nonzero under the full null",
             "quadrature " + fixed4(mu_full) + ", mc " + fixed4(sp.value) + " (se " + fixed4(sp.se)
                 + ")",
             mu_full > 0.0 && std::abs(mu_full - sp.value) <= 3.5 * sp.se
                 && sp.value > 3.5 * sp.se});

        // The two zero regimes of the sufficient condition.
        std::pair<ScenarioConfig const*, std::string> const zero_regimes[] = {
            {&zero_g3, "gamma3"}, {&zero_b3, "beta3"}};
        for (auto const& [zero, symbol] : zero_regimes) {
            double const q = mu_star_plus(zero->params);
            write_effects_row(effects, zero->label, kStarPlus.name(), 0, q, 0.0);
            auto const mc =
                streamed_oracle_effects(zero->params, zero->n, zero->seed, labels, global.threads);
            for (auto const& e : mc) write_effects_row(effects, zero->label, e);
            claims.push_back({"S_star_plus effect is zero when " + symbol + " = 0",
                              "quadrature " + csv::real(q) + ", mc " + fixed4(mc[1].value)
                                  + " (se " + fixed4(mc[1].se) + ")",
                              std::abs(q) <= 1e-12 && std::abs(mc[1].value) <= 3.5 * mc[1].se});
        }

        // Selection bias acts on Y(1) only.
        {
            auto const records = generate(calib.params, calib.n, calib.seed, global.threads);
            auto const bias = bias_decomposition(records);
            claims.push_back({"conditioning on A(1)=1 shifts Y(1) more than Y(0)",
                              "shift Y(1) " + fixed4(bias.shift_arm1) + ", shift Y(0) "
                                  + fixed4(bias.shift_arm0) + " (se of difference "
                                  + fixed4(bias.se_shift_difference) + ")",
                              bias.shift_arm1 - bias.shift_arm0 > 3.5 * bias.se_shift_difference});
        }

        // Random-split calibration: recovers the null value under the full
        // null, misses it under the partial null.
        auto calib_full = run_calibration(calib, "plugin", 200, true, global.threads);
        write_calibration_row(calibration, calib.label, calib_full.calibration);
        {
            auto const& c = calib_full.calibration;
            double const se = reference_se(c);
            claims.push_back({"split calibration matches the true null value under the full null",
                              "reference " + fixed4(c.mean_offset) + ", truth "
                                  + fixed4(*calib_full.truth) + " (se " + fixed4(se) + ")",
                              std::abs(c.mean_offset - *calib_full.truth) <= 5.0 * se});
        }
        auto calib_partial = run_calibration(partial, "plugin", 200, true, global.threads);
        write_calibration_row(calibration, partial.label, calib_partial.calibration);
        {
            auto const& c = calib_partial.calibration;
            double const truth = *calib_partial.truth;
            write_effects_row(effects, partial.label, kStarPlus.name(), 0, truth, 0.0);
            claims.push_back({"split calibration misses the true value under the partial null",
                              "reference " + fixed4(c.mean_offset) + ", truth " + fixed4(truth)
                                  + " (se_offset " + fixed4(c.se_offset) + ", reference se "
                                  + fixed4(reference_se(c)) + ")",
                              std::abs(c.mean_offset - truth) > 5.0 * c.se_offset
                                  && std::abs(c.mean_offset - truth) > 5.0 * reference_se(c)});
        }

        bool all_pass = true;
        std::ostringstream report;
        report << "# Principal stratum effects under a null treatment\n\n"
               << "| # | claim | evidence | result |\n|---|---|---|---|\n";
        for (std::size_t i = 0; i < claims.size(); ++i) {
            auto const& c = claims[i];
            all_pass = all_pass && c.pass;
            report << "| " << i + 1 << " | " << c.name << " | " << c.detail << " | "
                   << (c.pass ? "PASS" : "FAIL") << " |\n";
            io.out << (c.pass ? "PASS  " : "FAIL  ") << c.name << "  [" << c.detail << "]\n";
        }
        outputs.write("effects.csv", effects.str());
        outputs.write("calibration.csv", calibration.str());
        outputs.write("report.md", report.str());
        outputs.finish();
        io.out << (all_pass ? "all claims PASS" : "some claims FAIL") << "; report at "
               << (fs::path(global.out) / "report.md").string() << '\n';
        return all_pass ? kOk : kRuntimeError;
    });
}

int run(int argc, char const* const* argv, Streams io)
{
    CLI::App app{"Principal stratum effects under null treatments: simulation and oracles",
                 "pstrat"};
    app.require_subcommand(1);
    GlobalOptions global;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Override the scenario seed");
    app.add_option("--threads", global.threads, "Worker threads (0 = all cores)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--out", global.out, "Output directory");

    SimulateOptions sim;
    std::int64_t sim_n = 0;
    auto* simulate = app.add_subcommand("simulate", "Generate subjects.csv and observed.csv");
    simulate->add_option("scenario", sim.scenario_file, "Scenario JSON file")->required();
    auto* sim_n_opt = simulate->add_option("--n", sim_n, "Override the number of subjects");
    simulate->add_flag("--keep-y", sim.keep_y, "Keep Y observed after dropout");

    TrueEffectOptions te;
    std::int64_t te_n = 0;
    std::string method = "both";
    auto* true_effect =
        app.add_subcommand("true-effect", "Oracle stratum effects by quadrature and Monte Carlo");
    true_effect->add_option("scenario", te.scenario_file, "Scenario JSON file")->required();
    true_effect->add_option("--method", method, "quadrature, mc or both")
        ->check(CLI::IsMember({"quadrature", "mc", "both"}));
    auto* te_n_opt = true_effect->add_option("--n", te_n, "Monte Carlo sample size");
    true_effect->add_option("--nodes", te.nodes, "Gauss-Hermite nodes per dimension")
        ->check(CLI::Range(2, 200));

    CalibrateOptions cal;
    std::int64_t cal_n = 0;
    bool drop_y = false;
    auto* calibrate = app.add_subcommand("calibrate", "Random-split null calibration");
    calibrate->add_option("scenario", cal.scenario_file, "Scenario JSON file")->required();
    calibrate->add_option("--estimator", cal.estimator, "naive or plugin")
        ->check(CLI::IsMember(estimator_names()));
    calibrate->add_option("--R", cal.R, "Number of random splits");
    auto* cal_n_opt = calibrate->add_option("--n", cal_n, "Override the number of subjects");
    calibrate->add_flag("--drop-y", drop_y, "Treat Y as missing after dropout");

    PaperDemoOptions demo;
    auto* paper_demo =
        app.add_subcommand("paper-demo", "Run the bundled scenario suite and write report.md");
    paper_demo->add_option("--scenarios", demo.scenario_dir, "Bundled scenario directory");

    // CLI11 wants a mutable argv.
    std::vector<std::string> args(argv, argv + argc);
    std::vector<char*> ptrs;
    for (auto& a : args) ptrs.push_back(a.data());
    try {
        app.parse(static_cast<int>(ptrs.size()), ptrs.data());
    } catch (CLI::CallForHelp const&) {
        io.out << app.help();
        return kOk;
    } catch (CLI::ParseError const& e) {
        io.err << e.what() << '\n';
        return kConfigError;
    }
    if (*seed_opt) global.seed = seed;

    if (*simulate) {
        if (*sim_n_opt) sim.n = sim_n;
        return cmd_simulate(sim, global, io);
    }
    if (*true_effect) {
        if (*te_n_opt) te.n = te_n;
        te.method = method == "quadrature" ? EffectMethod::Quadrature
                    : method == "mc"       ? EffectMethod::MonteCarlo
                                           : EffectMethod::Both;
        return cmd_true_effect(te, global, io);
    }
    if (*calibrate) {
        if (*cal_n_opt) cal.n = cal_n;
        cal.keep_y = !drop_y;
        return cmd_calibrate(cal, global, io);
    }
    return cmd_paper_demo(demo, global, io);
}

}  // namespace pstrat::cli
