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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pstrat/csv.hpp"
#include "pstrat/datagen.hpp"
#include "pstrat/fit.hpp"
#include "pstrat/numeric.hpp"
#include "pstrat/philox.hpp"
#include "pstrat/strata.hpp"

namespace pstrat {

class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Naive adherers-vs-adherers comparison
// ---------------------------------------------------------------------------

/// mean(Y | T=1, A=1) - mean(Y | T=0, A=1) over the rows subset, with the
/// two-sample SE.
inline EffectEstimate estimate_naive(std::span<ObservedRecord const> observed,
                                     std::span<std::size_t const> rows)
{
    std::vector<double> y[2];
    for (std::size_t i : rows) {
        auto const& r = observed[i];
        if (r.a_obs != 1) continue;
        if (!r.y_obs) throw EstimationError("adherer without an observed outcome");
        y[r.t_assigned].push_back(*r.y_obs);
    }
    if (y[0].empty() || y[1].empty()) throw EstimationError("no adherers in one arm");
    auto const m1 = mean_sd(y[1]);
    auto const m0 = mean_sd(y[0]);
    double const se = std::sqrt(m1.sd * m1.sd / static_cast<double>(m1.n)
                                + m0.sd * m0.sd / static_cast<double>(m0.n));
    return {m1.mean - m0.mean, se, static_cast<std::int64_t>(m1.n + m0.n), kStarPlus};
}

inline EffectEstimate estimate_naive(std::span<ObservedRecord const> observed)
{
    auto const rows = all_rows(observed.size());
    return estimate_naive(observed, rows);
}

// ---------------------------------------------------------------------------
// Plug-in estimator of E[Y(1) - Y(0) | A(1) = 1]
// ---------------------------------------------------------------------------

struct PluginOptions {
    int bootstrap = 200;      // resamples for the SE; 0 skips the bootstrap
    int latent_paths = 200;   // simulated z-paths per evaluation point
    int grid_points = 257;    // evaluation points of the adherence curve over the X range
    bool one_shot_logistic = false;  // fit logit P(A=1 | X) directly instead
    std::uint64_t seed = 0;
    int threads = 0;
};

/// Marginal probability of adherence under arm 1 as a function of X,
/// tabulated on an even grid and linearly interpolated.
class AdherenceCurve {
public:
    AdherenceCurve(double lo, double hi, std::vector<double> values)
        : lo_(lo), hi_(hi), values_(std::move(values))
    {
    }

    double operator()(double x) const
    {
        if (values_.size() == 1 || hi_ <= lo_) return values_.front();
        double const pos = (std::clamp(x, lo_, hi_) - lo_) / (hi_ - lo_)
                           * static_cast<double>(values_.size() - 1);
        auto const i = std::min(static_cast<std::size_t>(pos), values_.size() - 2);
        double const frac = pos - static_cast<double>(i);
        return values_[i] + frac * (values_[i + 1] - values_[i]);
    }

private:
    double lo_;
    double hi_;
    std::vector<double> values_;
};

struct PluginTerms {
    double treated_adherer_mean = 0.0;  // mean(Y | T=1, A=1)
    double control_reference = 0.0;     // sum pi(x) m0(x) / sum pi(x) over all subjects
    double value() const { return treated_adherer_mean - control_reference; }
};

namespace detail {

inline constexpr std::uint64_t kLatentPathStream = 0x6c6174656e745aULL;

inline AdherenceCurve sequential_adherence_curve(std::span<ObservedRecord const> observed,
                                                 std::span<std::size_t const> rows, double lo,
                                                 double hi, PluginOptions const& opt)
{
    auto const fit = fit_sequential_logistic(observed, rows, 1);
    int const K = static_cast<int>(fit.visits.size());

    // z_k | x among the arm-1 subjects seen at visit k. Earlier selection
    // acts on earlier visits' noise only, so this regression is unbiased.
    std::vector<LinearResult<2>> z_model;
    for (int k = 0; k < K; ++k) {
        Design<2> d;
        for (std::size_t i : rows) {
            auto const& r = observed[i];
            if (r.t_assigned == 1 && r.z_obs[static_cast<std::size_t>(k)])
                d.add({1.0, r.x}, *r.z_obs[static_cast<std::size_t>(k)]);
        }
        z_model.push_back(fit_linear(d));
    }

    // The fitted visit models make z_1..z_K independent given x, so the
    // marginal adherence probability is a product of per-visit averages over
    // the latent draws. Draws are stratified normal quantiles (one per
    // stratum, jittered) shared by every grid point.
    Substream const noise(opt.seed, kLatentPathStream);
    auto const M = static_cast<std::size_t>(std::max(opt.latent_paths, 1));
    std::vector<double> e(M * static_cast<std::size_t>(K));
    for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
        for (std::size_t m = 0; m < M; ++m) {
            double const u = (static_cast<double>(m) + noise.uniform(k * M + m)) / static_cast<double>(M);
            e[k * M + m] = standard_normal_quantile(u);
        }
    }

    auto const G = static_cast<std::size_t>(std::max(opt.grid_points, 2));
    std::vector<double> values(G);
    for (std::size_t g = 0; g < G; ++g) {
        double const x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(G - 1);
        double prob = 1.0;
        for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
            auto const& v = fit.visits[k];
            auto const& zm = z_model[k];
            double const centre = v.g0 + v.g1 * x + v.g3 * (zm.coef[0] + zm.coef[1] * x);
            double const spread = v.g3 * zm.residual_sd;
            double total = 0.0;
            for (std::size_t m = 0; m < M; ++m) total += logistic(centre + spread * e[k * M + m]);
            prob *= total / static_cast<double>(M);
        }
        values[g] = prob;
    }
    return {lo, hi, std::move(values)};
}

inline AdherenceCurve one_shot_adherence_curve(std::span<ObservedRecord const> observed,
                                               std::span<std::size_t const> rows, double lo,
                                               double hi, PluginOptions const& opt)
{
    Design<2> d;
    for (std::size_t i : rows) {
        auto const& r = observed[i];
        if (r.t_assigned == 1) d.add({1.0, r.x}, r.a_obs == 1 ? 1.0 : 0.0);
    }
    auto const fit = fit_logistic(d);
    std::vector<double> values(static_cast<std::size_t>(std::max(opt.grid_points, 2)));
    for (std::size_t g = 0; g < values.size(); ++g) {
        double const x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(values.size() - 1);
        values[g] = logistic(fit.coef[0] + fit.coef[1] * x);
    }
    return {lo, hi, std::move(values)};
}

}  // namespace detail

/// Point value of the plug-in estimator on the rows subset (rows may repeat,
/// as in a bootstrap resample).
inline PluginTerms plugin_terms(std::span<ObservedRecord const> observed,
                                std::span<std::size_t const> rows, PluginOptions const& opt = {})
{
    if (rows.empty()) throw EstimationError("no records");
    std::vector<double> treated;
    double lo = observed[rows.front()].x;
    double hi = lo;
    for (std::size_t i : rows) {
        auto const& r = observed[i];
        lo = std::min(lo, r.x);
        hi = std::max(hi, r.x);
        if (r.t_assigned == 1 && r.a_obs == 1) {
            if (!r.y_obs) throw EstimationError("adherer without an observed outcome");
            treated.push_back(*r.y_obs);
        }
    }
    if (treated.empty()) throw EstimationError("no adherers in arm 1");

    auto const curve = opt.one_shot_logistic
                           ? detail::one_shot_adherence_curve(observed, rows, lo, hi, opt)
                           : detail::sequential_adherence_curve(observed, rows, lo, hi, opt);
    auto const outcome = fit_outcome(observed, rows, 0);

    double const num = pairwise_sum(rows.size(), [&](std::size_t i) {
        double const x = observed[rows[i]].x;
        return curve(x) * outcome.predict(x);
    });
    double const den =
        pairwise_sum(rows.size(), [&](std::size_t i) { return curve(observed[rows[i]].x); });
    if (!(den > 0.0)) throw EstimationError("estimated adherence probability is zero everywhere");
    return {pairwise_sum(treated) / static_cast<double>(treated.size()), num / den};
}

inline double plugin_value(std::span<ObservedRecord const> observed, PluginOptions const& opt = {})
{
    auto const rows = all_rows(observed.size());
    return plugin_terms(observed, rows, opt).value();
}

/// Subject-level bootstrap resample b of n subjects.
inline std::vector<std::size_t> bootstrap_rows(std::size_t n, std::uint64_t seed, std::uint64_t b)
{
    Substream const rng(seed, b);
    std::vector<std::size_t> rows(n);
    std::uint64_t slot = 0;
    for (auto& r : rows) r = static_cast<std::size_t>(rng.below(slot, n));
    return rows;
}

/// Plug-in estimate with bootstrap SE (opt.bootstrap resamples).
inline EffectEstimate estimate_plugin(std::span<ObservedRecord const> observed,
                                      PluginOptions const& opt = {})
{
    auto const rows = all_rows(observed.size());
    auto const terms = plugin_terms(observed, rows, opt);
    std::int64_t members = 0;
    for (auto const& r : observed) members += (r.t_assigned == 1 && r.a_obs == 1) ? 1 : 0;

    double se = 0.0;
    if (opt.bootstrap > 0) {
        std::vector<double> reps(static_cast<std::size_t>(opt.bootstrap));
        std::vector<std::uint8_t> failed(reps.size(), 0);
        parallel_for(reps.size(), opt.threads, [&](std::size_t begin, std::size_t end) {
            for (std::size_t b = begin; b < end; ++b) {
                auto const resample = bootstrap_rows(observed.size(), opt.seed, b + 1);
                try {
                    reps[b] = plugin_terms(observed, resample, opt).value();
                } catch (std::exception const&) {
                    failed[b] = 1;
                }
            }
        });
        std::vector<double> ok;
        for (std::size_t b = 0; b < reps.size(); ++b)
            if (!failed[b]) ok.push_back(reps[b]);
        if (ok.size() < 2) throw EstimationError("bootstrap failed on nearly every resample");
        se = mean_sd(ok).sd;
    }
    return {terms.value(), se, members, kStarPlus};
}

// ---------------------------------------------------------------------------
// Estimator registry and random-split calibration
// ---------------------------------------------------------------------------

/// A named point estimator of the S_star_plus effect from a two-arm
/// observed dataset.
struct Estimator {
    std::string name;
    std::function<double(std::span<ObservedRecord const>)> point;
};

inline Estimator naive_estimator()
{
    return {"naive", [](std::span<ObservedRecord const> obs) { return estimate_naive(obs).value; }};
}

inline Estimator plugin_estimator(PluginOptions opt = {})
{
    opt.bootstrap = 0;
    opt.threads = 1;
    return {"plugin", [opt](std::span<ObservedRecord const> obs) { return plugin_value(obs, opt); }};
}

inline std::vector<std::string> estimator_names() { return {"naive", "plugin"}; }

inline Estimator find_estimator(std::string const& name)
{
    if (name == "naive") return naive_estimator();
    if (name == "plugin") return plugin_estimator();
    throw std::invalid_argument("unknown estimator '" + name + "' (expected naive or plugin)");
}

struct SplitCalibration {
    std::vector<double> offsets;  // one per successful split
    double mean_offset = 0.0;
    double se_offset = 0.0;       // SD of offsets / sqrt(R)
    double sd_offset = 0.0;
    int R = 0;                    // requested splits
    int n_failed = 0;
    std::string estimator;
};

/// Pseudo-trial r: control subjects in id order, shuffled by the split's own
/// stream; the first floor(m/2) become pseudo-arm 1, the rest (including any
/// odd subject) stay pseudo-control.
inline std::vector<ObservedRecord> pseudo_trial(std::span<ObservedRecord const> sorted_control,
                                                std::uint64_t seed, std::uint64_t r)
{
    std::size_t const m = sorted_control.size();
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    Substream const rng(seed, r);
    std::uint64_t slot = 0;
    for (std::size_t i = m; i > 1; --i) {
        auto const j = static_cast<std::size_t>(rng.below(slot, i));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<ObservedRecord> out(sorted_control.begin(), sorted_control.end());
    for (std::size_t i = 0; i < m; ++i) out[order[i]].t_assigned = i < m / 2 ? 1 : 0;
    return out;
}

/// Repeatedly splits the control arm into two pseudo-arms and records the
/// estimator's value on each pseudo-trial. The mean is the estimator's
/// reference value under no treatment difference.
inline SplitCalibration split_calibrate(std::span<ObservedRecord const> control,
                                        Estimator const& estimator, int R, std::uint64_t seed,
                                        int threads = 0)
{
    if (R < 2) throw std::invalid_argument("split calibration needs R >= 2");
    for (auto const& r : control)
        if (r.t_assigned != 0)
            throw std::invalid_argument("split calibration takes control-arm records only");

    std::vector<ObservedRecord> sorted(control.begin(), control.end());
    std::sort(sorted.begin(), sorted.end(),
              [](auto const& a, auto const& b) { return a.id < b.id; });

    std::vector<double> value(static_cast<std::size_t>(R));
    std::vector<std::uint8_t> failed(value.size(), 0);
    parallel_for(value.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            try {
                value[r] = estimator.point(pseudo_trial(sorted, seed, r));
                if (!std::isfinite(value[r])) failed[r] = 1;
            } catch (std::exception const&) {
                failed[r] = 1;
            }
        }
    });

    SplitCalibration out;
    out.R = R;
    out.estimator = estimator.name;
    for (std::size_t r = 0; r < value.size(); ++r) {
        if (failed[r]) {
            ++out.n_failed;
        } else {
            out.offsets.push_back(value[r]);
        }
    }
    if (out.n_failed * 10 > R || out.offsets.size() < 2)
        throw EstimationError(std::to_string(out.n_failed) + " of " + std::to_string(R)
                              + " splits failed (more than 10%)");
    auto const ms = mean_sd(out.offsets);
    out.mean_offset = ms.mean;
    out.sd_offset = ms.sd;
    out.se_offset = ms.sd / std::sqrt(static_cast<double>(out.offsets.size()));
    return out;
}

inline std::vector<ObservedRecord> control_arm(std::span<ObservedRecord const> observed)
{
    std::vector<ObservedRecord> out;
    for (auto const& r : observed)
        if (r.t_assigned == 0) out.push_back(r);
    return out;
}

inline void write_calibration_header(std::ostream& os)
{
    os << "scenario_label,estimator,R,mean_offset,se_offset,n_failed_splits\n";
}

inline void write_calibration_row(std::ostream& os, std::string const& scenario_label,
                                  SplitCalibration const& c)
{
    os << csv::text(scenario_label) << ',' << c.estimator << ',' << c.R << ','
       << csv::real(c.mean_offset) << ',' << csv::real(c.se_offset) << ',' << c.n_failed << '\n';
}

}  // namespace pstrat
