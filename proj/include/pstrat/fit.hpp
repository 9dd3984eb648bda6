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

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pstrat/csv.hpp"
#include "pstrat/datagen.hpp"
#include "pstrat/numeric.hpp"

namespace pstrat {

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rows of a design with an intercept and up to two covariates.
template <std::size_t P>
struct Design {
    std::vector<std::array<double, P>> rows;
    std::vector<double> response;

    std::size_t size() const { return rows.size(); }
    void add(std::array<double, P> const& row, double y)
    {
        rows.push_back(row);
        response.push_back(y);
    }
};

template <std::size_t P>
struct LogisticResult {
    std::array<double, P> coef{};
    std::array<double, P> se{};  // from the inverse observed information
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;
    std::vector<double> loglik_trace;  // after each accepted step, starting at coef = 0
};

inline constexpr double kSeparationBound = 30.0;
inline constexpr double kGradientTolerance = 1e-8;
inline constexpr int kMaxIrlsIterations = 50;

/// Logistic maximum likelihood by Newton / IRLS with step halving, so the
/// log-likelihood never decreases beyond rounding.
template <std::size_t P>
LogisticResult<P> fit_logistic(Design<P> const& d)
{
    using Matrix = std::array<double, P * P>;
    auto evaluate = [&](std::array<double, P> const& b, std::array<double, P>& grad, Matrix& info) {
        grad.fill(0.0);
        info.fill(0.0);
        double ll = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            auto const& row = d.rows[i];
            double eta = 0.0;
            for (std::size_t j = 0; j < P; ++j) eta += b[j] * row[j];
            double const mu = logistic(eta);
            double const y = d.response[i];
            ll += y * eta - log1p_exp(eta);
            double const w = mu * (1.0 - mu);
            for (std::size_t j = 0; j < P; ++j) {
                grad[j] += (y - mu) * row[j];
                for (std::size_t k = 0; k <= j; ++k) info[j * P + k] += w * row[j] * row[k];
            }
        }
        for (std::size_t j = 0; j < P; ++j)
            for (std::size_t k = j + 1; k < P; ++k) info[j * P + k] = info[k * P + j];
        return ll;
    };
    auto max_abs = [](std::array<double, P> const& v) {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    };

    bool any_zero = false;
    bool any_one = false;
    for (double y : d.response) (y > 0.5 ? any_one : any_zero) = true;
    if (!(any_zero && any_one))
        throw FitError("quasi-separation: every response is identical");

    LogisticResult<P> out;
    std::array<double, P> beta{};
    std::array<double, P> grad{};
    Matrix info{};
    double ll = evaluate(beta, grad, info);
    out.loglik_trace.push_back(ll);
    for (int it = 0; it < kMaxIrlsIterations; ++it) {
        if (max_abs(grad) <= kGradientTolerance) {
            out.converged = true;
            break;
        }
        Matrix factor = info;
        if (!cholesky<P>(factor))
            throw FitError("logistic information matrix is singular (collinear covariates)");
        auto const step = cholesky_solve<P>(factor, grad);

        double const slack = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(ll);
        double t = 1.0;
        std::array<double, P> cand{};
        std::array<double, P> cand_grad{};
        Matrix cand_info{};
        double cand_ll = 0.0;
        bool accepted = false;
        for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
            for (std::size_t j = 0; j < P; ++j) cand[j] = beta[j] + t * step[j];
            cand_ll = evaluate(cand, cand_grad, cand_info);
            if (cand_ll >= ll - slack) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        beta = cand;
        grad = cand_grad;
        info = cand_info;
        ll = cand_ll;
        out.iterations = it + 1;
        out.loglik_trace.push_back(ll);
        if (max_abs(beta) > kSeparationBound)
            throw FitError("quasi-separation: |coefficient| exceeds 30");
    }
    if (max_abs(beta) > kSeparationBound)
        throw FitError("quasi-separation: |coefficient| exceeds 30");
    if (!out.converged && max_abs(grad) <= kGradientTolerance) out.converged = true;
    out.coef = beta;
    out.loglik = ll;
    Matrix factor = info;
    if (cholesky<P>(factor)) {
        auto const cov = cholesky_inverse<P>(factor);
        for (std::size_t j = 0; j < P; ++j) out.se[j] = std::sqrt(cov[j * P + j]);
    } else {
        out.se.fill(std::numeric_limits<double>::infinity());
    }
    return out;
}

template <std::size_t P>
struct LinearResult {
    std::array<double, P> coef{};
    double residual_sd = 0.0;
};

/// Ordinary least squares via the normal equations.
template <std::size_t P>
LinearResult<P> fit_linear(Design<P> const& d)
{
    if (d.size() <= P) throw FitError("least squares needs more rows than coefficients");
    std::array<double, P * P> xtx{};
    std::array<double, P> xty{};
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto const& row = d.rows[i];
        for (std::size_t j = 0; j < P; ++j) {
            xty[j] += row[j] * d.response[i];
            for (std::size_t k = 0; k < P; ++k) xtx[j * P + k] += row[j] * row[k];
        }
    }
    auto factor = xtx;
    if (!cholesky<P>(factor)) throw FitError("least-squares design is rank deficient");
    LinearResult<P> out;
    out.coef = cholesky_solve<P>(factor, xty);
    // One step of iterative refinement on the normal equations.
    std::array<double, P> resid = xty;
    for (std::size_t j = 0; j < P; ++j)
        for (std::size_t k = 0; k < P; ++k) resid[j] -= xtx[j * P + k] * out.coef[k];
    auto const corr = cholesky_solve<P>(factor, resid);
    for (std::size_t j = 0; j < P; ++j) out.coef[j] += corr[j];

    double ss = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        double fit = 0.0;
        for (std::size_t j = 0; j < P; ++j) fit += out.coef[j] * d.rows[i][j];
        double const e = d.response[i] - fit;
        ss += e * e;
    }
    out.residual_sd = std::sqrt(ss / static_cast<double>(d.size() - P));
    return out;
}

/// Visit-level working model logit P(A_k = 1 | A_{k-1} = 1) = g0 + g1 x + g3 z_k.
struct VisitFit {
    double g0 = 0.0;
    double g1 = 0.0;
    double g3 = 0.0;
    std::array<double, 3> se{};
    std::int64_t n_at_risk = 0;
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;
    std::vector<double> loglik_trace;
};

struct LogisticFit {
    int arm = 1;
    std::vector<VisitFit> visits;
    bool converged = false;  // every visit converged
    int iterations = 0;      // summed over visits
    double loglik = 0.0;     // summed over visits
};

inline constexpr std::int64_t kMinAtRisk = 10;

/// Records of `arm` at risk at visit k (the visit took place) and whether
/// they stayed adherent after it.
inline Design<3> adherence_design(std::span<ObservedRecord const> observed,
                                  std::span<std::size_t const> rows, int arm, int k, int K)
{
    Design<3> d;
    auto const kk = static_cast<std::size_t>(k);
    for (std::size_t i : rows) {
        auto const& r = observed[i];
        if (r.t_assigned != arm || !r.z_obs[kk]) continue;
        bool const stayed = k + 1 < K ? r.z_obs[kk + 1].has_value() : r.a_obs == 1;
        d.add({1.0, r.x, *r.z_obs[kk]}, stayed ? 1.0 : 0.0);
    }
    return d;
}

inline std::vector<std::size_t> all_rows(std::size_t n)
{
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

/// Sequential logistic fit on the subset `rows` of `observed`.
inline LogisticFit fit_sequential_logistic(std::span<ObservedRecord const> observed,
                                           std::span<std::size_t const> rows, int arm)
{
    if (arm != 0 && arm != 1) throw std::invalid_argument("arm must be 0 or 1");
    if (observed.empty()) throw FitError("no observed records");
    int const K = static_cast<int>(observed.front().z_obs.size());
    LogisticFit fit;
    fit.arm = arm;
    fit.converged = true;
    for (int k = 0; k < K; ++k) {
        auto const d = adherence_design(observed, rows, arm, k, K);
        if (static_cast<std::int64_t>(d.size()) < kMinAtRisk)
            throw FitError("visit " + std::to_string(k + 1) + " has "
                           + std::to_string(d.size()) + " at-risk subjects in arm "
                           + std::to_string(arm) + " (need at least 10)");
        auto const res = fit_logistic(d);
        VisitFit v;
        v.g0 = res.coef[0];
        v.g1 = res.coef[1];
        v.g3 = res.coef[2];
        v.se = res.se;
        v.n_at_risk = static_cast<std::int64_t>(d.size());
        v.converged = res.converged;
        v.iterations = res.iterations;
        v.loglik = res.loglik;
        v.loglik_trace = res.loglik_trace;
        fit.converged = fit.converged && v.converged;
        fit.iterations += v.iterations;
        fit.loglik += v.loglik;
        fit.visits.push_back(std::move(v));
    }
    return fit;
}

inline LogisticFit fit_sequential_logistic(std::span<ObservedRecord const> observed, int arm)
{
    auto const rows = all_rows(observed.size());
    return fit_sequential_logistic(observed, rows, arm);
}

inline void write_fit_csv(std::ostream& os, LogisticFit const& fit)
{
    os << "arm,visit,n_at_risk,g0,g1,g3,se_g0,se_g1,se_g3,converged,iterations,loglik\n";
    for (std::size_t k = 0; k < fit.visits.size(); ++k) {
        auto const& v = fit.visits[k];
        os << fit.arm << ',' << k + 1 << ',' << v.n_at_risk << ',' << csv::real(v.g0) << ','
           << csv::real(v.g1) << ',' << csv::real(v.g3) << ',' << csv::real(v.se[0]) << ','
           << csv::real(v.se[1]) << ',' << csv::real(v.se[2]) << ',' << (v.converged ? 1 : 0)
           << ',' << v.iterations << ',' << csv::real(v.loglik) << '\n';
    }
}

/// Working outcome model E[Y | X] = intercept + slope_x X.
struct OutcomeFit {
    double intercept = 0.0;
    double slope_x = 0.0;
    double residual_sd = 0.0;
    std::int64_t n_used = 0;

    double predict(double x) const { return intercept + slope_x * x; }
};

enum class OutcomePopulation { AllObserved, AdherersOnly };

/// Least-squares fit of observed Y on X in one arm.
inline OutcomeFit fit_outcome(std::span<ObservedRecord const> observed,
                              std::span<std::size_t const> rows, int arm,
                              OutcomePopulation population = OutcomePopulation::AllObserved)
{
    Design<2> d;
    for (std::size_t i : rows) {
        auto const& r = observed[i];
        if (r.t_assigned != arm || !r.y_obs) continue;
        if (population == OutcomePopulation::AdherersOnly && r.a_obs != 1) continue;
        d.add({1.0, r.x}, *r.y_obs);
    }
    auto const res = fit_linear(d);
    return {res.coef[0], res.coef[1], res.residual_sd, static_cast<std::int64_t>(d.size())};
}

}  // namespace pstrat
