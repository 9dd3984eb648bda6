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

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pstrat/csv.hpp"
#include "pstrat/gauss_hermite.hpp"
#include "pstrat/numeric.hpp"
#include "pstrat/params.hpp"
#include "pstrat/strata.hpp"

namespace pstrat {

struct QuadratureSpec {
    int nodes_x = 64;
    int nodes_xi = 64;
    bool refine = true;  // also evaluate with doubled node counts and compare
    double rel_tol = 1e-9;
};

/// The closed form only holds when treatment leaves Y and Z untouched.
class QuadraturePreconditionError : public std::domain_error {
public:
    QuadraturePreconditionError()
        : std::domain_error(
              "closed-form stratum effect requires no treatment effect on Y or Z "
              "(alpha2 = 0 and beta2 = 0); use the Monte Carlo method instead")
    {
    }
};

class RefinementError : public std::runtime_error {
public:
    RefinementError(double coarse, double refined)
        : std::runtime_error("quadrature refinement failed: " + csv::real(coarse) + " vs "
                             + csv::real(refined)),
          coarse_(coarse),
          refined_(refined)
    {
    }
    double coarse() const noexcept { return coarse_; }
    double refined() const noexcept { return refined_; }

private:
    double coarse_;
    double refined_;
};

namespace detail {

inline void check_quadrature_spec(QuadratureSpec const& s)
{
    int const factor = s.refine ? 2 : 1;
    if (s.nodes_x < 2 || s.nodes_xi < 2 || factor * s.nodes_x > kMaxGaussHermiteOrder
        || factor * s.nodes_xi > kMaxGaussHermiteOrder)
        throw std::invalid_argument("quadrature node counts must be in [2, 400] (200 with refine)");
    if (!(s.rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be > 0");
}

/// E[Y(1) - Y(0) | A(1) = 1] for a Y-null model. Given x the integrand
/// factors over the visits, so with w_k(x, xi) the visit-k adherence
/// probability under arm 1 at Z_k = alpha0k + alpha1k x + xi,
///   D_k(x) = E[w_k(x, xi)],  N_k(x) = E[xi w_k(x, xi)],
///   mu = E_x[sum_k beta3k N_k prod_{j != k} D_j] / E_x[prod_k D_k].
inline double stratum_effect_ratio(ModelParams const& p, GaussHermiteRule const& rule_x,
                                   GaussHermiteRule const& rule_xi)
{
    auto const K = static_cast<std::size_t>(p.K);
    double const intercept_shift = p.gamma0 + p.gamma2;
    std::vector<double> D(K), N(K);

    auto integrands = [&](double z, double& num, double& den) {
        double const x = p.mu_x + p.sigma_x * z;
        for (std::size_t k = 0; k < K; ++k) {
            double const g3 = p.gamma3[k];
            double const lin = intercept_shift + g3 * p.alpha0[k] + (p.gamma1 + g3 * p.alpha1[k]) * x;
            double d = rule_xi.center_weight * logistic(lin);
            double nk = 0.0;
            for (std::size_t j = 0; j < rule_xi.nodes.size(); ++j) {
                double const xi = p.sigma_eta * rule_xi.nodes[j];
                double const up = logistic(lin + g3 * xi);
                double const down = logistic(lin - g3 * xi);
                d += rule_xi.weights[j] * (up + down);
                nk += rule_xi.weights[j] * xi * (up - down);
            }
            D[k] = d;
            N[k] = nk;
        }
        den = 1.0;
        for (std::size_t k = 0; k < K; ++k) den *= D[k];
        num = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double term = p.beta3[k] * N[k];
            for (std::size_t j = 0; j < K; ++j)
                if (j != k) term *= D[j];
            num += term;
        }
    };

    double num_total = 0.0;
    double den_total = 0.0;
    double num = 0.0;
    double den = 0.0;
    if (rule_x.center_weight > 0.0) {
        integrands(0.0, num, den);
        num_total += rule_x.center_weight * num;
        den_total += rule_x.center_weight * den;
    }
    for (std::size_t i = 0; i < rule_x.nodes.size(); ++i) {
        double num_lo = 0.0;
        double den_lo = 0.0;
        integrands(rule_x.nodes[i], num, den);
        integrands(-rule_x.nodes[i], num_lo, den_lo);
        num_total += rule_x.weights[i] * (num + num_lo);
        den_total += rule_x.weights[i] * (den + den_lo);
    }
    if (!(den_total > 0.0))
        throw std::runtime_error("stratum S_star_plus has zero probability under these parameters");
    return num_total / den_total;
}

}  // namespace detail

/// Closed-form stratum effect for S_star_plus under a Y-null model, by
/// factorized Gauss-Hermite quadrature. gamma2 shifts the arm-1 adherence
/// intercept. Exactly 0 when sigma_eta = 0, beta3 = 0 or gamma3 = 0.
inline double mu_star_plus(ModelParams const& p, QuadratureSpec const& spec = {})
{
    check_invariants(p);
    if (!is_y_null(p)) throw QuadraturePreconditionError();
    detail::check_quadrature_spec(spec);
    if (p.sigma_eta == 0.0) return 0.0;

    double const coarse = detail::stratum_effect_ratio(p, gauss_hermite(spec.nodes_x),
                                                       gauss_hermite(spec.nodes_xi));
    if (!spec.refine) return coarse;
    double const refined = detail::stratum_effect_ratio(p, gauss_hermite(2 * spec.nodes_x),
                                                        gauss_hermite(2 * spec.nodes_xi));
    double scale = 0.0;
    for (double b : p.beta3) scale += std::abs(b);
    double const floor = 1e-14 * scale * p.sigma_eta;
    if (std::abs(refined - coarse) > spec.rel_tol * std::abs(refined) + floor)
        throw RefinementError(coarse, refined);
    return refined;
}

struct QuadratureMcCheck {
    double quad = 0.0;
    EffectEstimate mc;

    /// Agreement within `z` Monte Carlo standard errors.
    bool agrees(double z = 3.5) const { return std::abs(quad - mc.value) <= z * mc.se; }
};

/// Closed form next to the brute-force potential-outcome average of the
/// same quantity on n simulated subjects.
inline QuadratureMcCheck mu_star_plus_mc_check(ModelParams const& p, std::int64_t n,
                                               std::uint64_t seed, int threads = 0,
                                               QuadratureSpec const& spec = {})
{
    QuadratureMcCheck out;
    out.quad = mu_star_plus(p, spec);
    StratumLabel const labels[] = {kStarPlus};
    out.mc = streamed_oracle_effects(p, n, seed, labels, threads).front();
    return out;
}

}  // namespace pstrat
