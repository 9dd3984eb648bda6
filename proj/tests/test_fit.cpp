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

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "pstrat/fit.hpp"

namespace pstrat {
namespace {

std::vector<ObservedRecord> observed_data(ModelParams const& p, std::int64_t n, std::uint64_t seed,
                                          bool keep_y = false)
{
    return observe(generate(p, n, seed), keep_y);
}

TEST(SequentialLogistic, RecoversGeneratingCoefficients)
{
    auto const p = demo_params();
    auto const obs = observed_data(p, 100000, 31);
    auto const fit = fit_sequential_logistic(obs, 1);
    ASSERT_TRUE(fit.converged);
    ASSERT_EQ(fit.visits.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        auto const& v = fit.visits[k];
        EXPECT_LE(std::abs(v.g0 - p.gamma0), 3.5 * v.se[0]) << k;
        EXPECT_LE(std::abs(v.g1 - p.gamma1), 3.5 * v.se[1]) << k;
        EXPECT_LE(std::abs(v.g3 - p.gamma3[k]), 3.5 * v.se[2]) << k;
        EXPECT_LE(v.iterations, kMaxIrlsIterations);
    }
    EXPECT_GT(fit.visits[0].n_at_risk, fit.visits[1].n_at_risk);
    EXPECT_GT(fit.visits[1].n_at_risk, fit.visits[2].n_at_risk);
}

TEST(SequentialLogistic, NullCoefficients)
{
    auto p = demo_params();
    p.gamma1 = 0.0;
    p.gamma3 = {0, 0, 0};
    auto const obs = observed_data(p, 100000, 32);
    for (int arm : {0, 1}) {
        auto const fit = fit_sequential_logistic(obs, arm);
        for (auto const& v : fit.visits) {
            EXPECT_LE(std::abs(v.g0 - p.gamma0), 3.5 * v.se[0]);
            EXPECT_LE(std::abs(v.g1), 3.5 * v.se[1]);
            EXPECT_LE(std::abs(v.g3), 3.5 * v.se[2]);
        }
    }
}

TEST(SequentialLogistic, ArmSpecificIntercept)
{
    auto p = demo_params();
    p.gamma2 = 2.0;
    auto const obs = observed_data(p, 100000, 33);
    auto const v = fit_sequential_logistic(obs, 1).visits[0];
    EXPECT_LE(std::abs(v.g0 - 3.0), 3.5 * v.se[0]);
    auto const c = fit_sequential_logistic(obs, 0).visits[0];
    EXPECT_LE(std::abs(c.g0 - 1.0), 3.5 * c.se[0]);
}

TEST(SequentialLogistic, SeparationIsReported)
{
    auto p = demo_params();
    p.gamma0 = 50.0;
    auto const obs = observed_data(p, 5000, 34);
    try {
        fit_sequential_logistic(obs, 1);
        FAIL() << "no error";
    } catch (FitError const& e) {
        EXPECT_NE(std::string(e.what()).find("quasi-separation"), std::string::npos);
    }

    // A perfectly separating covariate.
    Design<2> d;
    for (int i = 0; i < 100; ++i) d.add({1.0, i - 49.5}, i >= 50 ? 1.0 : 0.0);
    EXPECT_THROW(fit_logistic(d), FitError);
}

TEST(SequentialLogistic, UnderPopulatedVisit)
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    std::vector<ObservedRecord> obs;
    for (int i = 0; i < 200; ++i) {
        ObservedRecord r;
        r.id = i;
        r.x = g(rng);
        r.t_assigned = 1;
        r.z_obs = {g(rng), std::nullopt, std::nullopt};
        if (i < 60) r.z_obs[1] = g(rng);
        if (i < 4) r.z_obs[2] = g(rng);
        r.a_obs = i < 2 ? 1 : 0;
        obs.push_back(r);
    }
    try {
        fit_sequential_logistic(obs, 1);
        FAIL() << "no error";
    } catch (FitError const& e) {
        EXPECT_NE(std::string(e.what()).find("visit 3 has 4 at-risk"), std::string::npos) << e.what();
    }
    EXPECT_THROW(fit_sequential_logistic(obs, 2), std::invalid_argument);
}

TEST(Irls, LikelihoodNonDecreasingAndGradientSmall)
{
    for (std::uint64_t seed : {41u, 42u, 43u}) {
        auto const obs = observed_data(demo_params(), 20000, seed);
        auto const rows = all_rows(obs.size());
        for (int k = 0; k < 3; ++k) {
            auto const d = adherence_design(obs, rows, 1, k, 3);
            auto const res = fit_logistic(d);
            ASSERT_TRUE(res.converged);
            for (std::size_t i = 1; i < res.loglik_trace.size(); ++i)
                EXPECT_GE(res.loglik_trace[i], res.loglik_trace[i - 1] - 1e-12 * std::abs(res.loglik_trace[i]));
            EXPECT_EQ(res.loglik_trace.back(), res.loglik);

            std::array<double, 3> grad{};
            for (std::size_t i = 0; i < d.size(); ++i) {
                double eta = 0.0;
                for (std::size_t j = 0; j < 3; ++j) eta += res.coef[j] * d.rows[i][j];
                double const r = d.response[i] - logistic(eta);
                for (std::size_t j = 0; j < 3; ++j) grad[j] += r * d.rows[i][j];
            }
            for (double gj : grad) EXPECT_LE(std::abs(gj), 1e-8);
        }
    }
}

TEST(LeastSquares, NormalEquationsHold)
{
    auto const obs = observed_data(demo_params(), 50000, 44, true);
    auto const rows = all_rows(obs.size());
    for (auto pop : {OutcomePopulation::AllObserved, OutcomePopulation::AdherersOnly}) {
        auto const fit = fit_outcome(obs, rows, 0, pop);
        std::array<double, 2> xr{}, xy{};
        std::int64_t used = 0;
        for (auto const& r : obs) {
            if (r.t_assigned != 0 || !r.y_obs) continue;
            if (pop == OutcomePopulation::AdherersOnly && r.a_obs != 1) continue;
            double const e = *r.y_obs - fit.predict(r.x);
            xr[0] += e;
            xr[1] += e * r.x;
            xy[0] += std::abs(*r.y_obs);
            xy[1] += std::abs(*r.y_obs * r.x);
            ++used;
        }
        EXPECT_EQ(used, fit.n_used);
        EXPECT_LE(std::abs(xr[0]), 1e-10 * xy[0]);
        EXPECT_LE(std::abs(xr[1]), 1e-10 * xy[1]);
    }
    Design<2> tiny;
    tiny.add({1.0, 1.0}, 1.0);
    tiny.add({1.0, 1.0}, 2.0);
    tiny.add({1.0, 1.0}, 3.0);
    EXPECT_THROW(fit_linear(tiny), FitError);
}

TEST(LeastSquares, ExactLine)
{
    Design<2> d;
    for (int i = 0; i < 10; ++i) d.add({1.0, 0.5 * i}, 3.0 - 2.0 * 0.5 * i);
    auto const res = fit_linear(d);
    EXPECT_NEAR(res.coef[0], 3.0, 1e-13);
    EXPECT_NEAR(res.coef[1], -2.0, 1e-13);
    EXPECT_NEAR(res.residual_sd, 0.0, 1e-13);
}

TEST(FitCsv, Header)
{
    auto const obs = observed_data(demo_params(), 5000, 45);
    std::ostringstream os;
    write_fit_csv(os, fit_sequential_logistic(obs, 1));
    auto const text = os.str();
    EXPECT_EQ(text.substr(0, text.find('\n')),
              "arm,visit,n_at_risk,g0,g1,g3,se_g0,se_g1,se_g3,converged,iterations,loglik");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

}  // namespace
}  // namespace pstrat
