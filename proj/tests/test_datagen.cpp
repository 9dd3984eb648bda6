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

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "pstrat/datagen.hpp"

namespace pstrat {
namespace {

double ulp(double v) { return std::nextafter(std::abs(v), INFINITY) - std::abs(v); }

bool same(SubjectRecord const& a, SubjectRecord const& b)
{
    return a.id == b.id && a.x == b.x && a.t_assigned == b.t_assigned && a.z == b.z
           && a.eta == b.eta && a.eps == b.eps && a.y == b.y && a.a_seq == b.a_seq && a.a == b.a;
}

TEST(Generate, NoiseFreeDegenerateModel)
{
    auto p = demo_params();
    p.sigma_eta = 0.0;
    p.sigma_eps = 0.0;
    p.alpha0 = p.alpha1 = p.alpha2 = {0, 0, 0};
    p.beta0 = 1.0;
    p.beta1 = 0.0;
    p.beta3 = {0, 0, 0};
    for (auto const& r : generate(p, 2000, 5)) {
        ASSERT_EQ(r.y[0], 1.0);
        ASSERT_EQ(r.y[1], 1.0);
    }
}

TEST(Generate, SaturatedAdherence)
{
    auto p = demo_params();
    p.gamma0 = 50.0;
    p.gamma1 = 0.0;
    p.gamma3 = {0, 0, 0};
    for (auto const& r : generate(p, 5000, 6)) {
        ASSERT_EQ(r.a[0], 1);
        ASSERT_EQ(r.a[1], 1);
    }
}

TEST(Generate, FullNullContrastCentred)
{
    auto const recs = generate(demo_params(), 100000, 7);
    std::vector<double> d;
    for (auto const& r : recs) d.push_back(r.y[1] - r.y[0]);
    auto const ms = mean_sd(d);
    EXPECT_LE(std::abs(ms.mean), 3.5 * ms.sd / std::sqrt(static_cast<double>(d.size())));
}

TEST(Generate, IdenticalForAnyThreadCount)
{
    auto const p = demo_params();
    auto const one = generate(p, 3001, 99, 1);
    for (int threads : {2, 3, 8}) {
        auto const many = generate(p, 3001, 99, threads);
        ASSERT_EQ(many.size(), one.size());
        for (std::size_t i = 0; i < one.size(); ++i) ASSERT_TRUE(same(one[i], many[i])) << i;
    }
    // A subject does not depend on n or on its neighbours.
    EXPECT_TRUE(same(generate(p, 10, 99)[7], one[7]));
    EXPECT_TRUE(same(make_subject(p, 99, 2000), one[2000]));
}

TEST(Generate, RecordInvariants)
{
    auto p = demo_params();
    p.alpha0 = {0.1, -0.2, 0.3};
    p.alpha2 = {0.2, 0.0, -0.1};
    p.beta2 = 0.3;
    auto const recs = generate(p, 20000, 8);
    std::int64_t id = 0;
    for (auto const& r : recs) {
        ASSERT_EQ(r.id, id++);
        for (int t = 0; t < 2; ++t) {
            std::vector<double> z(3);
            for (int k = 0; k < 3; ++k) {
                z[static_cast<std::size_t>(k)] =
                    p.alpha0[static_cast<std::size_t>(k)] + p.alpha1[static_cast<std::size_t>(k)] * r.x
                    + p.alpha2[static_cast<std::size_t>(k)] * t + r.eta_at(t, k);
                ASSERT_LE(std::abs(z[static_cast<std::size_t>(k)] - r.z_at(t, k)), ulp(r.z_at(t, k)));
            }
            double y = p.beta0 + p.beta1 * r.x + p.beta2 * t;
            for (int k = 0; k < 3; ++k) y += p.beta3[static_cast<std::size_t>(k)] * r.z_at(t, k);
            y += r.eps[static_cast<std::size_t>(t)];
            ASSERT_LE(std::abs(y - r.y[static_cast<std::size_t>(t)]), ulp(y));

            bool dropped = false;
            int overall = 1;
            for (int k = 0; k < 3; ++k) {
                if (dropped) {
                    ASSERT_FALSE(r.adhered_at(t, k));
                }
                dropped = dropped || !r.adhered_at(t, k);
                overall = std::min(overall, r.adhered_at(t, k) ? 1 : 0);
            }
            ASSERT_EQ(r.a[static_cast<std::size_t>(t)], overall);
        }
    }
}

TEST(Generate, MarginalsMatchTheModel)
{
    auto p = demo_params();
    p.mu_x = 1.5;
    p.sigma_x = 2.0;
    p.p_treat = 0.3;
    auto const recs = generate(p, 100000, 9);
    std::vector<double> x;
    double treated = 0.0;
    for (auto const& r : recs) {
        x.push_back(r.x);
        treated += r.t_assigned;
    }
    auto const ms = mean_sd(x);
    double const n = static_cast<double>(x.size());
    EXPECT_NEAR(ms.mean, 1.5, 3.5 * 2.0 / std::sqrt(n));
    EXPECT_NEAR(ms.sd, 2.0, 3.5 * 2.0 * std::sqrt(0.5 / n));
    EXPECT_NEAR(treated / n, 0.3, 3.5 * std::sqrt(0.21 / n));
}

TEST(Generate, FirstVisitAdherenceRate)
{
    // gamma1 = gamma3 = 0 makes P(A^(1) = 1) = logistic(gamma0) exactly.
    auto p = demo_params();
    p.gamma1 = 0.0;
    p.gamma3 = {0, 0, 0};
    p.gamma0 = 0.7;
    auto const recs = generate(p, 100000, 10);
    double hits = 0.0;
    double all3 = 0.0;
    for (auto const& r : recs) {
        hits += r.adhered_at(1, 0) ? 1.0 : 0.0;
        all3 += r.a[1];
    }
    double const n = static_cast<double>(recs.size());
    double const q = logistic(0.7);
    EXPECT_NEAR(hits / n, q, 3.5 * std::sqrt(q * (1 - q) / n));
    double const q3 = q * q * q;
    EXPECT_NEAR(all3 / n, q3, 3.5 * std::sqrt(q3 * (1 - q3) / n));
}

TEST(Generate, AdherenceMonotoneInGamma0)
{
    auto lo = demo_params();
    auto hi = lo;
    hi.gamma0 = lo.gamma0 + 0.75;
    for (std::int64_t id = 0; id < 20000; ++id) {
        auto const a = make_subject(lo, 12, id);
        auto const b = make_subject(hi, 12, id);
        for (std::size_t i = 0; i < a.a_seq.size(); ++i) ASSERT_LE(a.a_seq[i], b.a_seq[i]);
        ASSERT_EQ(a.y, b.y);
    }
}

TEST(Generate, ArmsExchangeableUnderFullNull)
{
    auto const r1 = generate(demo_params(), 100000, 1001);
    auto const r2 = generate(demo_params(), 100000, 1002);
    std::vector<double> y0, y1;
    for (auto const& r : r1) y0.push_back(r.y[0]);
    for (auto const& r : r2) y1.push_back(r.y[1]);
    auto const ks = testing::ks_two_sample(y0, y1);
    EXPECT_GT(ks.p_value, 0.001) << ks.statistic;
}

TEST(Generate, ReplicateSeedsAreDistinct)
{
    EXPECT_NE(replicate_seed(5, 0), replicate_seed(5, 1));
    EXPECT_EQ(replicate_seed(5, 0), 5u);
    EXPECT_NE(make_subject(demo_params(), replicate_seed(5, 0), 0).x,
              make_subject(demo_params(), replicate_seed(5, 1), 0).x);
}

SubjectRecord handmade(std::vector<std::uint8_t> arm1_seq)
{
    SubjectRecord r;
    r.id = 4;
    r.K = 3;
    r.x = 0.25;
    r.t_assigned = 1;
    r.z = {0.1, 0.2, 0.3, 1.1, 1.2, 1.3};
    r.eta = r.z;
    r.y = {-1.0, 2.0};
    r.a_seq = {1, 1, 1, arm1_seq[0], arm1_seq[1], arm1_seq[2]};
    r.a = {1, static_cast<std::uint8_t>(arm1_seq[0] & arm1_seq[1] & arm1_seq[2])};
    return r;
}

TEST(Observe, FullAdherer)
{
    auto const o = observe(handmade({1, 1, 1}), false);
    ASSERT_EQ(o.z_obs.size(), 3u);
    EXPECT_EQ(o.z_obs[0], 1.1);
    EXPECT_EQ(o.z_obs[1], 1.2);
    EXPECT_EQ(o.z_obs[2], 1.3);
    EXPECT_EQ(o.a_obs, 1);
    EXPECT_EQ(o.y_obs, 2.0);
}

TEST(Observe, DropoutAfterFirstVisit)
{
    auto const o = observe(handmade({1, 0, 0}), false);
    EXPECT_EQ(o.z_obs[0], 1.1);
    EXPECT_EQ(o.z_obs[1], 1.2);
    EXPECT_FALSE(o.z_obs[2].has_value());
    EXPECT_EQ(o.a_obs, 0);
    EXPECT_FALSE(o.y_obs.has_value());
    EXPECT_EQ(observe(handmade({1, 0, 0}), true).y_obs, 2.0);
}

TEST(Observe, MissingnessIsMonotoneOnGeneratedData)
{
    auto const recs = generate(demo_params(), 10000, 13);
    auto const obs = observe(recs, false);
    for (std::size_t i = 0; i < obs.size(); ++i) {
        auto const& o = obs[i];
        ASSERT_TRUE(o.z_obs[0].has_value());
        for (std::size_t k = 1; k < 3; ++k)
            if (!o.z_obs[k - 1]) {
                ASSERT_FALSE(o.z_obs[k].has_value());
            }
        ASSERT_EQ(o.a_obs, recs[i].a[static_cast<std::size_t>(o.t_assigned)]);
        ASSERT_EQ(o.y_obs.has_value(), o.a_obs == 1);
    }
}

TEST(Csv, Headers)
{
    auto const recs = generate(demo_params(), 3, 1);
    std::ostringstream s, o;
    write_subjects_csv(s, recs, 3);
    write_observed_csv(o, observe(recs, false), 3);
    EXPECT_EQ(s.str().substr(0, s.str().find('\n')),
              "id,x,t,z0_1,z0_2,z0_3,z1_1,z1_2,z1_3,y0,y1,a0_1,a0_2,a0_3,a1_1,a1_2,a1_3,a0,a1");
    EXPECT_EQ(o.str().substr(0, o.str().find('\n')), "id,x,t,z_1,z_2,z_3,a,y");
    // 17 significant digits round-trip.
    std::istringstream in(s.str());
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    auto const comma = line.find(',');
    EXPECT_EQ(std::stod(line.substr(comma + 1, line.find(',', comma + 1) - comma - 1)), recs[0].x);
}

}  // namespace
}  // namespace pstrat
