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
#include <numeric>
#include <set>
#include <vector>

#include "pstrat/gauss_hermite.hpp"
#include "pstrat/numeric.hpp"
#include "pstrat/philox.hpp"

namespace pstrat {
namespace {

// Known-answer vectors published with Random123 (kat_vectors, philox4x32_10).
TEST(Philox, KnownAnswerVectors)
{
    EXPECT_EQ(Philox4x32::block({0, 0, 0, 0}, {0, 0}),
              (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                {0xffffffffu, 0xffffffffu}),
              (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                {0xa4093822u, 0x299f31d0u}),
              (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Substream, SlotsAreAddressableAndStreamsDiffer)
{
    Substream const a(42, 7);
    Substream const b(42, 8);
    Substream const c(43, 7);
    EXPECT_EQ(a.uniform(3), Substream(42, 7).uniform(3));
    EXPECT_NE(a.uniform(3), b.uniform(3));
    EXPECT_NE(a.uniform(3), c.uniform(3));
    EXPECT_NE(a.uniform(3), a.uniform(4));
}

TEST(Substream, UniformAndNormalMoments)
{
    Substream const rng(2026, 1);
    constexpr int n = 200000;
    std::vector<double> u(n), z(n);
    for (int i = 0; i < n; ++i) {
        u[static_cast<std::size_t>(i)] = rng.uniform(static_cast<std::uint64_t>(i));
        z[static_cast<std::size_t>(i)] = rng.normal(static_cast<std::uint64_t>(n + i));
    }
    for (double v : u) ASSERT_TRUE(v >= 0.0 && v < 1.0);
    auto const mu = mean_sd(u);
    EXPECT_NEAR(mu.mean, 0.5, 3.5 * std::sqrt(1.0 / 12.0 / n));
    auto const mz = mean_sd(z);
    EXPECT_NEAR(mz.mean, 0.0, 3.5 / std::sqrt(n));
    EXPECT_NEAR(mz.sd, 1.0, 3.5 * std::sqrt(0.5 / n));
}

TEST(Substream, BelowCoversRangeUniformly)
{
    Substream const rng(1, 2);
    std::uint64_t slot = 0;
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[rng.below(slot, 7)];
    for (int c : counts) EXPECT_NEAR(c, 10000, 4.0 * std::sqrt(10000.0 * 6.0 / 7.0));
}

TEST(PairwiseSum, MatchesExactIntegerSumAndIsOrderStable)
{
    std::vector<double> v(100003);
    std::iota(v.begin(), v.end(), 1.0);
    EXPECT_EQ(pairwise_sum(v), 100003.0 * 100004.0 / 2.0);
    EXPECT_EQ(pairwise_sum(std::span<double const>{}), 0.0);
}

TEST(MeanSd, SmallSample)
{
    std::vector<double> const v{1.0, 2.0, 3.0, 4.0};
    auto const ms = mean_sd(v);
    EXPECT_DOUBLE_EQ(ms.mean, 2.5);
    EXPECT_DOUBLE_EQ(ms.sd, std::sqrt(5.0 / 3.0));
    EXPECT_EQ(mean_sd(std::vector<double>{3.0}).sd, 0.0);
}

TEST(ParallelFor, CoversEveryIndexOnceAndPropagatesErrors)
{
    for (int threads : {1, 3, 8}) {
        std::vector<int> hits(1001, 0);
        parallel_for(hits.size(), threads, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) ++hits[i];
        });
        for (int h : hits) ASSERT_EQ(h, 1);
    }
    EXPECT_THROW(parallel_for(10, 4,
                              [](std::size_t b, std::size_t) {
                                  if (b > 0) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}

TEST(Logistic, StableAtExtremes)
{
    EXPECT_EQ(logistic(800.0), 1.0);
    EXPECT_EQ(logistic(-800.0), 0.0);
    EXPECT_DOUBLE_EQ(logistic(0.0), 0.5);
    EXPECT_NEAR(log1p_exp(800.0), 800.0, 1e-12);
    EXPECT_NEAR(log1p_exp(-800.0), 0.0, 1e-300);
}

TEST(NormalQuantile, InvertsTheCdf)
{
    for (double p : {1e-12, 1e-6, 0.01, 0.02425, 0.2, 0.5, 0.8, 0.97575, 0.999, 1.0 - 1e-9}) {
        double const z = standard_normal_quantile(p);
        EXPECT_NEAR(standard_normal_cdf(z), p, 1e-14 + 1e-12 * p) << p;
    }
    EXPECT_EQ(standard_normal_quantile(0.5), 0.0);
    EXPECT_THROW(standard_normal_quantile(0.0), std::domain_error);
}

TEST(Cholesky, SolvesSpdSystem)
{
    std::array<double, 9> a{4, 2, 0.6, 2, 5, 1, 0.6, 1, 3};
    auto const original = a;
    ASSERT_TRUE(cholesky<3>(a));
    std::array<double, 3> const b{1, -2, 0.5};
    auto const x = cholesky_solve<3>(a, b);
    for (int r = 0; r < 3; ++r) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) s += original[r * 3 + c] * x[c];
        EXPECT_NEAR(s, b[r], 1e-14);
    }
    std::array<double, 4> singular{1, 1, 1, 1};
    EXPECT_FALSE(cholesky<2>(singular));
}

// E[Z^(2m)] = (2m - 1)!!; an n-point rule is exact through degree 2n - 1.
TEST(GaussHermite, ExactForNormalMoments)
{
    for (int order : {2, 3, 7, 64, 65, 128, 400}) {
        auto const rule = gauss_hermite(order);
        EXPECT_EQ(rule.order(), order);
        double double_factorial = 1.0;
        for (int m = 0; 2 * m <= std::min(2 * order - 1, 20); ++m) {
            if (m > 0) double_factorial *= 2.0 * m - 1.0;
            double const moment = rule.expectation([m](double z) { return std::pow(z, 2 * m); });
            EXPECT_NEAR(moment, double_factorial, 1e-12 * double_factorial) << order << " " << m;
        }
        EXPECT_EQ(rule.expectation([](double z) { return z * z * z; }), 0.0);
    }
    EXPECT_THROW(gauss_hermite(0), std::invalid_argument);
    EXPECT_THROW(gauss_hermite(401), std::invalid_argument);
}

}  // namespace
}  // namespace pstrat
