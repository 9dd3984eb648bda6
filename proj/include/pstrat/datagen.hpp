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
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "pstrat/csv.hpp"
#include "pstrat/numeric.hpp"
#include "pstrat/params.hpp"
#include "pstrat/philox.hpp"

namespace pstrat {

/// One subject with both arms' potential outcomes. Per-arm, per-visit
/// quantities are stored arm-major: index t * K + k, with k = 0 the first
/// visit.
struct SubjectRecord {
    std::int64_t id = 0;
    int K = 0;
    double x = 0.0;
    int t_assigned = 0;
    std::vector<double> z;
    std::vector<double> eta;
    std::array<double, 2> eps{};
    std::array<double, 2> y{};
    std::vector<std::uint8_t> a_seq;  // a_seq[t*K + k] = A^{(k+1)}(t)
    std::array<std::uint8_t, 2> a{};  // overall adherence A(t)

    double z_at(int t, int k) const { return z[static_cast<std::size_t>(t * K + k)]; }
    double eta_at(int t, int k) const { return eta[static_cast<std::size_t>(t * K + k)]; }
    bool adhered_at(int t, int k) const { return a_seq[static_cast<std::size_t>(t * K + k)] != 0; }
};

/// What a trial actually sees for one subject under its assigned arm.
struct ObservedRecord {
    std::int64_t id = 0;
    double x = 0.0;
    int t_assigned = 0;
    std::vector<std::optional<double>> z_obs;  // z_obs[k] present iff A^{(k)} = 1
    int a_obs = 0;
    std::optional<double> y_obs;
};

/// Draw slots within a subject's substream. The layout is fixed for a
/// given K so records do not depend on evaluation order.
struct DrawLayout {
    int K;
    std::uint64_t x() const { return 0; }
    std::uint64_t treat() const { return 1; }
    std::uint64_t eta(int t, int k) const { return 2 + static_cast<std::uint64_t>(t * K + k); }
    std::uint64_t eps(int t) const { return 2 + 2 * static_cast<std::uint64_t>(K) + t; }
    std::uint64_t adherence(int t, int k) const
    {
        return 4 + 2 * static_cast<std::uint64_t>(K) + static_cast<std::uint64_t>(t * K + k);
    }
};

inline double intermediate_value(ModelParams const& p, double x, int t, int k, double eta)
{
    auto const kk = static_cast<std::size_t>(k);
    return p.alpha0[kk] + p.alpha1[kk] * x + p.alpha2[kk] * t + eta;
}

inline double outcome_value(ModelParams const& p, double x, int t,
                            std::span<double const> z_arm, double eps)
{
    double y = p.beta0 + p.beta1 * x + p.beta2 * t;
    for (int k = 0; k < p.K; ++k) y += p.beta3[static_cast<std::size_t>(k)] * z_arm[static_cast<std::size_t>(k)];
    return y + eps;
}

/// Probability of staying adherent at visit k given adherence so far.
inline double adherence_probability(ModelParams const& p, double x, int t, int k, double z)
{
    return logistic(p.gamma0 + p.gamma2 * t + p.gamma1 * x
                    + p.gamma3[static_cast<std::size_t>(k)] * z);
}

/// Generates subject `id` of the dataset keyed by `seed`.
inline SubjectRecord make_subject(ModelParams const& p, std::uint64_t seed, std::int64_t id)
{
    Substream const rng(seed, static_cast<std::uint64_t>(id));
    DrawLayout const slot{p.K};
    auto const K = static_cast<std::size_t>(p.K);

    SubjectRecord r;
    r.id = id;
    r.K = p.K;
    r.x = p.mu_x + p.sigma_x * rng.normal(slot.x());
    r.t_assigned = rng.uniform(slot.treat()) < p.p_treat ? 1 : 0;
    r.z.resize(2 * K);
    r.eta.resize(2 * K);
    r.a_seq.assign(2 * K, 0);
    for (int t = 0; t < 2; ++t) {
        for (int k = 0; k < p.K; ++k) {
            auto const i = static_cast<std::size_t>(t * p.K + k);
            r.eta[i] = p.sigma_eta * rng.normal(slot.eta(t, k));
            r.z[i] = intermediate_value(p, r.x, t, k, r.eta[i]);
        }
        r.eps[static_cast<std::size_t>(t)] = p.sigma_eps * rng.normal(slot.eps(t));
        std::span<double const> const z_arm(r.z.data() + t * p.K, K);
        r.y[static_cast<std::size_t>(t)] =
            outcome_value(p, r.x, t, z_arm, r.eps[static_cast<std::size_t>(t)]);

        bool at_risk = true;
        for (int k = 0; k < p.K; ++k) {
            double const u = rng.uniform(slot.adherence(t, k));
            bool const stays =
                at_risk && u < adherence_probability(p, r.x, t, k, z_arm[static_cast<std::size_t>(k)]);
            r.a_seq[static_cast<std::size_t>(t * p.K + k)] = stays ? 1 : 0;
            at_risk = stays;
        }
        r.a[static_cast<std::size_t>(t)] = at_risk ? 1 : 0;
    }
    return r;
}

/// Generates subjects 0..n-1. Output is identical for any thread count.
inline std::vector<SubjectRecord> generate(ModelParams const& p, std::int64_t n,
                                           std::uint64_t seed, int threads = 0)
{
    std::vector<SubjectRecord> out(static_cast<std::size_t>(n));
    parallel_for(out.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            out[i] = make_subject(p, seed, static_cast<std::int64_t>(i));
    });
    return out;
}

inline std::vector<SubjectRecord> generate(ScenarioConfig const& c, int threads = 0)
{
    return generate(c.params, c.n, c.seed, threads);
}

/// Seed of replicate r of a scenario.
inline std::uint64_t replicate_seed(std::uint64_t seed, int r)
{
    return seed + static_cast<std::uint64_t>(r);
}

inline ObservedRecord observe(SubjectRecord const& r, bool keep_y_after_dropout)
{
    ObservedRecord o;
    o.id = r.id;
    o.x = r.x;
    o.t_assigned = r.t_assigned;
    o.z_obs.resize(static_cast<std::size_t>(r.K));
    int const t = r.t_assigned;
    bool seen = true;  // visit k happens iff adherent through visit k-1
    for (int k = 0; k < r.K; ++k) {
        if (seen) o.z_obs[static_cast<std::size_t>(k)] = r.z_at(t, k);
        seen = seen && r.adhered_at(t, k);
    }
    o.a_obs = r.a[static_cast<std::size_t>(t)];
    if (o.a_obs == 1 || keep_y_after_dropout) o.y_obs = r.y[static_cast<std::size_t>(t)];
    return o;
}

inline std::vector<ObservedRecord> observe(std::span<SubjectRecord const> records,
                                           bool keep_y_after_dropout)
{
    std::vector<ObservedRecord> out;
    out.reserve(records.size());
    for (auto const& r : records) out.push_back(observe(r, keep_y_after_dropout));
    return out;
}

inline void write_subjects_csv(std::ostream& os, std::span<SubjectRecord const> records, int K)
{
    os << "id,x,t";
    for (int t = 0; t < 2; ++t)
        for (int k = 1; k <= K; ++k) os << ",z" << t << '_' << k;
    os << ",y0,y1";
    for (int t = 0; t < 2; ++t)
        for (int k = 1; k <= K; ++k) os << ",a" << t << '_' << k;
    os << ",a0,a1\n";
    for (auto const& r : records) {
        os << r.id << ',' << csv::real(r.x) << ',' << r.t_assigned;
        for (double z : r.z) os << ',' << csv::real(z);
        os << ',' << csv::real(r.y[0]) << ',' << csv::real(r.y[1]);
        for (auto a : r.a_seq) os << ',' << int{a};
        os << ',' << int{r.a[0]} << ',' << int{r.a[1]} << '\n';
    }
}

inline void write_observed_csv(std::ostream& os, std::span<ObservedRecord const> records, int K)
{
    os << "id,x,t";
    for (int k = 1; k <= K; ++k) os << ",z_" << k;
    os << ",a,y\n";
    for (auto const& r : records) {
        os << r.id << ',' << csv::real(r.x) << ',' << r.t_assigned;
        for (auto const& z : r.z_obs) os << ',' << csv::real(z);
        os << ',' << r.a_obs << ',' << csv::real(r.y_obs) << '\n';
    }
}

}  // namespace pstrat
