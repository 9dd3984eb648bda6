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
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pstrat/csv.hpp"
#include "pstrat/datagen.hpp"
#include "pstrat/numeric.hpp"

namespace pstrat {

/// Requirement on one arm's potential adherence.
enum class Adherence { No, Yes, Any };

/// A principal stratum as a predicate on (A(0), A(1)).
struct StratumLabel {
    Adherence under_control = Adherence::Any;
    Adherence under_treatment = Adherence::Any;

    friend bool operator==(StratumLabel, StratumLabel) = default;

    std::string name() const
    {
        auto part = [](Adherence a) {
            switch (a) {
            case Adherence::No: return std::string("minus");
            case Adherence::Yes: return std::string("plus");
            case Adherence::Any: break;
            }
            return std::string("star");
        };
        return "S_" + part(under_control) + "_" + part(under_treatment);
    }
};

/// Adherent under both arms.
inline constexpr StratumLabel kPlusPlus{Adherence::Yes, Adherence::Yes};
/// Adherent under treatment, whatever happens under control.
inline constexpr StratumLabel kStarPlus{Adherence::Any, Adherence::Yes};
/// Adherent under control, whatever happens under treatment.
inline constexpr StratumLabel kPlusStar{Adherence::Yes, Adherence::Any};

class EmptyStratumError : public std::runtime_error {
public:
    explicit EmptyStratumError(StratumLabel label)
        : std::runtime_error("empty stratum " + label.name())
    {
    }
};

inline bool matches(Adherence req, int a)
{
    return req == Adherence::Any || (req == Adherence::Yes) == (a == 1);
}

inline bool classify(SubjectRecord const& r, StratumLabel label)
{
    return matches(label.under_control, r.a[0]) && matches(label.under_treatment, r.a[1]);
}

struct EffectEstimate {
    double value = 0.0;
    double se = 0.0;
    std::int64_t n_members = 0;
    StratumLabel stratum;
};

namespace detail {

/// Member indices in ascending id order, so reductions do not depend on the
/// order records were supplied in.
inline std::vector<std::size_t> members_by_id(std::span<SubjectRecord const> records,
                                              StratumLabel label)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (classify(records[i], label)) idx.push_back(i);
    bool const sorted = std::is_sorted(idx.begin(), idx.end(), [&](auto a, auto b) {
        return records[a].id < records[b].id;
    });
    if (!sorted)
        std::sort(idx.begin(), idx.end(),
                  [&](auto a, auto b) { return records[a].id < records[b].id; });
    return idx;
}

inline double contrast(SubjectRecord const& r) { return r.y[1] - r.y[0]; }

}  // namespace detail

/// Mean and paired SE of Y(1) - Y(0) over the stratum's members.
inline EffectEstimate oracle_effect(std::span<SubjectRecord const> records, StratumLabel label)
{
    auto const idx = detail::members_by_id(records, label);
    if (idx.empty()) throw EmptyStratumError(label);
    std::vector<double> d(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) d[i] = detail::contrast(records[idx[i]]);
    auto const ms = mean_sd(d);
    return {ms.mean, ms.sd / std::sqrt(static_cast<double>(d.size())),
            static_cast<std::int64_t>(d.size()), label};
}

/// oracle_effect(generate(p, n, seed), label) for each label, without
/// materializing the records. Results are bit-identical to that route.
inline std::vector<EffectEstimate> streamed_oracle_effects(ModelParams const& p, std::int64_t n,
                                                           std::uint64_t seed,
                                                           std::span<StratumLabel const> labels,
                                                           int threads = 0)
{
    auto const count = static_cast<std::size_t>(n);
    std::vector<double> d(count);
    std::vector<std::uint8_t> a0(count), a1(count);
    parallel_for(count, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto const r = make_subject(p, seed, static_cast<std::int64_t>(i));
            d[i] = detail::contrast(r);
            a0[i] = r.a[0];
            a1[i] = r.a[1];
        }
    });
    std::vector<EffectEstimate> out;
    std::vector<double> member;
    for (auto const label : labels) {
        member.clear();
        for (std::size_t i = 0; i < count; ++i)
            if (matches(label.under_control, a0[i]) && matches(label.under_treatment, a1[i]))
                member.push_back(d[i]);
        if (member.empty()) throw EmptyStratumError(label);
        auto const ms = mean_sd(member);
        out.push_back({ms.mean, ms.sd / std::sqrt(static_cast<double>(member.size())),
                       static_cast<std::int64_t>(member.size()), label});
    }
    return out;
}

struct TowerCheck {
    double lhs = 0.0;  // E[E[D | X bin]]: bin sums combined with weights n_b / m
    double rhs = 0.0;  // direct stratum mean of D = Y(1) - Y(0)
    double se = 0.0;   // SE of the direct mean
    std::int64_t n_members = 0;
    int n_bins = 0;    // non-empty bins used
};

/// Iterated expectation over equal-frequency X bins among stratum members.
/// Both sides are formed from exactly accumulated sums, so on any dataset the
/// identity holds bit-for-bit unless a member is dropped or double-counted.
inline TowerCheck tower_check(std::span<SubjectRecord const> records,
                              StratumLabel label = kStarPlus, int n_bins = 20)
{
    if (n_bins < 2) throw std::invalid_argument("tower_check needs n_bins >= 2");
    auto const direct = oracle_effect(records, label);

    auto idx = detail::members_by_id(records, label);
    ExactSum direct_sum;
    for (auto i : idx) direct_sum.add(detail::contrast(records[i]));

    std::stable_sort(idx.begin(), idx.end(),
                     [&](auto a, auto b) { return records[a].x < records[b].x; });
    std::size_t const m = idx.size();
    ExactSum grouped;
    int used = 0;
    for (int b = 0; b < n_bins; ++b) {
        std::size_t const lo = m * static_cast<std::size_t>(b) / static_cast<std::size_t>(n_bins);
        std::size_t const hi =
            m * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(n_bins);
        if (hi == lo) continue;
        // n_b * mean_b, kept exact
        ExactSum bin;
        for (std::size_t i = lo; i < hi; ++i) bin.add(detail::contrast(records[idx[i]]));
        grouped.add(bin);
        ++used;
    }
    double const md = static_cast<double>(m);
    return {grouped.value() / md, direct_sum.value() / md, direct.se, direct.n_members, used};
}

/// Selection shifts of each arm's mean outcome induced by conditioning on
/// A(1) = 1.
struct BiasDecomposition {
    double mean_y1_given_A1 = 0.0;
    double mean_y0_given_A1 = 0.0;
    double mean_y1 = 0.0;
    double mean_y0 = 0.0;
    double shift_arm1 = 0.0;  // mean_y1_given_A1 - mean_y1
    double shift_arm0 = 0.0;  // mean_y0_given_A1 - mean_y0
    double se_shift_difference = 0.0;  // influence-function SE of shift_arm1 - shift_arm0
    std::int64_t n_members = 0;
    std::int64_t n = 0;
};

inline BiasDecomposition bias_decomposition(std::span<SubjectRecord const> records)
{
    auto const idx = detail::members_by_id(records, kStarPlus);
    if (idx.empty()) throw EmptyStratumError(kStarPlus);
    auto const all = detail::members_by_id(records, StratumLabel{});
    double const n = static_cast<double>(all.size());
    double const m = static_cast<double>(idx.size());

    BiasDecomposition out;
    out.n = static_cast<std::int64_t>(all.size());
    out.n_members = static_cast<std::int64_t>(idx.size());
    out.mean_y1_given_A1 = pairwise_sum(idx.size(), [&](std::size_t i) { return records[idx[i]].y[1]; }) / m;
    out.mean_y0_given_A1 = pairwise_sum(idx.size(), [&](std::size_t i) { return records[idx[i]].y[0]; }) / m;
    out.mean_y1 = pairwise_sum(all.size(), [&](std::size_t i) { return records[all[i]].y[1]; }) / n;
    out.mean_y0 = pairwise_sum(all.size(), [&](std::size_t i) { return records[all[i]].y[0]; }) / n;
    out.shift_arm1 = out.mean_y1_given_A1 - out.mean_y1;
    out.shift_arm0 = out.mean_y0_given_A1 - out.mean_y0;

    double const member_mean = out.mean_y1_given_A1 - out.mean_y0_given_A1;
    double const overall_mean = out.mean_y1 - out.mean_y0;
    double const share = m / n;
    std::vector<double> psi(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        auto const& r = records[all[i]];
        double const d = detail::contrast(r);
        double const member = r.a[1] == 1 ? 1.0 : 0.0;
        psi[i] = member * (d - member_mean) / share - (d - overall_mean);
    }
    out.se_shift_difference = mean_sd(psi).sd / std::sqrt(n);
    return out;
}

inline void write_effects_header(std::ostream& os)
{
    os << "scenario_label,stratum,n_members,value,se\n";
}

inline void write_effects_row(std::ostream& os, std::string const& scenario_label,
                              std::string const& stratum, std::int64_t n_members,
                              double value, double se)
{
    os << csv::text(scenario_label) << ',' << stratum << ',' << n_members << ','
       << csv::real(value) << ',' << csv::real(se) << '\n';
}

inline void write_effects_row(std::ostream& os, std::string const& scenario_label,
                              EffectEstimate const& e)
{
    write_effects_row(os, scenario_label, e.stratum.name(), e.n_members, e.value, e.se);
}

}  // namespace pstrat
