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
#include <array>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

namespace pstrat {

inline int resolve_threads(int requested) noexcept
{
    if (requested > 0) return requested;
    unsigned const hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend on `threads`, so bodies must only write to per-index outputs.
/// The first exception thrown by any worker is rethrown on the caller.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body)
{
    int const workers = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)),
                              std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        if (n > 0) body(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    std::size_t const chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        std::size_t const begin = std::min(n, chunk * w);
        std::size_t const end = std::min(n, begin + chunk);
        pool.emplace_back([&, begin, end] {
            try {
                if (begin < end) body(begin, end);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Pairwise (cascade) summation of term(i) for i in [0, n). The tree shape
/// depends only on n, so the result is reproducible bit-for-bit.
template <class Term>
double pairwise_sum(std::size_t n, Term&& term)
{
    constexpr std::size_t kLeaf = 64;
    auto rec = [&](auto&& self, std::size_t lo, std::size_t hi) -> double {
        if (hi - lo <= kLeaf) {
            double s = 0.0;
            for (std::size_t i = lo; i < hi; ++i) s += term(i);
            return s;
        }
        std::size_t const mid = lo + (hi - lo) / 2;
        return self(self, lo, mid) + self(self, mid, hi);
    };
    return n == 0 ? 0.0 : rec(rec, 0, n);
}

inline double pairwise_sum(std::span<double const> v)
{
    return pairwise_sum(v.size(), [&](std::size_t i) { return v[i]; });
}

/// Exact running sum of doubles (Shewchuk's non-overlapping partials). The
/// result is the correctly rounded sum, so it does not depend on the order or
/// grouping of the terms.
class ExactSum {
public:
    void add(double x)
    {
        std::size_t kept = 0;
        for (double y : partials_) {
            if (std::abs(x) < std::abs(y)) std::swap(x, y);
            double const hi = x + y;
            double const lo = y - (hi - x);
            if (lo != 0.0) partials_[kept++] = lo;
            x = hi;
        }
        partials_.resize(kept);
        partials_.push_back(x);
    }

    void add(ExactSum const& other)
    {
        for (double y : other.partials_) add(y);
    }

    double value() const
    {
        if (partials_.empty()) return 0.0;
        auto i = partials_.size() - 1;
        double hi = partials_[i];
        double lo = 0.0;
        while (i > 0) {
            double const x = hi;
            double const y = partials_[--i];
            hi = x + y;
            lo = y - (hi - x);
            if (lo != 0.0) break;
        }
        // Round-half-even correction across the remaining partials.
        if (i > 0 && ((lo < 0.0 && partials_[i - 1] < 0.0) || (lo > 0.0 && partials_[i - 1] > 0.0))) {
            double const y = lo * 2.0;
            double const x = hi + y;
            if (y == x - hi) hi = x;
        }
        return hi;
    }

private:
    std::vector<double> partials_;
};

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // sample SD (n - 1 denominator); 0 when n < 2
    std::size_t n = 0;
};

/// Two-pass mean and sample SD with pairwise sums.
inline MeanSd mean_sd(std::span<double const> v)
{
    MeanSd out;
    out.n = v.size();
    if (v.empty()) return out;
    out.mean = pairwise_sum(v) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double const ss = pairwise_sum(v.size(), [&](std::size_t i) {
            double const d = v[i] - out.mean;
            return d * d;
        });
        out.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return out;
}

inline double logistic(double u) noexcept
{
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    double const e = std::exp(u);
    return e / (1.0 + e);
}

/// log(1 + exp(u)) without overflow.
inline double log1p_exp(double u) noexcept
{
    return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

inline double standard_normal_cdf(double z) noexcept
{
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

/// Inverse standard normal CDF: Acklam's rational approximation followed by
/// one Halley step, accurate to about 1e-15 on (0, 1).
inline double standard_normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal quantile needs p in (0, 1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double low = 0.02425;
    double x = 0.0;
    if (p < low) {
        double const q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - low) {
        double const q = p - 0.5;
        double const r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double const q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double const e = standard_normal_cdf(x) - p;
    double const u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

/// Cholesky factorization in place; returns false if not positive definite.
template <std::size_t N>
bool cholesky(std::array<double, N * N>& a)
{
    for (std::size_t j = 0; j < N; ++j) {
        double d = a[j * N + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * N + k] * a[j * N + k];
        if (!(d > 0.0)) return false;
        d = std::sqrt(d);
        a[j * N + j] = d;
        for (std::size_t i = j + 1; i < N; ++i) {
            double s = a[i * N + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * N + k] * a[j * N + k];
            a[i * N + j] = s / d;
        }
    }
    return true;
}

/// Solves L L' x = b given the factor from cholesky().
template <std::size_t N>
std::array<double, N> cholesky_solve(std::array<double, N * N> const& l,
                                     std::array<double, N> b)
{
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t k = 0; k < i; ++k) b[i] -= l[i * N + k] * b[k];
        b[i] /= l[i * N + i];
    }
    for (std::size_t i = N; i-- > 0;) {
        for (std::size_t k = i + 1; k < N; ++k) b[i] -= l[k * N + i] * b[k];
        b[i] /= l[i * N + i];
    }
    return b;
}

/// Inverse of an SPD matrix from its Cholesky factor.
template <std::size_t N>
std::array<double, N * N> cholesky_inverse(std::array<double, N * N> const& l)
{
    std::array<double, N * N> inv{};
    for (std::size_t c = 0; c < N; ++c) {
        std::array<double, N> e{};
        e[c] = 1.0;
        auto const col = cholesky_solve<N>(l, e);
        for (std::size_t r = 0; r < N; ++r) inv[r * N + c] = col[r];
    }
    return inv;
}

}  // namespace pstrat
