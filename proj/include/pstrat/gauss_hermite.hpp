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
#include <numbers>
#include <stdexcept>
#include <vector>

namespace pstrat {

/// Gauss-Hermite rule for expectations under the standard normal:
/// E[f(Z)] ~ w0 f(0) + sum_i w_i (f(z_i) + f(-z_i)).
///
/// Nodes are kept as symmetric pairs so odd integrands cancel exactly when
/// summed pairwise.
struct GaussHermiteRule {
    std::vector<double> nodes;    // positive nodes z_i
    std::vector<double> weights;  // weight of each of z_i and -z_i
    double center_weight = 0.0;   // weight of the node at 0 (odd order only)

    int order() const
    {
        return static_cast<int>(2 * nodes.size()) + (center_weight > 0.0 ? 1 : 0);
    }

    template <class F>
    double expectation(F&& f) const
    {
        double s = center_weight > 0.0 ? center_weight * f(0.0) : 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            s += weights[i] * (f(nodes[i]) + f(-nodes[i]));
        return s;
    }
};

inline constexpr int kMaxGaussHermiteOrder = 400;

/// Golub-Welsch: the nodes are the eigenvalues of the Jacobi matrix of the
/// probabilists' Hermite recurrence (zero diagonal, off-diagonal sqrt(j)) and
/// each weight is the squared first component of its unit eigenvector. The
/// symmetric tridiagonal eigenproblem is solved by implicit QL with Wilkinson
/// shifts, rotating only the first row of the eigenvector matrix.
inline GaussHermiteRule gauss_hermite(int order)
{
    if (order < 1 || order > kMaxGaussHermiteOrder)
        throw std::invalid_argument("Gauss-Hermite order must be in [1, 400]");
    auto const n = static_cast<std::size_t>(order);
    std::vector<double> d(n, 0.0);
    std::vector<double> e(n, 0.0);  // e[i] couples i and i+1
    for (std::size_t i = 0; i + 1 < n; ++i) e[i] = std::sqrt(static_cast<double>(i + 1));
    std::vector<double> first(n, 0.0);
    first[0] = 1.0;

    for (std::size_t l = 0; l < n; ++l) {
        int iterations = 0;
        for (;;) {
            std::size_t m = l;
            for (; m + 1 < n; ++m) {
                double const dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= 1e-17 * dd || std::abs(e[m]) < 1e-300) break;
            }
            if (m == l) break;
            if (++iterations > 60) throw std::runtime_error("Gauss-Hermite eigen-iteration did not converge");
            double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            double r = std::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
            double s = 1.0;
            double c = 1.0;
            double p = 0.0;
            bool underflow = false;
            for (std::size_t i = m; i-- > l;) {
                double f = s * e[i];
                double const b = c * e[i];
                r = std::hypot(f, g);
                e[i + 1] = r;
                if (r == 0.0) {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = first[i + 1];
                first[i + 1] = s * first[i] + c * f;
                first[i] = c * first[i] - s * f;
            }
            if (underflow) continue;
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return d[a] > d[b]; });

    // Pair the k-th largest with the k-th smallest and symmetrize.
    GaussHermiteRule rule;
    for (std::size_t k = 0; k < n / 2; ++k) {
        auto const hi = idx[k];
        auto const lo = idx[n - 1 - k];
        rule.nodes.push_back(0.5 * (d[hi] - d[lo]));
        rule.weights.push_back(0.5 * (first[hi] * first[hi] + first[lo] * first[lo]));
    }
    if (n % 2 == 1) {
        auto const mid = idx[n / 2];
        rule.center_weight = first[mid] * first[mid];
    }
    return rule;
}

}  // namespace pstrat
