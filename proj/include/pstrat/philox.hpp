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
#include <cstdint>
#include <numbers>

namespace pstrat {

// Philox4x32-10 (Salmon et al., SC'11). Stateless: a 128-bit counter and a
// 64-bit key map to 128 random bits, so any draw can be addressed directly.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter block(Counter ctr, Key key) noexcept
    {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            ctr = single_round(ctr, key);
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    static constexpr Counter single_round(Counter const& c, Key const& k) noexcept
    {
        std::uint64_t const p0 = static_cast<std::uint64_t>(kM0) * c[0];
        std::uint64_t const p1 = static_cast<std::uint64_t>(kM1) * c[2];
        auto const hi0 = static_cast<std::uint32_t>(p0 >> 32);
        auto const lo0 = static_cast<std::uint32_t>(p0);
        auto const hi1 = static_cast<std::uint32_t>(p1 >> 32);
        auto const lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

// Uniform in [0, 1) from 53 bits.
constexpr double to_unit_interval(std::uint32_t hi, std::uint32_t lo) noexcept
{
    std::uint64_t const bits =
        ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
}

/// A random substream addressed by (seed, stream id). Draw number `slot`
/// always yields the same value, independent of which other slots were
/// consumed or in what order.
class Substream {
public:
    constexpr Substream(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed),
               static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream)
    {
    }

    constexpr Philox4x32::Counter bits(std::uint64_t slot) const noexcept
    {
        return Philox4x32::block({static_cast<std::uint32_t>(slot),
                                  static_cast<std::uint32_t>(slot >> 32),
                                  static_cast<std::uint32_t>(stream_),
                                  static_cast<std::uint32_t>(stream_ >> 32)},
                                 key_);
    }

    /// Uniform on [0, 1).
    constexpr double uniform(std::uint64_t slot) const noexcept
    {
        auto const b = bits(slot);
        return to_unit_interval(b[0], b[1]);
    }

    /// Standard normal via Box-Muller on the two halves of one block.
    double normal(std::uint64_t slot) const noexcept
    {
        auto const b = bits(slot);
        double const u1 = 1.0 - to_unit_interval(b[0], b[1]);  // (0, 1]
        double const u2 = to_unit_interval(b[2], b[3]);
        return std::sqrt(-2.0 * std::log(u1))
               * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, bound) by rejection; `slot` advances past
    /// rejected draws, so callers must reserve a slot range.
    std::uint64_t below(std::uint64_t& slot, std::uint64_t bound) const noexcept
    {
        std::uint64_t const limit = UINT64_MAX - UINT64_MAX % bound;
        for (;;) {
            auto const b = bits(slot++);
            std::uint64_t const v = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
            if (v < limit) return v % bound;
        }
    }

private:
    Philox4x32::Key key_;
    std::uint64_t stream_;
};

}  // namespace pstrat
