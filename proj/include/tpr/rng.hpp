#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Core>

namespace tpr {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Output is a pure function of (key, counter), so any draw can be
/// regenerated without replaying the draws before it.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter apply(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9u;
                key[1] += 0xBB67AE85u;
            }
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Mixes a parent seed with a child identifier into an independent seed.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t child) noexcept {
    return splitmix64(splitmix64(parent) ^ (child * 0xD6E8FEB86659FD93ull + 0x632BE59BD9B4E019ull));
}

/// Random-access stream of U(0,1) and N(0,1) variates addressed by
/// (seed, stream, replication, index).
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t replication = 0) noexcept {
        const std::uint64_t k = derive_seed(seed, stream);
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
        rep_lo_ = static_cast<std::uint32_t>(replication);
        rep_hi_ = static_cast<std::uint32_t>(replication >> 32);
    }

    /// Pair of uniforms in (0,1) for block `block`.
    std::array<double, 2> uniforms(std::uint64_t block) const noexcept {
        const auto out = Philox4x32::apply(
            {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32), rep_lo_, rep_hi_},
            key_);
        return {to_unit(out[0], out[1]), to_unit(out[2], out[3])};
    }

    double uniform(std::uint64_t index) const noexcept { return uniforms(index / 2)[index % 2]; }

    /// Standard normal number `index` (Box-Muller on block index/2).
    double normal(std::uint64_t index) const noexcept {
        const auto [u1, u2] = uniforms(index / 2);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        return (index % 2 == 0) ? r * std::cos(a) : r * std::sin(a);
    }

    /// Fills `out` with normals index0, index0+1, ...
    template <typename Derived>
    void fill_normal(Derived&& out, std::uint64_t index0 = 0) const noexcept {
        for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal(index0 + static_cast<std::uint64_t>(i));
    }

private:
    static double to_unit(std::uint32_t a, std::uint32_t b) noexcept {
        const std::uint64_t bits = (std::uint64_t{a} << 21) ^ (std::uint64_t{b} >> 11);
        return (static_cast<double>(bits & ((1ull << 53) - 1)) + 0.5) * 0x1.0p-53;
    }

    std::array<std::uint32_t, 2> key_{};
    std::uint32_t rep_lo_ = 0;
    std::uint32_t rep_hi_ = 0;
};

/// Stream identifiers, kept distinct so that no two simulated objects share draws.
namespace streams {
inline constexpr std::uint64_t innovations = 1;
inline constexpr std::uint64_t threshold_variable = 2;
inline constexpr std::uint64_t brownian_x = 11;
inline constexpr std::uint64_t brownian_sheet = 12;
inline constexpr std::uint64_t brownian_w = 13;
inline constexpr std::uint64_t bridge = 14;
inline constexpr std::uint64_t two_sided = 15;
inline constexpr std::uint64_t znphi = 16;
inline constexpr std::uint64_t bootstrap = 17;
}  // namespace streams

}  // namespace tpr
