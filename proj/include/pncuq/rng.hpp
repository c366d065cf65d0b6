#pragma once

#include <cstdint>
#include <random>

namespace pncuq {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// A keyed random stream. Two streams with equal (master_seed, stream_id)
/// produce identical draws; derived streams are keyed by hashing the parent
/// id with a tag, so the result never depends on scheduling order.
struct RngStream {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;

    /// Child stream for a sub-task (repetition, batch, network role, ...).
    [[nodiscard]] RngStream derive(std::uint64_t tag) const noexcept {
        return {master_seed, detail::splitmix64(stream_id ^ detail::splitmix64(tag + 0x51ed2701ULL))};
    }

    [[nodiscard]] std::mt19937_64 engine() const {
        const std::uint64_t a = detail::splitmix64(master_seed);
        const std::uint64_t b = detail::splitmix64(a ^ stream_id);
        std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
        return std::mt19937_64(seq);
    }

    friend bool operator==(const RngStream&, const RngStream&) = default;
};

/// Stream roles used across the library so that seeds never collide.
namespace stream_tag {
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t init = 2;
inline constexpr std::uint64_t mean_init = 3;
inline constexpr std::uint64_t resample = 4;
inline constexpr std::uint64_t split = 5;
inline constexpr std::uint64_t batch = 6;
inline constexpr std::uint64_t member = 7;
inline constexpr std::uint64_t test_set = 8;
inline constexpr std::uint64_t noise = 9;
}  // namespace stream_tag

}  // namespace pncuq
