#pragma once

#include <cstdint>
#include <limits>

namespace pmlab {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream tags keep independent uses of one master seed apart.
enum class StreamTag : std::uint64_t {
    initial_point = 1,
    schedule_offsets = 2,
    omega = 3,
    trajectory = 4,
    synthetic = 5,
    scan = 6,
};

/// Key for the (master, index, tag) triple. Pure function, so any partition
/// of indices across workers sees the same keys.
constexpr std::uint64_t derive_key(std::uint64_t master, std::uint64_t index,
                                   StreamTag tag) noexcept
{
    std::uint64_t k = mix64(master + kGolden);
    k = mix64(k ^ (index + 1) * kGolden);
    return mix64(k ^ static_cast<std::uint64_t>(tag) * 0xd1b54a32d192ed03ULL);
}

/// Counter-based generator: output k is mix64(key + (k+1)*golden), i.e. the
/// SplitMix64 sequence started at `key`. Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    constexpr explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept
    {
        return std::numeric_limits<result_type>::max();
    }

    constexpr result_type operator()() noexcept { return at(counter_++); }

    /// Random access into the stream.
    constexpr result_type at(std::uint64_t k) const noexcept
    {
        return mix64(key_ + (k + 1) * kGolden);
    }

    /// Uniform double in [0,1) with 53 random bits.
    constexpr double uniform() noexcept { return to_unit(operator()()); }

    static constexpr double to_unit(std::uint64_t bits) noexcept
    {
        return static_cast<double>(bits >> 11) * 0x1.0p-53;
    }

    constexpr std::uint64_t position() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace pmlab
