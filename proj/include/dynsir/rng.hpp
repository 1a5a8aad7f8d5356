#ifndef DYNSIR_RNG_HPP
#define DYNSIR_RNG_HPP

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace dynsir {

/// SplitMix64 finalizer. Used both to seed engines and to derive substream keys.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stream splitting: the key of a child stream is a pure function of the
/// parent key and the child labels, folded left to right through SplitMix64.
/// derive_seed(master, {run, attempt}) names the stream of one simulation
/// attempt; derive_seed(run_key, {individual}) names a per-individual stream.
inline std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> labels) noexcept
{
    std::uint64_t key = splitmix64(parent);
    for (auto label : labels) {
        key = splitmix64(key ^ splitmix64(label + 0x632be59bd9b4e019ULL));
    }
    return key;
}

/// xoshiro256** engine (Blackman & Vigna). Cheap to seed, which matters because
/// every infected individual gets its own stream.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed = 0) noexcept { this->seed(seed); }

    void seed(std::uint64_t seed) noexcept
    {
        std::uint64_t x = seed;
        for (auto& w : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            w = z ^ (z >> 31);
        }
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) built from the top 53 bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1]; safe to take the logarithm of.
    double uniform_pos() noexcept { return 1.0 - uniform(); }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> state_{};
};

} // namespace dynsir

#endif
