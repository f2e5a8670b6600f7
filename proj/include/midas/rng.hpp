#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace midas {

// SplitMix64 finalizer; a bijective mixer on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Child seed keyed by (parent, stream, index). Independent of call order, so
// replications seeded this way reproduce under any thread schedule.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream, std::uint64_t index = 0)
{
    return splitmix64(splitmix64(splitmix64(parent) ^ stream) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream, std::uint64_t index = 0)
{
    return derive_seed(parent, fnv1a(stream), index);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    double gamma(double shape, double scale)
    {
        return std::gamma_distribution<double>(shape, scale)(engine_);
    }

    // Inverse-Gamma(shape, rate) via the reciprocal of a Gamma(shape, 1/rate) draw.
    double inverse_gamma(double shape, double rate) { return 1.0 / gamma(shape, 1.0 / rate); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace midas
