#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>

namespace fedsa {

// Stream tags for the non-client consumers of randomness. Client streams use
// the client id directly, so tags sit far above any realistic client count.
namespace stream {
inline constexpr std::uint64_t kInit = 1ull << 40;
inline constexpr std::uint64_t kPartition = kInit + 1;
inline constexpr std::uint64_t kSampling = kInit + 2;
inline constexpr std::uint64_t kDataset = kInit + 3;
inline constexpr std::uint64_t kAggregator = kInit + 4;
inline constexpr std::uint64_t kAttack = kInit + 5;
inline constexpr std::uint64_t kServer = kInit + 6;
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// A reproducible random source keyed by (seed, stream). Two instances built
// from the same pair produce the same draws.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_(stream_id), engine_(splitmix64(seed ^ splitmix64(stream_id + 0x5151))) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }

    // Independent child stream; does not advance this one.
    RngStream derive(std::uint64_t sub) const { return RngStream(splitmix64(seed_ ^ (stream_ << 1)), sub); }

    std::mt19937_64& engine() noexcept { return engine_; }

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    template <typename T>
    void shuffle(std::span<T> xs) {
        std::shuffle(xs.begin(), xs.end(), engine_);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

}  // namespace fedsa
