#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace wr {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_name(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Seed for the substream owned by (master, id, tag). Streams for different
// seekers never depend on the order in which they are generated.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t id, std::uint64_t tag = 0) {
    return splitmix64(splitmix64(master ^ splitmix64(id + 0x632BE59BD9B4E019ULL)) ^ splitmix64(tag));
}

class Stream {
public:
    explicit Stream(std::uint64_t seed) : eng_(seed) {}
    Stream(std::uint64_t master, std::uint64_t id, std::uint64_t tag)
        : eng_(substream_seed(master, id, tag)) {}

    // open interval (0,1)
    double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }
    double normal() { return nd_(eng_); }
    double logistic(double scale = 1.0) {
        double u = uniform();
        return scale * std::log(u / (1.0 - u));
    }
    bool bernoulli(double p) { return uniform() < p; }
    std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(eng_); }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> nd_;
};

}  // namespace wr
