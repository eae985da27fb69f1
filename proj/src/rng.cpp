#include "qnndyn/rng.hpp"

#include <cmath>
#include <numbers>

namespace qnndyn {

namespace {

// SplitMix64 finalizer, used to turn the (seed, stream) pair into one
// well-mixed engine seed.
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
    std::uint64_t key = splitmix64(seed);
    key ^= splitmix64(stream_id + 0x632BE59BD9B4E019ULL);
    engine_.seed(splitmix64(key));
}

std::uint64_t RngStream::next_u64() { return engine_(); }

double RngStream::uniform() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 shifted into (0, 1] so the log is finite
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

std::complex<double> RngStream::complex_normal() {
    double re = normal();
    double im = normal();
    return {re, im};
}

std::uint64_t RngStream::below(std::uint64_t n) {
    // modulo bias is ~2^-60 for our n and irrelevant next to determinism
    return n == 0 ? 0 : next_u64() % n;
}

}  // namespace qnndyn
