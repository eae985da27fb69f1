#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <vector>

namespace qnndyn {

// Splittable random stream keyed by (seed, stream_id). Two streams with the
// same key produce identical draw sequences; distinct stream_ids decorrelate.
// Gaussian draws use an explicit Box-Muller transform on top of mt19937_64 so
// that sequences do not depend on the standard library's distribution
// implementation.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64();

    // uniform double in [0, 1)
    double uniform();

    // standard normal N(0, 1)
    double normal();

    // complex Gaussian with independent N(0,1) real and imaginary parts
    std::complex<double> complex_normal();

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace qnndyn
