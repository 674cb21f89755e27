#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace shapepu {

// Deterministic RNG wrapper. All draws go through hand-rolled transforms of
// mt19937_64 output so that sequences are identical across standard library
// implementations (std distributions are not portable).
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int uniform_int(int n) {
        return n <= 1 ? 0 : static_cast<int>(eng_() % static_cast<uint64_t>(n));
    }

    // standard normal via Box-Muller, second value cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// splitmix64 finalizer, used to derive well-separated per-stream seeds
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Independent stream per (seed, a, b), e.g. (global_seed, image_index, epoch).
// Plain XOR of the inputs would collide; hash each component first.
inline uint64_t stream_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    return mix_seed(seed ^ mix_seed(a ^ 0x5851F42D4C957F2Dull) ^ mix_seed(b ^ 0x14057B7EF767814Full));
}

}  // namespace shapepu
