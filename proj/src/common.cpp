#include "stylefp/common.hpp"

#include <cmath>

namespace stylefp {

std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
    std::uint64_t h = splitmix64(base);
    for (unsigned char c : tag) {
        h = splitmix64(h ^ c);
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& tag, std::uint64_t index) {
    return splitmix64(derive_seed(base, tag) ^ splitmix64(index));
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& lane : state_) {
        s = splitmix64(s);
        lane = s;
    }
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

std::uint64_t Rng::next_u64() {
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

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) {
        throw NumericError("uniform_int: n must be positive");
    }
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = 0;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

}  // namespace stylefp
