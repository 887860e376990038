#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stylefp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed files, bad config values, missing paths.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Structural contract breaches: dimension mismatches, unknown layer names.
class SpecError : public Error {
public:
    using Error::Error;
};

// Failure inside a caption/reconstruction provider; carries the provider name.
class ProviderError : public Error {
public:
    ProviderError(std::string provider, const std::string& what)
        : Error("provider '" + provider + "': " + what), provider_(std::move(provider)) {}
    const std::string& provider() const { return provider_; }

private:
    std::string provider_;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Training degenerated into the all-points-to-center solution.
class CollapseError : public Error {
public:
    CollapseError(const std::string& what, int epoch, double mean_pos, double mean_neg)
        : Error(what), epoch(epoch), mean_pos_distance(mean_pos), mean_neg_distance(mean_neg) {}
    int epoch;
    double mean_pos_distance;
    double mean_neg_distance;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derives an independent stream id from a base seed and a label, so each
// consumer (sampler, init, augmentation, ...) gets its own sequence.
std::uint64_t derive_seed(std::uint64_t base, const std::string& tag);
std::uint64_t derive_seed(std::uint64_t base, const std::string& tag, std::uint64_t index);

// Deterministic generator. The raw engine is xoshiro256**, seeded via
// splitmix64; normal variates use Box-Muller so the sequence does not depend
// on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    // Standard normal.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace stylefp
