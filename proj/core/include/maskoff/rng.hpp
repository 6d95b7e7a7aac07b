#ifndef MASKOFF_RNG_HPP
#define MASKOFF_RNG_HPP

#include <array>
#include <cstdint>
#include <string>

namespace maskoff {

// xoshiro256** with splitmix64 seeding. Self-contained so that sampled
// streams are identical across platforms and standard libraries, and the
// full state round-trips through checkpoints.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed);

    // Independent stream for worker i of a seeded run; used so that
    // per-item randomness does not depend on processing order.
    static Rng keyed(uint64_t seed, uint64_t index);

    uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n);
    // Standard normal via Box-Muller (no cached spare, stateless apart
    // from the counter stream).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::array<uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

    // Hex serialization of the four state words, for checkpoints.
    std::string state_hex() const;
    void set_state_hex(const std::string& hex);

private:
    std::array<uint64_t, 4> s_{};
};

}  // namespace maskoff

#endif
