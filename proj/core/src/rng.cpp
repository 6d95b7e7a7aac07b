#include "maskoff/rng.hpp"

#include <cmath>
#include <cstdio>

#include "maskoff/common.hpp"

namespace maskoff {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
}

Rng Rng::keyed(uint64_t seed, uint64_t index) {
    uint64_t sm = seed;
    uint64_t a = splitmix64(sm);
    sm = a ^ (index * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    Rng r;
    for (auto& w : r.s_) w = splitmix64(sm);
    return r;
}

uint64_t Rng::next_u64() {
    uint64_t result = rotl(s_[1] * 5, 7) * 9;
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    // 53 mantissa bits.
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

uint64_t Rng::uniform_int(uint64_t n) {
    MASKOFF_CHECK(n > 0, "uniform_int: n must be positive");
    // Rejection sampling to avoid modulo bias.
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double Rng::normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::string Rng::state_hex() const {
    char buf[4 * 16 + 1];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx%016llx%016llx",
                  (unsigned long long)s_[0], (unsigned long long)s_[1],
                  (unsigned long long)s_[2], (unsigned long long)s_[3]);
    return std::string(buf);
}

void Rng::set_state_hex(const std::string& hex) {
    MASKOFF_CHECK(hex.size() == 64, "rng state must be 64 hex chars, got ", hex.size());
    for (int i = 0; i < 4; ++i) {
        uint64_t w = 0;
        for (int j = 0; j < 16; ++j) {
            char c = hex[i * 16 + j];
            uint64_t d;
            if (c >= '0' && c <= '9') d = c - '0';
            else if (c >= 'a' && c <= 'f') d = 10 + (c - 'a');
            else if (c >= 'A' && c <= 'F') d = 10 + (c - 'A');
            else { fail("invalid hex char in rng state"); }
            w = (w << 4) | d;
        }
        s_[i] = w;
    }
}

}  // namespace maskoff
