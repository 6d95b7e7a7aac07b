#ifndef MASKOFF_CHECKPOINT_HPP
#define MASKOFF_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "maskoff/nn.hpp"
#include "maskoff/tensor.hpp"

namespace maskoff::ckpt {

inline constexpr uint32_t kFormatVersion = 1;

struct Blob {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

// Versioned binary container: config echo, counters, PRNG state and named
// double-precision blobs. Writing is fully determined by the struct contents,
// so load→save round-trips byte-identically. Mismatched format versions are
// refused on load.
struct Checkpoint {
    uint32_t version = kFormatVersion;
    std::string config;  // echoed plain-text config
    int64_t epoch = 0;
    int64_t step = 0;
    std::string rng_state_hex;
    std::vector<Blob> blobs;

    const Blob* find(const std::string& name) const;
    void add(const std::string& name, const Shape& shape, std::vector<double> data);
};

void save(const std::string& path, const Checkpoint& c);
Checkpoint load(const std::string& path);

// Store bridging: parameters and buffers by their registered names.
void pack_store(Checkpoint& c, const nn::ParamStore& ps);
void unpack_store(const Checkpoint& c, nn::ParamStore& ps);  // strict names + shapes

// Optimizer moments aligned with ps registration order, stored under
// "<prefix><param>.m1" / ".m2" plus "<prefix>steps".
void pack_adam(Checkpoint& c, const std::string& prefix, const nn::ParamStore& ps,
               nn::Adam& adam);
void unpack_adam(const Checkpoint& c, const std::string& prefix, const nn::ParamStore& ps,
                 nn::Adam& adam);

}  // namespace maskoff::ckpt

#endif
