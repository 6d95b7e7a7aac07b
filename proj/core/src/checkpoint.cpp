#include "maskoff/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "maskoff/common.hpp"

namespace maskoff::ckpt {

namespace {

constexpr char kMagic[4] = {'M', 'K', 'C', 'K'};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    MASKOFF_CHECK(in.good(), "truncated checkpoint '", path, "'");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
    const uint64_t len = read_pod<uint64_t>(in, path);
    MASKOFF_CHECK(len < (1ULL << 32), "implausible string length in '", path, "'");
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    MASKOFF_CHECK(in.good(), "truncated checkpoint '", path, "'");
    return s;
}

}  // namespace

const Blob* Checkpoint::find(const std::string& name) const {
    for (const Blob& b : blobs)
        if (b.name == name) return &b;
    return nullptr;
}

void Checkpoint::add(const std::string& name, const Shape& shape, std::vector<double> data) {
    MASKOFF_CHECK(numel_of(shape) == static_cast<int64_t>(data.size()), "blob '", name,
                  "': shape/data mismatch");
    MASKOFF_CHECK(find(name) == nullptr, "duplicate blob '", name, "'");
    blobs.push_back(Blob{name, shape, std::move(data)});
}

void save(const std::string& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    MASKOFF_CHECK(out.good(), "cannot write checkpoint '", path, "'");
    out.write(kMagic, 4);
    write_pod<uint32_t>(out, c.version);
    write_string(out, c.config);
    write_pod<int64_t>(out, c.epoch);
    write_pod<int64_t>(out, c.step);
    write_string(out, c.rng_state_hex);
    write_pod<uint64_t>(out, c.blobs.size());
    for (const Blob& b : c.blobs) {
        write_string(out, b.name);
        write_pod<uint64_t>(out, b.shape.size());
        for (int64_t d : b.shape) write_pod<int64_t>(out, d);
        out.write(reinterpret_cast<const char*>(b.data.data()),
                  static_cast<std::streamsize>(b.data.size() * sizeof(double)));
    }
    MASKOFF_CHECK(out.good(), "write failed for checkpoint '", path, "'");
}

Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    MASKOFF_CHECK(in.good(), "cannot open checkpoint '", path, "'");
    char magic[4];
    in.read(magic, 4);
    MASKOFF_CHECK(in.good() && std::memcmp(magic, kMagic, 4) == 0, "'", path,
                  "' is not a checkpoint file");
    Checkpoint c;
    c.version = read_pod<uint32_t>(in, path);
    MASKOFF_CHECK(c.version == kFormatVersion, "checkpoint '", path, "' has format version ",
                  c.version, ", this build reads version ", kFormatVersion);
    c.config = read_string(in, path);
    c.epoch = read_pod<int64_t>(in, path);
    c.step = read_pod<int64_t>(in, path);
    c.rng_state_hex = read_string(in, path);
    const uint64_t nblobs = read_pod<uint64_t>(in, path);
    MASKOFF_CHECK(nblobs < (1ULL << 24), "implausible blob count in '", path, "'");
    c.blobs.reserve(nblobs);
    for (uint64_t i = 0; i < nblobs; ++i) {
        Blob b;
        b.name = read_string(in, path);
        const uint64_t ndim = read_pod<uint64_t>(in, path);
        MASKOFF_CHECK(ndim <= 8, "implausible rank in '", path, "'");
        b.shape.resize(ndim);
        for (uint64_t d = 0; d < ndim; ++d) b.shape[d] = read_pod<int64_t>(in, path);
        const int64_t n = numel_of(b.shape);
        MASKOFF_CHECK(n >= 0 && n < (1LL << 32), "implausible blob size in '", path, "'");
        b.data.resize(static_cast<size_t>(n));
        in.read(reinterpret_cast<char*>(b.data.data()),
                static_cast<std::streamsize>(b.data.size() * sizeof(double)));
        MASKOFF_CHECK(in.good(), "truncated checkpoint '", path, "'");
        c.blobs.push_back(std::move(b));
    }
    return c;
}

void pack_store(Checkpoint& c, const nn::ParamStore& ps) {
    for (const auto& [name, t] : ps.params()) c.add(name, t.shape(), t.vec());
    for (const auto& [name, buf] : ps.buffers())
        c.add(name, {static_cast<int64_t>(buf->size())}, *buf);
}

void unpack_store(const Checkpoint& c, nn::ParamStore& ps) {
    for (const auto& [name, t] : ps.params()) {
        const Blob* b = c.find(name);
        MASKOFF_CHECK(b != nullptr, "checkpoint is missing parameter '", name, "'");
        MASKOFF_CHECK(b->shape == t.shape(), "parameter '", name, "' has shape ",
                      shape_str(b->shape), ", expected ", shape_str(t.shape()));
        Tensor dst = t;
        std::copy(b->data.begin(), b->data.end(), dst.data());
    }
    for (const auto& [name, buf] : ps.buffers()) {
        const Blob* b = c.find(name);
        MASKOFF_CHECK(b != nullptr, "checkpoint is missing buffer '", name, "'");
        MASKOFF_CHECK(b->data.size() == buf->size(), "buffer '", name, "' has ", b->data.size(),
                      " elements, expected ", buf->size());
        *buf = b->data;
    }
}

void pack_adam(Checkpoint& c, const std::string& prefix, const nn::ParamStore& ps,
               nn::Adam& adam) {
    const auto& params = ps.params();
    MASKOFF_CHECK(adam.moment1().size() == params.size(),
                  "optimizer does not match the parameter store");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, t] = params[i];
        c.add(prefix + name + ".m1", t.shape(), adam.moment1()[i]);
        c.add(prefix + name + ".m2", t.shape(), adam.moment2()[i]);
    }
    c.add(prefix + "steps", {1}, {static_cast<double>(adam.steps())});
}

void unpack_adam(const Checkpoint& c, const std::string& prefix, const nn::ParamStore& ps,
                 nn::Adam& adam) {
    const auto& params = ps.params();
    MASKOFF_CHECK(adam.moment1().size() == params.size(),
                  "optimizer does not match the parameter store");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, t] = params[i];
        const Blob* m1 = c.find(prefix + name + ".m1");
        const Blob* m2 = c.find(prefix + name + ".m2");
        MASKOFF_CHECK(m1 && m2, "checkpoint is missing optimizer state for '", name, "'");
        MASKOFF_CHECK(static_cast<int64_t>(m1->data.size()) == t.numel() &&
                          static_cast<int64_t>(m2->data.size()) == t.numel(),
                      "optimizer state size mismatch for '", name, "'");
        adam.moment1()[i] = m1->data;
        adam.moment2()[i] = m2->data;
    }
    const Blob* steps = c.find(prefix + "steps");
    MASKOFF_CHECK(steps && steps->data.size() == 1, "checkpoint is missing optimizer step count");
    adam.set_steps(static_cast<int64_t>(steps->data[0]));
}

}  // namespace maskoff::ckpt
