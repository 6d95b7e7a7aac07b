#include "maskoff/nn.hpp"

#include <cmath>

#include "maskoff/common.hpp"

namespace maskoff::nn {

Tensor ParamStore::param(const std::string& name, Tensor t) {
    MASKOFF_CHECK(!has_param(name), "duplicate parameter '", name, "'");
    t.set_requires_grad(true);
    params_.emplace_back(name, t);
    return t;
}

std::shared_ptr<std::vector<double>> ParamStore::buffer(const std::string& name,
                                                        std::vector<double> init) {
    for (const auto& [n, _] : buffers_) MASKOFF_CHECK(n != name, "duplicate buffer '", name, "'");
    auto p = std::make_shared<std::vector<double>>(std::move(init));
    buffers_.emplace_back(name, p);
    return p;
}

bool ParamStore::has_param(const std::string& name) const {
    for (const auto& [n, _] : params_)
        if (n == name) return true;
    return false;
}

Tensor& ParamStore::at(const std::string& name) {
    for (auto& [n, t] : params_)
        if (n == name) return t;
    fail("unknown parameter '", name, "'");
}

const Tensor& ParamStore::at(const std::string& name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    fail("unknown parameter '", name, "'");
}

std::shared_ptr<std::vector<double>> ParamStore::buffer_at(const std::string& name) const {
    for (const auto& [n, b] : buffers_)
        if (n == name) return b;
    fail("unknown buffer '", name, "'");
}

std::vector<Tensor> ParamStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& [_, t] : params_) out.push_back(t);
    return out;
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
}

Tensor kaiming_conv(const Shape& shape, Rng& rng, double gain) {
    MASKOFF_CHECK(shape.size() >= 2, "kaiming_conv: need at least 2 dims");
    int64_t fan_in = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    const double stddev = gain / std::sqrt(static_cast<double>(fan_in));
    return Tensor::randn(shape, rng, stddev);
}

double lr_for_epoch(double base_lr, double decay_per_epoch, int64_t decay_start_epoch,
                    int64_t epoch) {
    MASKOFF_CHECK(epoch >= 1, "epoch counting starts at 1");
    if (epoch <= decay_start_epoch) return base_lr;
    return std::max(base_lr - static_cast<double>(epoch - decay_start_epoch) * decay_per_epoch, 0.0);
}

// --- Adam ---------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        if (!p.has_grad()) continue;
        const std::vector<double>& g = p.grad();
        std::vector<double>& m = m_[pi];
        std::vector<double>& v = v_[pi];
        double* d = p.data();
        for (size_t i = 0; i < g.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            d[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

// --- building blocks ----------------------------------------------------------

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, int k,
               int stride, int pad, Rng& rng, int dilation, bool bias)
    : stride(stride), pad(pad), dilation(dilation) {
    w = ps.param(name + ".w", kaiming_conv({cout, cin, k, k}, rng));
    if (bias) b = ps.param(name + ".b", Tensor::zeros({cout}));
}

Tensor Conv2d::operator()(const Tensor& x) const {
    return conv2d(x, w, b, stride, pad, dilation);
}

BatchNorm2d::BatchNorm2d(ParamStore& ps, const std::string& name, int64_t channels) {
    gamma = ps.param(name + ".gamma", Tensor::full({channels}, 1.0));
    beta = ps.param(name + ".beta", Tensor::zeros({channels}));
    running_mean = ps.buffer(name + ".running_mean", std::vector<double>(channels, 0.0));
    running_var = ps.buffer(name + ".running_var", std::vector<double>(channels, 1.0));
}

Tensor BatchNorm2d::operator()(const Tensor& x, bool training) const {
    return batchnorm2d(x, gamma, beta, *running_mean, *running_var, training);
}

GatedConv::GatedConv(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, int k,
                     int stride, int pad, Rng& rng)
    : feature(ps, name + ".f", cin, cout, k, stride, pad, rng),
      gate(ps, name + ".g", cin, cout, k, stride, pad, rng) {}

Tensor GatedConv::operator()(const Tensor& x) const {
    return mul(elu(feature(x)), sigmoid(gate(x)));
}

}  // namespace maskoff::nn
