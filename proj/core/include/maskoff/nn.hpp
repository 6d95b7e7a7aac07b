#ifndef MASKOFF_NN_HPP
#define MASKOFF_NN_HPP

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "maskoff/rng.hpp"
#include "maskoff/tensor.hpp"

namespace maskoff::nn {

// Ordered registry of named parameters and buffers. Registration order is
// the canonical order for optimizer state and checkpoint layout, so module
// constructors must register deterministically.
class ParamStore {
public:
    Tensor param(const std::string& name, Tensor t);
    std::shared_ptr<std::vector<double>> buffer(const std::string& name, std::vector<double> init);

    bool has_param(const std::string& name) const;
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    std::shared_ptr<std::vector<double>> buffer_at(const std::string& name) const;

    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
    const std::vector<std::pair<std::string, std::shared_ptr<std::vector<double>>>>& buffers() const {
        return buffers_;
    }
    std::vector<Tensor> tensors() const;
    int64_t total_elements() const;

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::pair<std::string, std::shared_ptr<std::vector<double>>>> buffers_;
};

// Kaiming-normal fan-in initialization for conv / linear weights.
Tensor kaiming_conv(const Shape& shape, Rng& rng, double gain = std::sqrt(2.0));

// Step-decay schedule shared by all trainers: flat base rate through
// decay_start_epoch, then a fixed decrement per epoch, floored at zero.
double lr_for_epoch(double base_lr, double decay_per_epoch, int64_t decay_start_epoch,
                    int64_t epoch);

// Adam with bias correction. Parameters are updated in place through their
// shared buffers; call zero_grad() before each forward.
class Adam {
public:
    Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    int64_t steps() const { return t_; }

    void zero_grad();
    void step();

    // Checkpoint plumbing: first/second moment vectors aligned with the
    // parameter order passed to the constructor.
    std::vector<std::vector<double>>& moment1() { return m_; }
    std::vector<std::vector<double>>& moment2() { return v_; }
    void set_steps(int64_t t) { t_ = t; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

// --- building blocks ----------------------------------------------------------

struct Conv2d {
    Tensor w, b;
    int stride = 1, pad = 0, dilation = 1;

    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, int k, int stride,
           int pad, Rng& rng, int dilation = 1, bool bias = true);
    Tensor operator()(const Tensor& x) const;
};

struct BatchNorm2d {
    Tensor gamma, beta;
    std::shared_ptr<std::vector<double>> running_mean, running_var;

    BatchNorm2d() = default;
    BatchNorm2d(ParamStore& ps, const std::string& name, int64_t channels);
    Tensor operator()(const Tensor& x, bool training) const;
};

// Soft-gated convolution: activation(feature(x)) ⊙ sigmoid(gate(x)).
struct GatedConv {
    Conv2d feature, gate;

    GatedConv() = default;
    GatedConv(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, int k, int stride,
              int pad, Rng& rng);
    Tensor operator()(const Tensor& x) const;
};

}  // namespace maskoff::nn

#endif
