#ifndef MASKOFF_TENSOR_HPP
#define MASKOFF_TENSOR_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "maskoff/common.hpp"
#include "maskoff/rng.hpp"

namespace maskoff {

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;

// Node of the reverse-mode tape. Holds the forward inputs (keeping their
// buffers alive) plus whatever saved state the derivative needs.
struct GradFn {
    std::vector<Tensor> inputs;
    virtual ~GradFn() = default;
    virtual void backward(const std::vector<double>& gout) = 0;
    virtual const char* name() const = 0;
};

struct TensorImpl {
    Shape shape;
    std::shared_ptr<std::vector<double>> data;
    bool requires_grad = false;
    std::shared_ptr<std::vector<double>> grad;  // lazily allocated, numel-sized
    std::shared_ptr<GradFn> grad_fn;            // null for leaves
};

// Value-semantics handle onto a shared dense double buffer. All network
// math is double precision; the oracle tolerances in the test suite
// (1e-8 and tighter) are not reachable in float.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double v, bool requires_grad = false);
    static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data->size()); }
    int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }

    double* data() { return impl_->data->data(); }
    const double* data() const { return impl_->data->data(); }
    std::vector<double>& vec() { return *impl_->data; }
    const std::vector<double>& vec() const { return *impl_->data; }

    double value() const;  // single-element tensors only

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) { impl_->requires_grad = v; return *this; }
    bool has_grad() const { return impl_->grad != nullptr; }
    std::vector<double>& grad();  // allocates zeros on first use
    void zero_grad();

    // Same buffer, detached from the tape.
    Tensor detach() const;
    // Deep copy of the values (no tape).
    Tensor clone() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<TensorImpl> impl_;
};

// --- autograd -------------------------------------------------------------

// True while ops should record the tape. Scoped off by NoGradGuard.
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

// Reverse pass from a scalar tensor. Accumulates into .grad of every
// reachable tensor with requires_grad. One call per recorded forward.
void backward(const Tensor& root);

// Helper for GradFn implementations: accumulate a contribution into t.grad.
void accumulate_grad(const Tensor& t, const std::vector<double>& g);

// Helper for op implementations: wrap a forward result, attaching fn to the
// tape when grad mode is on and any of fn->inputs requires grad.
Tensor make_result(const Shape& shape, std::vector<double> data, std::shared_ptr<GradFn> fn);

// --- elementwise / scalar ---------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor scale_by(const Tensor& a, const Tensor& s);  // s is a single-element tensor

Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor elu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

// --- reductions / shape -----------------------------------------------------

Tensor sum(const Tensor& a);   // scalar, shape {1}
Tensor mean(const Tensor& a);  // scalar, shape {1}
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat_channels(const std::vector<Tensor>& xs);  // NCHW, dim 1

// --- linear algebra / conv ---------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n]

// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              int stride, int pad, int dilation = 1);

// Volumetric convolution over the (C,H,W) volume of each sample with a
// single kernel and zero padding 1 on all three axes (shape preserving).
// x: [N,C,H,W], w: [kd,kh,kw], b: scalar or undefined.
Tensor conv3d_volume(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor maxpool2x(const Tensor& x);                       // [N,C,H,W] -> [N,C,H/2,W/2]
Tensor upsample_bilinear(const Tensor& x, int64_t out_h, int64_t out_w);

// Channel Gram matrices per sample: [N,C,H,W] -> [N,C,C].
// With normalize_hw, each entry is divided by H*W.
Tensor gram(const Tensor& x, bool normalize_hw);
// Sample i of a batched tensor, keeping a leading batch dim of 1.
Tensor slice_batch(const Tensor& x, int64_t i);

// Batch normalization over N,H,W per channel. running_mean / running_var
// are module buffers mutated in training mode.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   std::vector<double>& running_mean, std::vector<double>& running_var,
                   bool training, double momentum = 0.1, double eps = 1e-5);

}  // namespace maskoff

#endif
