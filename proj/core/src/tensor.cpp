#include "maskoff/tensor.hpp"

#include <cmath>
#include <cstring>
#include <deque>
#include <unordered_map>
#include <unordered_set>

namespace maskoff {

int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// --- construction -----------------------------------------------------------

static std::shared_ptr<TensorImpl> make_impl(const Shape& shape, std::vector<double> values,
                                             bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = shape;
    impl->data = std::make_shared<std::vector<double>>(std::move(values));
    impl->requires_grad = requires_grad;
    MASKOFF_CHECK(static_cast<int64_t>(impl->data->size()) == numel_of(shape),
                  "tensor data size ", impl->data->size(), " does not match shape ", shape_str(shape));
    return impl;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return Tensor(make_impl(shape, std::vector<double>(static_cast<size_t>(numel_of(shape)), 0.0),
                            requires_grad));
}

Tensor Tensor::full(const Shape& shape, double v, bool requires_grad) {
    return Tensor(make_impl(shape, std::vector<double>(static_cast<size_t>(numel_of(shape)), v),
                            requires_grad));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_impl(shape, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(make_impl({1}, {v}, requires_grad));
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev, bool requires_grad) {
    std::vector<double> v(static_cast<size_t>(numel_of(shape)));
    for (auto& x : v) x = rng.normal() * stddev;
    return Tensor(make_impl(shape, std::move(v), requires_grad));
}

double Tensor::value() const {
    MASKOFF_CHECK(numel() == 1, "value() on tensor of shape ", shape_str(shape()));
    return (*impl_->data)[0];
}

std::vector<double>& Tensor::grad() {
    if (!impl_->grad) impl_->grad = std::make_shared<std::vector<double>>(impl_->data->size(), 0.0);
    return *impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0);
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    impl->requires_grad = false;
    return Tensor(impl);
}

Tensor Tensor::clone() const {
    return Tensor(make_impl(impl_->shape, *impl_->data, false));
}

// --- grad mode --------------------------------------------------------------

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

void accumulate_grad(const Tensor& t, const std::vector<double>& g) {
    auto impl = t.impl();
    if (!impl->grad) impl->grad = std::make_shared<std::vector<double>>(impl->data->size(), 0.0);
    MASKOFF_CHECK(impl->grad->size() == g.size(), "grad size mismatch");
    double* dst = impl->grad->data();
    const double* src = g.data();
    for (size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

// Attach a node to `out` when the tape is recording and any input needs it.
Tensor make_result(const Shape& shape, std::vector<double> values, std::shared_ptr<GradFn> fn) {
    bool needs = false;
    if (g_grad_enabled && fn) {
        for (const auto& in : fn->inputs)
            if (in.requires_grad()) { needs = true; break; }
    }
    auto impl = make_impl(shape, std::move(values), needs);
    if (needs) impl->grad_fn = std::move(fn);
    return Tensor(impl);
}

// --- backward ---------------------------------------------------------------

void backward(const Tensor& root) {
    MASKOFF_CHECK(root.numel() == 1, "backward() requires a scalar loss");
    MASKOFF_CHECK(root.requires_grad(), "backward() on a tensor without grad");

    // Count, for every reachable tensor, how many recorded uses feed the
    // root. A node's backward runs only after every consumer contributed.
    std::unordered_map<TensorImpl*, int> pending;
    std::unordered_set<TensorImpl*> visited;
    std::vector<TensorImpl*> stack{root.impl().get()};
    visited.insert(root.impl().get());
    while (!stack.empty()) {
        TensorImpl* n = stack.back();
        stack.pop_back();
        if (!n->grad_fn) continue;
        for (const auto& in : n->grad_fn->inputs) {
            if (!in.requires_grad()) continue;
            TensorImpl* p = in.impl().get();
            ++pending[p];
            if (visited.insert(p).second) stack.push_back(p);
        }
    }

    root.impl()->grad = std::make_shared<std::vector<double>>(1, 1.0);

    std::deque<TensorImpl*> ready{root.impl().get()};
    while (!ready.empty()) {
        TensorImpl* n = ready.front();
        ready.pop_front();
        if (!n->grad_fn) continue;
        MASKOFF_CHECK(n->grad, "internal: missing grad for interior node");
        n->grad_fn->backward(*n->grad);
        for (const auto& in : n->grad_fn->inputs) {
            if (!in.requires_grad()) continue;
            TensorImpl* p = in.impl().get();
            if (--pending[p] == 0 && p->grad_fn) ready.push_back(p);
        }
    }
}

// --- elementwise ------------------------------------------------------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    MASKOFF_CHECK(a.shape() == b.shape(), op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                  shape_str(b.shape()));
}

struct AddFn : GradFn {
    void backward(const std::vector<double>& g) override {
        accumulate_grad(inputs[0], g);
        accumulate_grad(inputs[1], g);
    }
    const char* name() const override { return "add"; }
};

struct SubFn : GradFn {
    void backward(const std::vector<double>& g) override {
        accumulate_grad(inputs[0], g);
        std::vector<double> ng(g.size());
        for (size_t i = 0; i < g.size(); ++i) ng[i] = -g[i];
        accumulate_grad(inputs[1], ng);
    }
    const char* name() const override { return "sub"; }
};

struct MulFn : GradFn {
    void backward(const std::vector<double>& g) override {
        const auto& a = inputs[0].vec();
        const auto& b = inputs[1].vec();
        std::vector<double> ga(g.size()), gb(g.size());
        for (size_t i = 0; i < g.size(); ++i) {
            ga[i] = g[i] * b[i];
            gb[i] = g[i] * a[i];
        }
        accumulate_grad(inputs[0], ga);
        accumulate_grad(inputs[1], gb);
    }
    const char* name() const override { return "mul"; }
};

struct ScaleFn : GradFn {
    double s;
    void backward(const std::vector<double>& g) override {
        std::vector<double> ga(g.size());
        for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * s;
        accumulate_grad(inputs[0], ga);
    }
    const char* name() const override { return "scale"; }
};

struct ShiftFn : GradFn {
    void backward(const std::vector<double>& g) override { accumulate_grad(inputs[0], g); }
    const char* name() const override { return "shift"; }
};

// Unary op whose derivative is a saved per-element factor.
struct UnaryFactorFn : GradFn {
    std::vector<double> factor;
    const char* label = "unary";
    void backward(const std::vector<double>& g) override {
        std::vector<double> ga(g.size());
        for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * factor[i];
        accumulate_grad(inputs[0], ga);
    }
    const char* name() const override { return label; }
};

Tensor unary_with_factor(const Tensor& a, std::vector<double> out, std::vector<double> factor,
                         const char* label) {
    auto fn = std::make_shared<UnaryFactorFn>();
    fn->inputs = {a};
    fn->factor = std::move(factor);
    fn->label = label;
    return make_result(a.shape(), std::move(out), fn);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.vec());
    const double* pb = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
    auto fn = std::make_shared<AddFn>();
    fn->inputs = {a, b};
    return make_result(a.shape(), std::move(out), fn);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.vec());
    const double* pb = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
    auto fn = std::make_shared<SubFn>();
    fn->inputs = {a, b};
    return make_result(a.shape(), std::move(out), fn);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.vec());
    const double* pb = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
    auto fn = std::make_shared<MulFn>();
    fn->inputs = {a, b};
    return make_result(a.shape(), std::move(out), fn);
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.vec());
    for (auto& v : out) v += s;
    auto fn = std::make_shared<ShiftFn>();
    fn->inputs = {a};
    return make_result(a.shape(), std::move(out), fn);
}

Tensor mul_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.vec());
    for (auto& v : out) v *= s;
    auto fn = std::make_shared<ScaleFn>();
    fn->inputs = {a};
    fn->s = s;
    return make_result(a.shape(), std::move(out), fn);
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor abs(const Tensor& a) {
    const auto& x = a.vec();
    std::vector<double> out(x.size()), f(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = std::fabs(x[i]);
        f[i] = x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0);
    }
    return unary_with_factor(a, std::move(out), std::move(f), "abs");
}

Tensor square(const Tensor& a) {
    const auto& x = a.vec();
    std::vector<double> out(x.size()), f(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] * x[i];
        f[i] = 2.0 * x[i];
    }
    return unary_with_factor(a, std::move(out), std::move(f), "square");
}

Tensor sqrt(const Tensor& a) {
    const auto& x = a.vec();
    std::vector<double> out(x.size()), f(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = std::sqrt(x[i]);
        f[i] = out[i] > 0 ? 0.5 / out[i] : 0.0;
    }
    return unary_with_factor(a, std::move(out), std::move(f), "sqrt");
}

Tensor log(const Tensor& a) {
    const auto& x = a.vec();
    std::vector<double> out(x.size()), f(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = std::log(x[i]);
        f[i] = 1.0 / x[i];
    }
    return unary_with_factor(a, std::move(out), std::move(f), "log");
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    const auto& x = a.vec();
    std::vector<double> out(x.size()), f(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        bool inside = x[i] >= lo && x[i] <= hi;
        out[i] = inside ? x[i] : (x[i] < lo ? lo : hi);
        f[i] = inside ? 1.0 : 0.0;
    }
    return unary_with_factor(a, std::move(out), std::move(f), "clamp");
}

Tensor relu(const Tensor& a) {
    const auto& x = a.vec();
    std::vector<double> out(x.size()), f(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] > 0 ? x[i] : 0.0;
        f[i] = x[i] > 0 ? 1.0 : 0.0;
    }
    return unary_with_factor(a, std::move(out), std::move(f), "relu");
}

Tensor leaky_relu(const Tensor& a, double slope) {
    const auto& x = a.vec();
    std::vector<double> out(x.size()), f(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] > 0 ? x[i] : slope * x[i];
        f[i] = x[i] > 0 ? 1.0 : slope;
    }
    return unary_with_factor(a, std::move(out), std::move(f), "leaky_relu");
}

Tensor elu(const Tensor& a) {
    const auto& x = a.vec();
    std::vector<double> out(x.size()), f(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0) {
            out[i] = x[i];
            f[i] = 1.0;
        } else {
            double e = std::exp(x[i]);
            out[i] = e - 1.0;
            f[i] = e;
        }
    }
    return unary_with_factor(a, std::move(out), std::move(f), "elu");
}

Tensor sigmoid(const Tensor& a) {
    const auto& x = a.vec();
    std::vector<double> out(x.size()), f(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-x[i]));
        out[i] = s;
        f[i] = s * (1.0 - s);
    }
    return unary_with_factor(a, std::move(out), std::move(f), "sigmoid");
}

Tensor tanh(const Tensor& a) {
    const auto& x = a.vec();
    std::vector<double> out(x.size()), f(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double t = std::tanh(x[i]);
        out[i] = t;
        f[i] = 1.0 - t * t;
    }
    return unary_with_factor(a, std::move(out), std::move(f), "tanh");
}

// --- reductions / shape -----------------------------------------------------

namespace {

struct SumFn : GradFn {
    double scale = 1.0;
    void backward(const std::vector<double>& g) override {
        std::vector<double> ga(inputs[0].vec().size(), g[0] * scale);
        accumulate_grad(inputs[0], ga);
    }
    const char* name() const override { return "sum"; }
};

struct ReshapeFn : GradFn {
    void backward(const std::vector<double>& g) override { accumulate_grad(inputs[0], g); }
    const char* name() const override { return "reshape"; }
};

struct ConcatChannelsFn : GradFn {
    int64_t n = 0, h = 0, w = 0;
    std::vector<int64_t> channels;
    void backward(const std::vector<double>& g) override {
        int64_t ctotal = 0;
        for (int64_t c : channels) ctotal += c;
        const int64_t hw = h * w;
        int64_t coff = 0;
        for (size_t k = 0; k < channels.size(); ++k) {
            const int64_t ck = channels[k];
            std::vector<double> gk(static_cast<size_t>(n * ck * hw));
            for (int64_t in = 0; in < n; ++in)
                std::memcpy(gk.data() + in * ck * hw,
                            g.data() + (in * ctotal + coff) * hw,
                            static_cast<size_t>(ck * hw) * sizeof(double));
            accumulate_grad(inputs[k], gk);
            coff += ck;
        }
    }
    const char* name() const override { return "concat_channels"; }
};

}  // namespace

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.vec()) s += v;
    auto fn = std::make_shared<SumFn>();
    fn->inputs = {a};
    return make_result({1}, {s}, fn);
}

Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.vec()) s += v;
    const double n = static_cast<double>(a.numel());
    auto fn = std::make_shared<SumFn>();
    fn->inputs = {a};
    fn->scale = 1.0 / n;
    return make_result({1}, {s / n}, fn);
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    MASKOFF_CHECK(numel_of(shape) == a.numel(), "reshape ", shape_str(a.shape()), " -> ",
                  shape_str(shape), ": element count mismatch");
    auto fn = std::make_shared<ReshapeFn>();
    fn->inputs = {a};
    return make_result(shape, a.vec(), fn);
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
    MASKOFF_CHECK(!xs.empty(), "concat_channels: empty input list");
    const auto& s0 = xs[0].shape();
    MASKOFF_CHECK(s0.size() == 4, "concat_channels expects NCHW tensors");
    int64_t n = s0[0], h = s0[2], w = s0[3], ctotal = 0;
    for (const auto& x : xs) {
        MASKOFF_CHECK(x.ndim() == 4 && x.dim(0) == n && x.dim(2) == h && x.dim(3) == w,
                      "concat_channels: incompatible shape ", shape_str(x.shape()));
        ctotal += x.dim(1);
    }
    const int64_t hw = h * w;
    std::vector<double> out(static_cast<size_t>(n * ctotal * hw));
    int64_t coff = 0;
    for (const auto& x : xs) {
        const int64_t ck = x.dim(1);
        for (int64_t in = 0; in < n; ++in)
            std::memcpy(out.data() + (in * ctotal + coff) * hw, x.data() + in * ck * hw,
                        static_cast<size_t>(ck * hw) * sizeof(double));
        coff += ck;
    }
    auto fn = std::make_shared<ConcatChannelsFn>();
    fn->inputs = xs;
    fn->n = n;
    fn->h = h;
    fn->w = w;
    for (const auto& x : xs) fn->channels.push_back(x.dim(1));
    return make_result({n, ctotal, h, w}, std::move(out), fn);
}

}  // namespace maskoff
