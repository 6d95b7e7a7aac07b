#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "maskoff/tensor.hpp"

namespace maskoff {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;

// --- matmul -----------------------------------------------------------------

namespace {

struct MatmulFn : GradFn {
    void backward(const std::vector<double>& g) override {
        const Tensor& a = inputs[0];
        const Tensor& b = inputs[1];
        const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
        CMapM ga_out(g.data(), m, n);
        CMapM ma(a.data(), m, k), mb(b.data(), k, n);
        if (a.requires_grad()) {
            std::vector<double> ga(static_cast<size_t>(m * k));
            MapM(ga.data(), m, k).noalias() = ga_out * mb.transpose();
            accumulate_grad(a, ga);
        }
        if (b.requires_grad()) {
            std::vector<double> gb(static_cast<size_t>(k * n));
            MapM(gb.data(), k, n).noalias() = ma.transpose() * ga_out;
            accumulate_grad(b, gb);
        }
    }
    const char* name() const override { return "matmul"; }
};

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    MASKOFF_CHECK(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
                  "matmul: incompatible shapes ", shape_str(a.shape()), " x ", shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<size_t>(m * n));
    MapM(out.data(), m, n).noalias() = CMapM(a.data(), m, k) * CMapM(b.data(), k, n);
    auto fn = std::make_shared<MatmulFn>();
    fn->inputs = {a, b};
    return make_result({m, n}, std::move(out), fn);
}

// --- learnable-scalar scaling --------------------------------------------------

namespace {

struct ScaleByFn : GradFn {
    void backward(const std::vector<double>& g) override {
        const Tensor& a = inputs[0];
        const Tensor& s = inputs[1];
        const double sv = s.data()[0];
        if (a.requires_grad()) {
            std::vector<double> ga(g.size());
            for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * sv;
            accumulate_grad(a, ga);
        }
        if (s.requires_grad()) {
            double gs = 0.0;
            for (size_t i = 0; i < g.size(); ++i) gs += g[i] * a.data()[static_cast<int64_t>(i)];
            accumulate_grad(s, {gs});
        }
    }
    const char* name() const override { return "scale_by"; }
};

}  // namespace

Tensor scale_by(const Tensor& a, const Tensor& s) {
    MASKOFF_CHECK(s.numel() == 1, "scale_by: scale must be a single element");
    const double sv = s.data()[0];
    std::vector<double> out(a.vec());
    for (double& v : out) v *= sv;
    auto fn = std::make_shared<ScaleByFn>();
    fn->inputs = {a, s};
    return make_result(a.shape(), std::move(out), fn);
}

// --- conv2d -----------------------------------------------------------------

namespace {

struct Conv2dGeom {
    int64_t n, cin, h, w, cout, kh, kw, ho, wo;
    int stride, pad, dilation;
};

void im2col(const double* x, const Conv2dGeom& gm, double* col) {
    // col is (cin*kh*kw) x (ho*wo), row-major
    const int64_t M = gm.ho * gm.wo;
    for (int64_t ci = 0; ci < gm.cin; ++ci) {
        const double* xc = x + ci * gm.h * gm.w;
        for (int64_t ki = 0; ki < gm.kh; ++ki) {
            for (int64_t kj = 0; kj < gm.kw; ++kj) {
                double* row = col + ((ci * gm.kh + ki) * gm.kw + kj) * M;
                for (int64_t oy = 0; oy < gm.ho; ++oy) {
                    const int64_t iy = oy * gm.stride - gm.pad + ki * gm.dilation;
                    double* dst = row + oy * gm.wo;
                    if (iy < 0 || iy >= gm.h) {
                        std::memset(dst, 0, static_cast<size_t>(gm.wo) * sizeof(double));
                        continue;
                    }
                    const double* src = xc + iy * gm.w;
                    for (int64_t ox = 0; ox < gm.wo; ++ox) {
                        const int64_t ix = ox * gm.stride - gm.pad + kj * gm.dilation;
                        dst[ox] = (ix >= 0 && ix < gm.w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const Conv2dGeom& gm, double* gx) {
    const int64_t M = gm.ho * gm.wo;
    for (int64_t ci = 0; ci < gm.cin; ++ci) {
        double* xc = gx + ci * gm.h * gm.w;
        for (int64_t ki = 0; ki < gm.kh; ++ki) {
            for (int64_t kj = 0; kj < gm.kw; ++kj) {
                const double* row = col + ((ci * gm.kh + ki) * gm.kw + kj) * M;
                for (int64_t oy = 0; oy < gm.ho; ++oy) {
                    const int64_t iy = oy * gm.stride - gm.pad + ki * gm.dilation;
                    if (iy < 0 || iy >= gm.h) continue;
                    const double* src = row + oy * gm.wo;
                    double* dst = xc + iy * gm.w;
                    for (int64_t ox = 0; ox < gm.wo; ++ox) {
                        const int64_t ix = ox * gm.stride - gm.pad + kj * gm.dilation;
                        if (ix >= 0 && ix < gm.w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

struct Conv2dFn : GradFn {
    Conv2dGeom gm;
    bool has_bias = false;
    void backward(const std::vector<double>& g) override {
        const Tensor& x = inputs[0];
        const Tensor& w = inputs[1];
        const int64_t K = gm.cin * gm.kh * gm.kw;
        const int64_t M = gm.ho * gm.wo;
        std::vector<double> col(static_cast<size_t>(K * M));
        std::vector<double> gw, gx, gcol;
        const bool need_gw = w.requires_grad();
        const bool need_gx = x.requires_grad();
        if (need_gw) gw.assign(static_cast<size_t>(gm.cout * K), 0.0);
        if (need_gx) {
            gx.assign(static_cast<size_t>(gm.n * gm.cin * gm.h * gm.w), 0.0);
            gcol.resize(static_cast<size_t>(K * M));
        }
        CMapM wm(w.data(), gm.cout, K);
        for (int64_t in = 0; in < gm.n; ++in) {
            CMapM go(g.data() + in * gm.cout * M, gm.cout, M);
            if (need_gw) {
                im2col(x.data() + in * gm.cin * gm.h * gm.w, gm, col.data());
                MapM(gw.data(), gm.cout, K).noalias() += go * CMapM(col.data(), K, M).transpose();
            }
            if (need_gx) {
                MapM(gcol.data(), K, M).noalias() = wm.transpose() * go;
                col2im_add(gcol.data(), gm, gx.data() + in * gm.cin * gm.h * gm.w);
            }
        }
        if (need_gx) accumulate_grad(x, gx);
        if (need_gw) accumulate_grad(w, gw);
        if (has_bias && inputs[2].requires_grad()) {
            std::vector<double> gb(static_cast<size_t>(gm.cout), 0.0);
            for (int64_t in = 0; in < gm.n; ++in)
                for (int64_t co = 0; co < gm.cout; ++co) {
                    const double* src = g.data() + (in * gm.cout + co) * M;
                    double s = 0.0;
                    for (int64_t m = 0; m < M; ++m) s += src[m];
                    gb[static_cast<size_t>(co)] += s;
                }
            accumulate_grad(inputs[2], gb);
        }
    }
    const char* name() const override { return "conv2d"; }
};

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
              int dilation) {
    MASKOFF_CHECK(x.ndim() == 4, "conv2d: input must be NCHW, got ", shape_str(x.shape()));
    MASKOFF_CHECK(w.ndim() == 4, "conv2d: weight must be [Cout,Cin,kh,kw]");
    MASKOFF_CHECK(x.dim(1) == w.dim(1), "conv2d: channel mismatch, input ", x.dim(1), " vs weight ",
                  w.dim(1));
    MASKOFF_CHECK(stride >= 1 && dilation >= 1 && pad >= 0, "conv2d: bad geometry");
    Conv2dGeom gm;
    gm.n = x.dim(0);
    gm.cin = x.dim(1);
    gm.h = x.dim(2);
    gm.w = x.dim(3);
    gm.cout = w.dim(0);
    gm.kh = w.dim(2);
    gm.kw = w.dim(3);
    gm.stride = stride;
    gm.pad = pad;
    gm.dilation = dilation;
    gm.ho = (gm.h + 2 * pad - dilation * (gm.kh - 1) - 1) / stride + 1;
    gm.wo = (gm.w + 2 * pad - dilation * (gm.kw - 1) - 1) / stride + 1;
    MASKOFF_CHECK(gm.ho >= 1 && gm.wo >= 1, "conv2d: input ", gm.h, "x", gm.w,
                  " too small for kernel/receptive field");
    if (b.defined()) MASKOFF_CHECK(b.ndim() == 1 && b.dim(0) == gm.cout, "conv2d: bad bias shape");

    const int64_t K = gm.cin * gm.kh * gm.kw;
    const int64_t M = gm.ho * gm.wo;
    std::vector<double> out(static_cast<size_t>(gm.n * gm.cout * M));
    std::vector<double> col(static_cast<size_t>(K * M));
    CMapM wm(w.data(), gm.cout, K);
    for (int64_t in = 0; in < gm.n; ++in) {
        im2col(x.data() + in * gm.cin * gm.h * gm.w, gm, col.data());
        MapM om(out.data() + in * gm.cout * M, gm.cout, M);
        om.noalias() = wm * CMapM(col.data(), K, M);
        if (b.defined())
            for (int64_t co = 0; co < gm.cout; ++co)
                om.row(co).array() += b.data()[co];
    }
    auto fn = std::make_shared<Conv2dFn>();
    fn->gm = gm;
    fn->has_bias = b.defined();
    fn->inputs = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
    return make_result({gm.n, gm.cout, gm.ho, gm.wo}, std::move(out), fn);
}

// --- conv3d over the channel-height-width volume ------------------------------

namespace {

struct Conv3dVolFn : GradFn {
    int64_t n, c, h, w;
    bool has_bias = false;
    void backward(const std::vector<double>& g) override {
        const Tensor& x = inputs[0];
        const Tensor& w3 = inputs[1];
        const int64_t chw = c * h * w;
        std::vector<double> gx, gw;
        const bool need_gx = x.requires_grad();
        const bool need_gw = w3.requires_grad();
        if (need_gx) gx.assign(static_cast<size_t>(n * chw), 0.0);
        if (need_gw) gw.assign(27, 0.0);
        auto in_bounds = [&](int64_t d, int64_t y, int64_t xx) {
            return d >= 0 && d < c && y >= 0 && y < h && xx >= 0 && xx < w;
        };
        for (int64_t in = 0; in < n; ++in) {
            const double* xs = x.data() + in * chw;
            const double* gs = g.data() + in * chw;
            double* gxs = need_gx ? gx.data() + in * chw : nullptr;
            for (int64_t d = 0; d < c; ++d)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t xx = 0; xx < w; ++xx) {
                        const double go = gs[(d * h + y) * w + xx];
                        for (int64_t kd = 0; kd < 3; ++kd)
                            for (int64_t ky = 0; ky < 3; ++ky)
                                for (int64_t kx = 0; kx < 3; ++kx) {
                                    const int64_t id = d + kd - 1, iy = y + ky - 1, ix = xx + kx - 1;
                                    if (!in_bounds(id, iy, ix)) continue;
                                    const int64_t ii = (id * h + iy) * w + ix;
                                    const int64_t wi = (kd * 3 + ky) * 3 + kx;
                                    if (need_gx) gxs[ii] += go * w3.data()[wi];
                                    if (need_gw) gw[static_cast<size_t>(wi)] += go * xs[ii];
                                }
                    }
        }
        if (need_gx) accumulate_grad(x, gx);
        if (need_gw) accumulate_grad(w3, gw);
        if (has_bias && inputs[2].requires_grad()) {
            double s = 0.0;
            for (double v : g) s += v;
            accumulate_grad(inputs[2], {s});
        }
    }
    const char* name() const override { return "conv3d_volume"; }
};

}  // namespace

Tensor conv3d_volume(const Tensor& x, const Tensor& w, const Tensor& b) {
    MASKOFF_CHECK(x.ndim() == 4, "conv3d_volume: input must be NCHW");
    MASKOFF_CHECK(w.ndim() == 3 && w.dim(0) == 3 && w.dim(1) == 3 && w.dim(2) == 3,
                  "conv3d_volume: kernel must be 3x3x3");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const int64_t chw = c * h * ww;
    const double bias = b.defined() ? b.value() : 0.0;
    std::vector<double> out(static_cast<size_t>(n * chw));
    for (int64_t in = 0; in < n; ++in) {
        const double* xs = x.data() + in * chw;
        double* os = out.data() + in * chw;
        for (int64_t d = 0; d < c; ++d)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t xx = 0; xx < ww; ++xx) {
                    double acc = bias;
                    for (int64_t kd = 0; kd < 3; ++kd) {
                        const int64_t id = d + kd - 1;
                        if (id < 0 || id >= c) continue;
                        for (int64_t ky = 0; ky < 3; ++ky) {
                            const int64_t iy = y + ky - 1;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t kx = 0; kx < 3; ++kx) {
                                const int64_t ix = xx + kx - 1;
                                if (ix < 0 || ix >= ww) continue;
                                acc += w.data()[(kd * 3 + ky) * 3 + kx] * xs[(id * h + iy) * ww + ix];
                            }
                        }
                    }
                    os[(d * h + y) * ww + xx] = acc;
                }
    }
    auto fn = std::make_shared<Conv3dVolFn>();
    fn->n = n;
    fn->c = c;
    fn->h = h;
    fn->w = ww;
    fn->has_bias = b.defined();
    fn->inputs = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
    return make_result(x.shape(), std::move(out), fn);
}

// --- max pooling --------------------------------------------------------------

namespace {

struct MaxPoolFn : GradFn {
    std::vector<int64_t> argmax;  // flat input index per output element
    void backward(const std::vector<double>& g) override {
        std::vector<double> gx(inputs[0].vec().size(), 0.0);
        for (size_t i = 0; i < g.size(); ++i) gx[static_cast<size_t>(argmax[i])] += g[i];
        accumulate_grad(inputs[0], gx);
    }
    const char* name() const override { return "maxpool2x"; }
};

}  // namespace

Tensor maxpool2x(const Tensor& x) {
    MASKOFF_CHECK(x.ndim() == 4, "maxpool2x: input must be NCHW");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    MASKOFF_CHECK(h % 2 == 0 && w % 2 == 0, "maxpool2x: spatial size ", h, "x", w, " must be even");
    const int64_t ho = h / 2, wo = w / 2;
    std::vector<double> out(static_cast<size_t>(n * c * ho * wo));
    auto fn = std::make_shared<MaxPoolFn>();
    fn->argmax.resize(out.size());
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const double* src = x.data() + nc * h * w;
        double* dst = out.data() + nc * ho * wo;
        int64_t* am = fn->argmax.data() + nc * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
                int64_t best = (2 * oy) * w + 2 * ox;
                double bv = src[best];
                const int64_t cands[3] = {(2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                          (2 * oy + 1) * w + 2 * ox + 1};
                for (int64_t ci : cands)
                    if (src[ci] > bv) { bv = src[ci]; best = ci; }
                dst[oy * wo + ox] = bv;
                am[oy * wo + ox] = nc * h * w + best;
            }
    }
    fn->inputs = {x};
    return make_result({n, c, ho, wo}, std::move(out), fn);
}

// --- bilinear resize ------------------------------------------------------------

namespace {

struct Bilin {
    int64_t i0, i1;
    double w0, w1;
};

// Half-pixel-center source coordinates, clamped at the borders.
std::vector<Bilin> bilinear_axis(int64_t in, int64_t out) {
    std::vector<Bilin> v(static_cast<size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        if (src > static_cast<double>(in - 1)) src = static_cast<double>(in - 1);
        const int64_t i0 = static_cast<int64_t>(std::floor(src));
        const int64_t i1 = std::min(i0 + 1, in - 1);
        const double f = src - static_cast<double>(i0);
        v[static_cast<size_t>(o)] = {i0, i1, 1.0 - f, f};
    }
    return v;
}

struct UpsampleFn : GradFn {
    int64_t h, w, ho, wo;
    void backward(const std::vector<double>& g) override {
        const auto ay = bilinear_axis(h, ho);
        const auto ax = bilinear_axis(w, wo);
        const int64_t nc = inputs[0].dim(0) * inputs[0].dim(1);
        std::vector<double> gx(inputs[0].vec().size(), 0.0);
        for (int64_t p = 0; p < nc; ++p) {
            const double* gs = g.data() + p * ho * wo;
            double* gd = gx.data() + p * h * w;
            for (int64_t oy = 0; oy < ho; ++oy)
                for (int64_t ox = 0; ox < wo; ++ox) {
                    const double go = gs[oy * wo + ox];
                    const auto& by = ay[static_cast<size_t>(oy)];
                    const auto& bx = ax[static_cast<size_t>(ox)];
                    gd[by.i0 * w + bx.i0] += go * by.w0 * bx.w0;
                    gd[by.i0 * w + bx.i1] += go * by.w0 * bx.w1;
                    gd[by.i1 * w + bx.i0] += go * by.w1 * bx.w0;
                    gd[by.i1 * w + bx.i1] += go * by.w1 * bx.w1;
                }
        }
        accumulate_grad(inputs[0], gx);
    }
    const char* name() const override { return "upsample_bilinear"; }
};

}  // namespace

Tensor upsample_bilinear(const Tensor& x, int64_t out_h, int64_t out_w) {
    MASKOFF_CHECK(x.ndim() == 4, "upsample_bilinear: input must be NCHW");
    MASKOFF_CHECK(out_h >= 1 && out_w >= 1, "upsample_bilinear: bad output size");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto ay = bilinear_axis(h, out_h);
    const auto ax = bilinear_axis(w, out_w);
    std::vector<double> out(static_cast<size_t>(n * c * out_h * out_w));
    for (int64_t p = 0; p < n * c; ++p) {
        const double* src = x.data() + p * h * w;
        double* dst = out.data() + p * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const auto& by = ay[static_cast<size_t>(oy)];
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const auto& bx = ax[static_cast<size_t>(ox)];
                dst[oy * out_w + ox] = by.w0 * (bx.w0 * src[by.i0 * w + bx.i0] + bx.w1 * src[by.i0 * w + bx.i1]) +
                                       by.w1 * (bx.w0 * src[by.i1 * w + bx.i0] + bx.w1 * src[by.i1 * w + bx.i1]);
            }
        }
    }
    auto fn = std::make_shared<UpsampleFn>();
    fn->inputs = {x};
    fn->h = h;
    fn->w = w;
    fn->ho = out_h;
    fn->wo = out_w;
    return make_result({n, c, out_h, out_w}, std::move(out), fn);
}

// --- Gram matrices ----------------------------------------------------------------

namespace {

struct GramFn : GradFn {
    double scale = 1.0;
    void backward(const std::vector<double>& g) override {
        const Tensor& x = inputs[0];
        const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        std::vector<double> gx(x.vec().size());
        for (int64_t in = 0; in < n; ++in) {
            CMapM f(x.data() + in * c * hw, c, hw);
            CMapM gg(g.data() + in * c * c, c, c);
            MapM gf(gx.data() + in * c * hw, c, hw);
            gf.noalias() = (gg + gg.transpose()) * f;
            gf *= scale;
        }
        accumulate_grad(x, gx);
    }
    const char* name() const override { return "gram"; }
};

}  // namespace

Tensor gram(const Tensor& x, bool normalize_hw) {
    MASKOFF_CHECK(x.ndim() == 4, "gram: input must be NCHW");
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const double scale = normalize_hw ? 1.0 / static_cast<double>(hw) : 1.0;
    std::vector<double> out(static_cast<size_t>(n * c * c));
    for (int64_t in = 0; in < n; ++in) {
        CMapM f(x.data() + in * c * hw, c, hw);
        MapM g(out.data() + in * c * c, c, c);
        g.noalias() = f * f.transpose();
        g *= scale;
    }
    auto fn = std::make_shared<GramFn>();
    fn->inputs = {x};
    fn->scale = scale;
    return make_result({n, c, c}, std::move(out), fn);
}

// --- batch slicing -----------------------------------------------------------------

namespace {

struct SliceBatchFn : GradFn {
    int64_t index = 0;
    int64_t per_sample = 0;
    void backward(const std::vector<double>& g) override {
        const Tensor& x = inputs[0];
        std::vector<double> gx(x.vec().size());
        std::copy(g.begin(), g.end(), gx.begin() + index * per_sample);
        accumulate_grad(x, gx);
    }
    const char* name() const override { return "slice_batch"; }
};

}  // namespace

Tensor slice_batch(const Tensor& x, int64_t i) {
    MASKOFF_CHECK(x.ndim() >= 1, "slice_batch: need a batch dimension");
    MASKOFF_CHECK(i >= 0 && i < x.dim(0), "slice_batch: index ", i, " out of range for batch ",
                  x.dim(0));
    const int64_t per_sample = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = 1;
    std::vector<double> out(x.vec().begin() + i * per_sample,
                            x.vec().begin() + (i + 1) * per_sample);
    auto fn = std::make_shared<SliceBatchFn>();
    fn->inputs = {x};
    fn->index = i;
    fn->per_sample = per_sample;
    return make_result(shape, std::move(out), fn);
}

// --- batch normalization ---------------------------------------------------------

namespace {

struct BatchNormFn : GradFn {
    int64_t n, c, h, w;
    bool training = true;
    std::vector<double> xhat;    // saved normalized input
    std::vector<double> invstd;  // per channel
    void backward(const std::vector<double>& g) override {
        const Tensor& x = inputs[0];
        const Tensor& gamma = inputs[1];
        const int64_t hw = h * w;
        const int64_t m = n * hw;  // elements per channel
        std::vector<double> dgamma(static_cast<size_t>(c), 0.0), dbeta(static_cast<size_t>(c), 0.0);
        for (int64_t in = 0; in < n; ++in)
            for (int64_t ci = 0; ci < c; ++ci) {
                const double* gs = g.data() + (in * c + ci) * hw;
                const double* xs = xhat.data() + (in * c + ci) * hw;
                double sg = 0.0, sgx = 0.0;
                for (int64_t i = 0; i < hw; ++i) {
                    sg += gs[i];
                    sgx += gs[i] * xs[i];
                }
                dbeta[static_cast<size_t>(ci)] += sg;
                dgamma[static_cast<size_t>(ci)] += sgx;
            }
        if (x.requires_grad()) {
            std::vector<double> gx(x.vec().size());
            for (int64_t in = 0; in < n; ++in)
                for (int64_t ci = 0; ci < c; ++ci) {
                    const double ga = gamma.data()[ci] * invstd[static_cast<size_t>(ci)];
                    const double* gs = g.data() + (in * c + ci) * hw;
                    const double* xs = xhat.data() + (in * c + ci) * hw;
                    double* gd = gx.data() + (in * c + ci) * hw;
                    if (training) {
                        const double mg = dbeta[static_cast<size_t>(ci)] / static_cast<double>(m);
                        const double mgx = dgamma[static_cast<size_t>(ci)] / static_cast<double>(m);
                        for (int64_t i = 0; i < hw; ++i) gd[i] = ga * (gs[i] - mg - xs[i] * mgx);
                    } else {
                        for (int64_t i = 0; i < hw; ++i) gd[i] = ga * gs[i];
                    }
                }
            accumulate_grad(x, gx);
        }
        if (gamma.requires_grad()) accumulate_grad(gamma, dgamma);
        if (inputs[2].requires_grad()) accumulate_grad(inputs[2], dbeta);
    }
    const char* name() const override { return "batchnorm2d"; }
};

}  // namespace

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   std::vector<double>& running_mean, std::vector<double>& running_var,
                   bool training, double momentum, double eps) {
    MASKOFF_CHECK(x.ndim() == 4, "batchnorm2d: input must be NCHW");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    MASKOFF_CHECK(gamma.numel() == c && beta.numel() == c, "batchnorm2d: affine parameter size");
    MASKOFF_CHECK(static_cast<int64_t>(running_mean.size()) == c &&
                      static_cast<int64_t>(running_var.size()) == c,
                  "batchnorm2d: running stat size");
    const int64_t hw = h * w;
    const int64_t m = n * hw;

    std::vector<double> mu(static_cast<size_t>(c), 0.0), var(static_cast<size_t>(c), 0.0);
    if (training) {
        for (int64_t in = 0; in < n; ++in)
            for (int64_t ci = 0; ci < c; ++ci) {
                const double* xs = x.data() + (in * c + ci) * hw;
                double s = 0.0;
                for (int64_t i = 0; i < hw; ++i) s += xs[i];
                mu[static_cast<size_t>(ci)] += s;
            }
        for (auto& v : mu) v /= static_cast<double>(m);
        for (int64_t in = 0; in < n; ++in)
            for (int64_t ci = 0; ci < c; ++ci) {
                const double* xs = x.data() + (in * c + ci) * hw;
                const double mc = mu[static_cast<size_t>(ci)];
                double s = 0.0;
                for (int64_t i = 0; i < hw; ++i) {
                    const double d = xs[i] - mc;
                    s += d * d;
                }
                var[static_cast<size_t>(ci)] += s;
            }
        for (auto& v : var) v /= static_cast<double>(m);
        const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
        for (int64_t ci = 0; ci < c; ++ci) {
            running_mean[static_cast<size_t>(ci)] =
                (1.0 - momentum) * running_mean[static_cast<size_t>(ci)] + momentum * mu[static_cast<size_t>(ci)];
            running_var[static_cast<size_t>(ci)] =
                (1.0 - momentum) * running_var[static_cast<size_t>(ci)] +
                momentum * var[static_cast<size_t>(ci)] * unbias;
        }
    } else {
        mu = running_mean;
        var = running_var;
    }

    auto fn = std::make_shared<BatchNormFn>();
    fn->n = n;
    fn->c = c;
    fn->h = h;
    fn->w = w;
    fn->training = training;
    fn->invstd.resize(static_cast<size_t>(c));
    for (int64_t ci = 0; ci < c; ++ci)
        fn->invstd[static_cast<size_t>(ci)] = 1.0 / std::sqrt(var[static_cast<size_t>(ci)] + eps);

    std::vector<double> out(x.vec().size());
    fn->xhat.resize(out.size());
    for (int64_t in = 0; in < n; ++in)
        for (int64_t ci = 0; ci < c; ++ci) {
            const double* xs = x.data() + (in * c + ci) * hw;
            double* os = out.data() + (in * c + ci) * hw;
            double* xh = fn->xhat.data() + (in * c + ci) * hw;
            const double mc = mu[static_cast<size_t>(ci)];
            const double is = fn->invstd[static_cast<size_t>(ci)];
            const double gc = gamma.data()[ci], bc = beta.data()[ci];
            for (int64_t i = 0; i < hw; ++i) {
                xh[i] = (xs[i] - mc) * is;
                os[i] = gc * xh[i] + bc;
            }
        }
    fn->inputs = {x, gamma, beta};
    return make_result(x.shape(), std::move(out), fn);
}

}  // namespace maskoff
