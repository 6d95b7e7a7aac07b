#include "maskoff/losses.hpp"

#include <cmath>

#include "maskoff/common.hpp"
#include "maskoff/generator.hpp"

namespace maskoff::loss {

SupervisionMode supervision_mode_from_string(const std::string& s) {
    if (s == "local") return SupervisionMode::local;
    if (s == "full") return SupervisionMode::full;
    fail("unknown supervision mode '", s, "' (expected local|full)");
}

std::string to_string(SupervisionMode m) {
    return m == SupervisionMode::local ? "local" : "full";
}

Tensor reconstruction_loss(const Tensor& syn, const Tensor& gt) {
    MASKOFF_CHECK(syn.shape() == gt.shape(), "reconstruction_loss: shape mismatch");
    return mean(abs(sub(syn, gt)));
}

namespace {

void check_stacks(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    MASKOFF_CHECK(!a.empty(), "feature stacks are empty");
    MASKOFF_CHECK(a.size() == b.size(), "feature stacks differ in layer count: ", a.size(), " vs ",
                  b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        MASKOFF_CHECK(a[i].shape() == b[i].shape(), "feature stacks differ in shape at layer ", i);
        MASKOFF_CHECK(a[i].ndim() == 4, "feature maps must be [N,C,H,W]");
    }
}

}  // namespace

Tensor perceptual_loss(const std::vector<Tensor>& stack_syn, const std::vector<Tensor>& stack_gt) {
    check_stacks(stack_syn, stack_gt);
    const int64_t n = stack_syn[0].dim(0);
    Tensor total = Tensor::scalar(0.0);
    for (size_t i = 0; i < stack_syn.size(); ++i) {
        const Tensor& fs = stack_syn[i];
        const Tensor& fg = stack_gt[i];
        const double inv = 1.0 / static_cast<double>(fs.dim(1) * fs.dim(2) * fs.dim(3));
        Tensor diff = sub(fs, fg);
        for (int64_t s = 0; s < n; ++s) {
            Tensor norm = sqrt(sum(square(slice_batch(diff, s))));
            total = add(total, mul_scalar(norm, inv / static_cast<double>(n)));
        }
    }
    return total;
}

Tensor style_loss(const std::vector<Tensor>& stack_syn, const std::vector<Tensor>& stack_gt,
                  bool gram_spatial_norm) {
    check_stacks(stack_syn, stack_gt);
    Tensor total = Tensor::scalar(0.0);
    for (size_t i = 0; i < stack_syn.size(); ++i) {
        const int64_t n = stack_syn[i].dim(0);
        const int64_t c = stack_syn[i].dim(1);
        Tensor diff = sub(gram(stack_syn[i], gram_spatial_norm), gram(stack_gt[i], gram_spatial_norm));
        // Entrywise L1 of the Gram difference, per sample, scaled by 1/C^2.
        Tensor layer = sum(abs(diff));
        total = add(total, mul_scalar(layer, 1.0 / static_cast<double>(c * c * n)));
    }
    return total;
}

Tensor total_loss(const LossWeights& w, const Tensor& l_r, const Tensor& l_p, const Tensor& l_s,
                  const Tensor& l_adv) {
    MASKOFF_CHECK(std::isfinite(l_r.value()) && std::isfinite(l_p.value()) &&
                      std::isfinite(l_s.value()) && std::isfinite(l_adv.value()),
                  "total_loss: non-finite loss component (r=", l_r.value(), " p=", l_p.value(),
                  " s=", l_s.value(), " adv=", l_adv.value(), ")");
    Tensor total = mul_scalar(l_r, w.lambda_r);
    total = add(total, mul_scalar(l_p, w.lambda_p));
    total = add(total, mul_scalar(l_s, w.lambda_s));
    total = add(total, mul_scalar(l_adv, w.lambda_adv));
    return total;
}

Tensor supervision_target(SupervisionMode mode, const Tensor& inp, const Tensor& mask,
                          const Tensor& raw) {
    if (mode == SupervisionMode::full) return raw;
    return gen::composite_tensor(inp, mask, raw);
}

}  // namespace maskoff::loss
