#include "maskoff/generator.hpp"

#include "maskoff/common.hpp"

namespace maskoff::gen {

Tensor composite_tensor(const Tensor& inp, const Tensor& mask, const Tensor& raw) {
    MASKOFF_CHECK(inp.ndim() == 4 && inp.dim(1) == 3, "composite_tensor: inp must be [N,3,H,W]");
    MASKOFF_CHECK(mask.ndim() == 4 && mask.dim(1) == 1, "composite_tensor: mask must be [N,1,H,W]");
    MASKOFF_CHECK(raw.shape() == inp.shape(), "composite_tensor: raw/inp shape mismatch");
    MASKOFF_CHECK(mask.dim(0) == inp.dim(0) && mask.dim(2) == inp.dim(2) && mask.dim(3) == inp.dim(3),
                  "composite_tensor: mask/inp spatial mismatch");
    Tensor m3 = concat_channels({mask, mask, mask});
    Tensor keep = add_scalar(neg(m3), 1.0);  // 1-m
    return add(mul(keep, inp), mul(m3, raw));
}

Generator::Generator(const GeneratorConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    MASKOFF_CHECK(cfg.base_width >= 1, "Generator: base_width must be >= 1");
    MASKOFF_CHECK(cfg.input_size >= 16 && cfg.input_size % 16 == 0,
                  "Generator: input_size must be a positive multiple of 16, got ", cfg.input_size);
    MASKOFF_CHECK(cfg.num_mcsam >= 1, "Generator: need at least one bottleneck block");
    const int64_t bw = cfg.base_width;
    MASKOFF_CHECK((bw * 8) % 4 == 0, "Generator: bottleneck width must be divisible by 4");
    Rng rng(init_seed);

    // Encoder: 4-channel input (RGB + mask), stride-2 gated convs.
    const int64_t widths[4] = {bw, bw * 2, bw * 4, bw * 8};
    int64_t cin = 4;
    for (int k = 0; k < 4; ++k) {
        enc_.emplace_back(ps_, "enc" + std::to_string(k + 1), cin, widths[k],
                          /*ksize=*/3, /*stride=*/2, /*pad=*/1, rng);
        cin = widths[k];
    }

    for (int b = 0; b < cfg.num_mcsam; ++b) {
        bottleneck_.emplace_back(cfg.attention, bw * 8, ps_, "mcsam" + std::to_string(b + 1), rng);
    }

    // Decoder: each stage upsamples, concatenates the pre-downsample encoder
    // input of the mirrored stage, and applies a stride-1 gated conv.
    const int64_t skip_c[4] = {bw * 4, bw * 2, bw, 4};
    const int64_t out_c[4] = {bw * 4, bw * 2, bw, bw};
    int64_t c = bw * 8;
    for (int k = 0; k < 4; ++k) {
        dec_.emplace_back(ps_, "dec" + std::to_string(k + 1), c + skip_c[k], out_c[k],
                          /*ksize=*/3, /*stride=*/1, /*pad=*/1, rng);
        c = out_c[k];
    }

    head_ = nn::Conv2d(ps_, "head", bw, 3, /*ksize=*/3, /*stride=*/1, /*pad=*/1, rng);
}

Tensor Generator::forward(const Tensor& inp, const Tensor& mask) const {
    MASKOFF_CHECK(inp.ndim() == 4 && inp.dim(1) == 3, "Generator: inp must be [N,3,H,W]");
    MASKOFF_CHECK(mask.ndim() == 4 && mask.dim(1) == 1, "Generator: mask must be [N,1,H,W]");
    MASKOFF_CHECK(inp.dim(2) == cfg_.input_size && inp.dim(3) == cfg_.input_size,
                  "Generator: expected ", cfg_.input_size, "x", cfg_.input_size, " input, got ",
                  inp.dim(2), "x", inp.dim(3));
    MASKOFF_CHECK(mask.dim(0) == inp.dim(0) && mask.dim(2) == inp.dim(2) && mask.dim(3) == inp.dim(3),
                  "Generator: mask/inp spatial mismatch");

    Tensor x = concat_channels({inp, mask});
    std::vector<Tensor> skips;
    for (const auto& e : enc_) {
        skips.push_back(x);  // pre-downsample feature
        x = e(x);
    }
    for (const auto& b : bottleneck_) x = b.forward(x);
    for (size_t k = 0; k < dec_.size(); ++k) {
        const Tensor& skip = skips[skips.size() - 1 - k];
        x = upsample_bilinear(x, skip.dim(2), skip.dim(3));
        x = dec_[k](concat_channels({x, skip}));
    }
    return tanh(head_(x));
}

Tensor Generator::inpaint(const Tensor& inp, const Tensor& mask) const {
    return composite_tensor(inp, mask, forward(inp, mask));
}

}  // namespace maskoff::gen
