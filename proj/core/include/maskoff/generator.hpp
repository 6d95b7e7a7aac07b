#ifndef MASKOFF_GENERATOR_HPP
#define MASKOFF_GENERATOR_HPP

#include <vector>

#include "maskoff/attention.hpp"
#include "maskoff/nn.hpp"

namespace maskoff::gen {

struct GeneratorConfig {
    int64_t base_width = 16;
    int64_t input_size = 64;  // divisible by 16
    int num_mcsam = 3;
    attn::AttentionMode attention = attn::AttentionMode::mcsam;
};

// Eq. 1 inside the training graph: (1-m)*inp + m*raw with a {0,1} mask, an
// exact per-pixel selection. mask is [N,1,H,W] and broadcasts over RGB.
Tensor composite_tensor(const Tensor& inp, const Tensor& mask, const Tensor& raw);

// Gated-convolution inpainting generator. Encoder: four stride-2 gated
// convolutions with widths base_width*(1,2,4,8). Bottleneck: num_mcsam
// attention blocks at constant shape. Decoder: four stages of bilinear
// 2x upsampling + skip concatenation + stride-1 gated convolution, the
// skips being the pre-downsample encoder inputs (the deepest skip is the
// raw 4-channel input). Head: 3-channel convolution + tanh.
class Generator {
public:
    Generator(const GeneratorConfig& cfg, uint64_t init_seed);

    // inp: [N,3,H,W] in model range; mask: [N,1,H,W] in {0,1}; H=W=input_size.
    Tensor forward(const Tensor& inp, const Tensor& mask) const;  // raw I_r in (-1,1)
    Tensor inpaint(const Tensor& inp, const Tensor& mask) const;  // composited I_syn

    const GeneratorConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

private:
    GeneratorConfig cfg_;
    nn::ParamStore ps_;
    std::vector<nn::GatedConv> enc_, dec_;
    std::vector<attn::BottleneckBlock> bottleneck_;
    nn::Conv2d head_;
};

}  // namespace maskoff::gen

#endif
