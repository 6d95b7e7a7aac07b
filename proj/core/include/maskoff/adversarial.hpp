#ifndef MASKOFF_ADVERSARIAL_HPP
#define MASKOFF_ADVERSARIAL_HPP

#include <vector>

#include "maskoff/nn.hpp"

namespace maskoff::adv {

// 70x70 patch critic: stride-2 convolution stack with leaky-ReLU, widths
// base_width*(1,2,4,8), then two stride-1 layers ending in a 1-channel score
// grid with no output nonlinearity. Geometry (and hence the receptive field)
// is independent of base_width.
struct PatchDiscConfig {
    int64_t base_width = 64;
    int64_t in_channels = 3;
};

class PatchDiscriminator {
public:
    PatchDiscriminator(const PatchDiscConfig& cfg, uint64_t init_seed);

    // x: [N,C,H,W] in model range, H and W at least kMinInput.
    Tensor forward(const Tensor& x) const;  // score grid [N,1,h,w]

    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

    static constexpr int64_t kMinInput = 24;         // smallest size yielding a score cell
    static constexpr int64_t kReceptiveField = 70;   // per score cell, by conv arithmetic

private:
    PatchDiscConfig cfg_;
    nn::ParamStore ps_;
    std::vector<nn::Conv2d> convs_;
};

// Small critic over a frozen mid-level backbone feature map (the same
// extractor the perceptual loss uses, tapped at its third stage).
struct FeatureDiscConfig {
    int64_t in_channels = 256;
    int64_t base_width = 64;
};

class FeaturePatchDiscriminator {
public:
    FeaturePatchDiscriminator(const FeatureDiscConfig& cfg, uint64_t init_seed);

    // feat: [N,C,h,w] backbone activation.
    Tensor forward(const Tensor& feat) const;  // score grid [N,1,h',w']

    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

private:
    FeatureDiscConfig cfg_;
    nn::ParamStore ps_;
    std::vector<nn::Conv2d> convs_;
};

struct AdvLosses {
    Tensor gen;   // scalar
    Tensor disc;  // scalar
};

// Relativistic average LS losses over critic score grids. With
// D(a,b) = C(a) - mean(C(b)):
//   L_gen  = -E[D(real,fake)^2] - E[(1 - D(fake,real))^2]
//   L_disc = -E[(1 - D(real,fake))^2] - E[D(fake,real)^2]
// Expectations average jointly over batch and score cells. Both losses are
// invariant to adding a constant to every critic score.
AdvLosses ralsgan_losses(const Tensor& scores_real, const Tensor& scores_fake);

}  // namespace maskoff::adv

#endif
