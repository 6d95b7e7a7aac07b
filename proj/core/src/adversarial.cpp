#include "maskoff/adversarial.hpp"

#include <string>

#include "maskoff/common.hpp"

namespace maskoff::adv {

namespace {

constexpr double kLeakySlope = 0.2;

}  // namespace

PatchDiscriminator::PatchDiscriminator(const PatchDiscConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    MASKOFF_CHECK(cfg.base_width >= 1 && cfg.in_channels >= 1,
                  "PatchDiscriminator: widths must be positive");
    Rng rng(init_seed);
    const int64_t c = cfg.base_width;
    // k4 layers: three stride-2, one stride-1 at width 8c, one stride-1 scorer.
    const int64_t cout[5] = {c, c * 2, c * 4, c * 8, 1};
    const int64_t stride[5] = {2, 2, 2, 1, 1};
    int64_t cin = cfg.in_channels;
    for (int k = 0; k < 5; ++k) {
        convs_.emplace_back(ps_, "disc_patch.conv" + std::to_string(k + 1), cin, cout[k],
                            /*ksize=*/4, stride[k], /*pad=*/1, rng);
        cin = cout[k];
    }
}

Tensor PatchDiscriminator::forward(const Tensor& x) const {
    MASKOFF_CHECK(x.ndim() == 4 && x.dim(1) == cfg_.in_channels,
                  "PatchDiscriminator: expected [N,", cfg_.in_channels, ",H,W] input");
    MASKOFF_CHECK(x.dim(2) >= kMinInput && x.dim(3) >= kMinInput,
                  "PatchDiscriminator: input ", x.dim(2), "x", x.dim(3),
                  " is too small for the 70x70 patch critic (needs at least ", kMinInput, " px)");
    Tensor h = x;
    for (size_t k = 0; k < convs_.size(); ++k) {
        h = convs_[k](h);
        if (k + 1 < convs_.size()) h = leaky_relu(h, kLeakySlope);
    }
    return h;
}

FeaturePatchDiscriminator::FeaturePatchDiscriminator(const FeatureDiscConfig& cfg,
                                                     uint64_t init_seed)
    : cfg_(cfg) {
    MASKOFF_CHECK(cfg.base_width >= 1 && cfg.in_channels >= 1,
                  "FeaturePatchDiscriminator: widths must be positive");
    Rng rng(init_seed);
    const int64_t c = cfg.base_width;
    convs_.emplace_back(ps_, "disc_feat.conv1", cfg.in_channels, c, 3, 1, 1, rng);
    convs_.emplace_back(ps_, "disc_feat.conv2", c, c * 2, 4, 2, 1, rng);
    convs_.emplace_back(ps_, "disc_feat.conv3", c * 2, 1, 3, 1, 1, rng);
}

Tensor FeaturePatchDiscriminator::forward(const Tensor& feat) const {
    MASKOFF_CHECK(feat.ndim() == 4 && feat.dim(1) == cfg_.in_channels,
                  "FeaturePatchDiscriminator: expected [N,", cfg_.in_channels, ",h,w] input");
    MASKOFF_CHECK(feat.dim(2) >= 2 && feat.dim(3) >= 2,
                  "FeaturePatchDiscriminator: feature map ", feat.dim(2), "x", feat.dim(3),
                  " is too small");
    Tensor h = feat;
    for (size_t k = 0; k < convs_.size(); ++k) {
        h = convs_[k](h);
        if (k + 1 < convs_.size()) h = leaky_relu(h, kLeakySlope);
    }
    return h;
}

namespace {

// a - s broadcast over a's shape, where s is a 0-d tensor in the graph.
Tensor sub_broadcast(const Tensor& a, const Tensor& s) {
    return add(a, scale_by(Tensor::full(a.shape(), 1.0), neg(s)));
}

}  // namespace

AdvLosses ralsgan_losses(const Tensor& scores_real, const Tensor& scores_fake) {
    MASKOFF_CHECK(scores_real.numel() > 0 && scores_fake.numel() > 0,
                  "ralsgan_losses: empty score grid");
    MASKOFF_CHECK(scores_real.shape() == scores_fake.shape(),
                  "ralsgan_losses: score grids differ: ", shape_str(scores_real.shape()), " vs ",
                  shape_str(scores_fake.shape()));
    Tensor d_rf = sub_broadcast(scores_real, mean(scores_fake));  // D(real, fake)
    Tensor d_fr = sub_broadcast(scores_fake, mean(scores_real));  // D(fake, real)
    Tensor one_minus_rf = add_scalar(neg(d_rf), 1.0);
    Tensor one_minus_fr = add_scalar(neg(d_fr), 1.0);
    AdvLosses out;
    out.gen = neg(add(mean(square(d_rf)), mean(square(one_minus_fr))));
    out.disc = neg(add(mean(square(one_minus_rf)), mean(square(d_fr))));
    return out;
}

}  // namespace maskoff::adv
