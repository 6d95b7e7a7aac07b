#include "maskoff/attention.hpp"

namespace maskoff::attn {

CSAM::CSAM(const CSAMConfig& cfg, nn::ParamStore& ps, const std::string& name, Rng& rng)
    : cfg_(cfg) {
    MASKOFF_CHECK(cfg.channels >= 1, "csam needs at least one channel");
    w3d_ = ps.param(name + ".w3d", nn::kaiming_conv({3, 3, 3}, rng));
    b3d_ = ps.param(name + ".b3d", Tensor::zeros({1}));
    beta_ = ps.param(name + ".beta", Tensor::scalar(cfg.beta_init));
}

Tensor CSAM::forward(const Tensor& f_d) const {
    MASKOFF_CHECK(f_d.ndim() == 4 && f_d.dim(1) == cfg_.channels, "csam configured for ",
                  cfg_.channels, " channels, got ", shape_str(f_d.shape()));
    Tensor w_csa = conv3d_volume(f_d, w3d_, b3d_);
    return add(scale_by(mul(sigmoid(w_csa), f_d), beta_), f_d);
}

DilatedPyramid::DilatedPyramid(int64_t channels, nn::ParamStore& ps, const std::string& name,
                               Rng& rng)
    : channels_(channels) {
    MASKOFF_CHECK(channels >= 4 && channels % 4 == 0, "pyramid channels (", channels,
                  ") must be divisible by 4");
    const int64_t cb = channels / 4;
    b1_ = nn::Conv2d(ps, name + ".branch1", channels, cb, 3, 1, 1, rng, 1);
    b2_ = nn::Conv2d(ps, name + ".branch2", channels, cb, 3, 1, 2, rng, 2);
    b4_ = nn::Conv2d(ps, name + ".branch4", channels, cb, 3, 1, 4, rng, 4);
    b8_ = nn::Conv2d(ps, name + ".branch8", channels, cb, 3, 1, 8, rng, 8);
}

const nn::Conv2d& DilatedPyramid::conv_for(int rate) const {
    switch (rate) {
        case 1: return b1_;
        case 2: return b2_;
        case 4: return b4_;
        case 8: return b8_;
        default: fail("no dilated branch with rate ", rate);
    }
}

Tensor DilatedPyramid::branch(const Tensor& f_inp, int rate) const {
    MASKOFF_CHECK(f_inp.ndim() == 4 && f_inp.dim(1) == channels_, "pyramid configured for ",
                  channels_, " channels, got ", shape_str(f_inp.shape()));
    return relu(conv_for(rate)(f_inp));
}

Tensor DilatedPyramid::forward(const Tensor& f_inp) const {
    return concat_channels(
        {branch(f_inp, 1), branch(f_inp, 2), branch(f_inp, 4), branch(f_inp, 8)});
}

MCSAM::MCSAM(const MCSAMConfig& cfg, nn::ParamStore& ps, const std::string& name, Rng& rng)
    : cfg_(cfg),
      pyramid_(cfg.channels, ps, name, rng),
      csam_(CSAMConfig{cfg.channels, cfg.beta_init}, ps, name + ".csam", rng) {}

Tensor MCSAM::forward(const Tensor& f_inp) const {
    return add(f_inp, csam_.forward(pyramid_.forward(f_inp)));
}

AttentionMode attention_mode_from_string(const std::string& s) {
    if (s == "mcsam") return AttentionMode::mcsam;
    if (s == "csam_only") return AttentionMode::csam_only;
    if (s == "none") return AttentionMode::none;
    fail("unknown attention mode '", s, "' (expected mcsam | csam_only | none)");
}

const char* to_string(AttentionMode mode) {
    switch (mode) {
        case AttentionMode::mcsam: return "mcsam";
        case AttentionMode::csam_only: return "csam_only";
        case AttentionMode::none: return "none";
    }
    fail("bad attention mode value");
}

BottleneckBlock::BottleneckBlock(AttentionMode mode, int64_t channels, nn::ParamStore& ps,
                                 const std::string& name, Rng& rng)
    : mode_(mode) {
    if (mode != AttentionMode::csam_only) pyramid_.emplace(channels, ps, name, rng);
    if (mode != AttentionMode::none)
        csam_.emplace(CSAMConfig{channels, 0.0}, ps, name + ".csam", rng);
}

Tensor BottleneckBlock::forward(const Tensor& x) const {
    switch (mode_) {
        case AttentionMode::mcsam: return add(x, csam_->forward(pyramid_->forward(x)));
        case AttentionMode::csam_only: return csam_->forward(x);
        case AttentionMode::none: return add(x, pyramid_->forward(x));
    }
    fail("bad attention mode value");
}

}  // namespace maskoff::attn
