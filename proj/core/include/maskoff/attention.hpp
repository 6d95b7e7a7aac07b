#ifndef MASKOFF_ATTENTION_HPP
#define MASKOFF_ATTENTION_HPP

#include <optional>
#include <string>

#include "maskoff/nn.hpp"

namespace maskoff::attn {

struct CSAMConfig {
    int64_t channels = 0;
    double beta_init = 0.0;  // block starts as a pure residual
};

// Channel-spatial attention: one 3x3x3 convolution over the (C,H,W) volume
// yields a full-shape attention score W_csa; the output is
// beta * sigmoid(W_csa) ⊙ F_D + F_D.
class CSAM {
public:
    CSAM() = default;
    CSAM(const CSAMConfig& cfg, nn::ParamStore& ps, const std::string& name, Rng& rng);

    Tensor forward(const Tensor& f_d) const;
    const CSAMConfig& config() const { return cfg_; }
    const Tensor& beta() const { return beta_; }

private:
    CSAMConfig cfg_;
    Tensor w3d_, b3d_, beta_;
};

// The four parallel dilated 3x3 convolutions (rates 1,2,4,8), each C -> C/4
// with ReLU, concatenated back to C channels in fixed rate order.
class DilatedPyramid {
public:
    DilatedPyramid() = default;
    DilatedPyramid(int64_t channels, nn::ParamStore& ps, const std::string& name, Rng& rng);

    Tensor branch(const Tensor& f_inp, int rate) const;  // one branch, C/4 channels
    Tensor forward(const Tensor& f_inp) const;           // concatenated F_D

private:
    const nn::Conv2d& conv_for(int rate) const;
    int64_t channels_ = 0;
    nn::Conv2d b1_, b2_, b4_, b8_;
};

struct MCSAMConfig {
    int64_t channels = 0;  // divisible by 4
    double beta_init = 0.0;
};

// Multi-scale CSAM: F_D = pyramid(F_inp); output = F_inp + CSAM(F_D).
class MCSAM {
public:
    MCSAM() = default;
    MCSAM(const MCSAMConfig& cfg, nn::ParamStore& ps, const std::string& name, Rng& rng);

    Tensor forward(const Tensor& f_inp) const;
    const DilatedPyramid& pyramid() const { return pyramid_; }
    const CSAM& csam() const { return csam_; }

private:
    MCSAMConfig cfg_;
    DilatedPyramid pyramid_;
    CSAM csam_;
};

// Bottleneck variants for the ablations: the full block, attention without
// the multi-scale pyramid, or the pyramid without attention.
enum class AttentionMode { mcsam, csam_only, none };

AttentionMode attention_mode_from_string(const std::string& s);
const char* to_string(AttentionMode mode);

class BottleneckBlock {
public:
    BottleneckBlock() = default;
    BottleneckBlock(AttentionMode mode, int64_t channels, nn::ParamStore& ps,
                    const std::string& name, Rng& rng);

    Tensor forward(const Tensor& x) const;
    AttentionMode mode() const { return mode_; }

private:
    AttentionMode mode_ = AttentionMode::mcsam;
    std::optional<DilatedPyramid> pyramid_;
    std::optional<CSAM> csam_;
};

}  // namespace maskoff::attn

#endif
