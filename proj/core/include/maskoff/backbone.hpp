#ifndef MASKOFF_BACKBONE_HPP
#define MASKOFF_BACKBONE_HPP

#include <memory>
#include <string>
#include <vector>

#include "maskoff/tensor.hpp"

namespace maskoff::backbone {

inline constexpr const char* kBackboneDirEnv = "MASKOFF_BACKBONE_DIR";

// Frozen feature extractor shared by the perceptual/style losses and the
// feature patch discriminator. Input is a model-range [-1,1] RGB batch;
// implementations handle their own normalization. Gradients flow to the
// input, never into backbone weights.
class FeatureBackbone {
public:
    virtual ~FeatureBackbone() = default;
    virtual std::vector<Tensor> extract(const Tensor& img) const = 0;
    virtual int64_t num_taps() const = 0;
    virtual std::string describe() const = 0;
};

// VGG-16 tapped at relu1_2, relu2_2, relu3_3, relu4_3, relu5_3, loaded from
// a named-blob weights file (see scripts/export_vgg16.py).
class Vgg16Backbone : public FeatureBackbone {
public:
    explicit Vgg16Backbone(const std::string& weights_path);
    std::vector<Tensor> extract(const Tensor& img) const override;
    int64_t num_taps() const override { return 5; }
    std::string describe() const override;

private:
    struct Layer {
        Tensor w, b;
        bool tap = false;
        bool pool_before = false;
    };
    std::string path_;
    Tensor norm_w_, norm_b_;  // ImageNet normalization as a 1x1 convolution
    std::vector<Layer> layers_;
};

// Deterministic frozen random conv stack mirroring the VGG tap layout at a
// desk-friendly width, seeded so every construction is identical. Used by
// the desk presets and as the finite-difference-sized stand-in in tests.
class SurrogateBackbone : public FeatureBackbone {
public:
    explicit SurrogateBackbone(uint64_t seed = 0x5eed, int64_t taps = 5);
    std::vector<Tensor> extract(const Tensor& img) const override;
    int64_t num_taps() const override { return static_cast<int64_t>(stages_.size()); }
    std::string describe() const override;

private:
    struct Stage {
        Tensor w, b;
    };
    uint64_t seed_;
    std::vector<Stage> stages_;
};

// spec: "vgg16" (weights from $MASKOFF_BACKBONE_DIR/vgg16.ckpt)
//     | "vgg16:<weights-file>"
//     | "surrogate" | "surrogate:<seed>" | "surrogate:<seed>:<taps>"
std::unique_ptr<FeatureBackbone> make_backbone(const std::string& spec);

}  // namespace maskoff::backbone

#endif
