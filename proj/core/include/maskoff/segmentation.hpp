#ifndef MASKOFF_SEGMENTATION_HPP
#define MASKOFF_SEGMENTATION_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "maskoff/image.hpp"
#include "maskoff/nn.hpp"

namespace maskoff::seg {

struct SegNetConfig {
    int64_t base_width = 8;
    int depth = 4;
    int64_t input_size = 64;
};

// conv 3x3 -> batch norm -> ReLU, the segmenter's repeating unit.
struct ConvBlock {
    nn::Conv2d conv;
    nn::BatchNorm2d norm;

    ConvBlock() = default;
    ConvBlock(nn::ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, int stride,
              Rng& rng);
    Tensor operator()(const Tensor& x, bool training) const;
};

// Modified U-Net: a stride-2 stem convolution block, then depth encoder
// blocks (two conv blocks each; max-pooling precedes blocks 2..depth, the
// first block rides on the stem's downsampling), mirrored by depth decoder
// blocks of bilinear upsampling + skip concatenation + two conv blocks.
// The final skip is the input image itself; the head is a 1x1 convolution
// with sigmoid.
class SegNet {
public:
    SegNet(const SegNetConfig& cfg, uint64_t init_seed);

    // [N,3,H,W] in [0,1] -> [N,1,H,W] soft mask in (0,1)
    Tensor forward(const Tensor& img, bool training) const;

    const SegNetConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

private:
    struct Stage {
        ConvBlock c1, c2;
    };

    SegNetConfig cfg_;
    nn::ParamStore ps_;
    ConvBlock stem_;
    std::vector<Stage> enc_, dec_;
    nn::Conv2d head_;
};

// Mean binary cross-entropy with predictions clamped to [1e-7, 1-1e-7].
Tensor bce_loss(const Tensor& pred, const Tensor& target);

// Threshold one sample of a [N,1,H,W] soft mask; >= keeps threshold pixels.
Mask binarize(const Tensor& pred, double threshold = 0.5, int64_t sample = 0);

// Intersection over union; both-empty is defined as 1.0.
double iou(const Mask& a, const Mask& b);

struct SegTrainOptions {
    uint64_t seed = 0;
    int64_t steps = 500;
    int64_t batch_size = 4;
    double base_lr = 2e-4;
    double lr_decay_per_epoch = 2e-6;
    int64_t decay_start_epoch = 20;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    int64_t steps_per_epoch = 0;  // 0: one pass over the dataset
    int64_t log_every = 50;
    std::ostream* log = nullptr;
};

struct SegTrainResult {
    int64_t steps = 0;
    double final_bce = 0.0;
    double train_iou = 0.0;  // mean IoU over the training set at the end
};

// Overfit-style trainer: loads all (masked, mask) pairs from the manifest
// into memory, then runs Adam on BCE with seeded with-replacement batches.
SegTrainResult train_segmenter(SegNet& net, const std::string& manifest_path,
                               const SegTrainOptions& opt);

}  // namespace maskoff::seg

#endif
