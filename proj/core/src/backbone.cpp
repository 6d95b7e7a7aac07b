#include "maskoff/backbone.hpp"

#include <cstdlib>
#include <filesystem>

#include "maskoff/checkpoint.hpp"
#include "maskoff/common.hpp"
#include "maskoff/nn.hpp"
#include "maskoff/rng.hpp"

namespace maskoff::backbone {

namespace {

// VGG-16 feature stack: name, output channels, tap flag, pool-before flag.
struct VggSpec {
    const char* name;
    int64_t cout;
    bool tap;
    bool pool_before;
};

constexpr VggSpec kVgg16[] = {
    {"conv1_1", 64, false, false}, {"conv1_2", 64, true, false},
    {"conv2_1", 128, false, true}, {"conv2_2", 128, true, false},
    {"conv3_1", 256, false, true}, {"conv3_2", 256, false, false}, {"conv3_3", 256, true, false},
    {"conv4_1", 512, false, true}, {"conv4_2", 512, false, false}, {"conv4_3", 512, true, false},
    {"conv5_1", 512, false, true}, {"conv5_2", 512, false, false}, {"conv5_3", 512, true, false},
};

Tensor model_to_unit(const Tensor& img) { return add_scalar(mul_scalar(img, 0.5), 0.5); }

}  // namespace

Vgg16Backbone::Vgg16Backbone(const std::string& weights_path) : path_(weights_path) {
    MASKOFF_CHECK(std::filesystem::exists(weights_path),
                  "VGG-16 backbone weights not found at '", weights_path,
                  "'. Export them once with scripts/export_vgg16.py and point ", kBackboneDirEnv,
                  " at the output directory.");
    const ckpt::Checkpoint c = ckpt::load(weights_path);

    // ImageNet normalization folded into a frozen 1x1 convolution
    const double mean[3] = {0.485, 0.456, 0.406};
    const double stddev[3] = {0.229, 0.224, 0.225};
    std::vector<double> nw(9, 0.0), nb(3);
    for (int i = 0; i < 3; ++i) {
        nw[static_cast<size_t>(i * 3 + i)] = 1.0 / stddev[i];
        nb[static_cast<size_t>(i)] = -mean[i] / stddev[i];
    }
    norm_w_ = Tensor::from({3, 3, 1, 1}, std::move(nw));
    norm_b_ = Tensor::from({3}, std::move(nb));

    int64_t cin = 3;
    for (const VggSpec& s : kVgg16) {
        const ckpt::Blob* w = c.find(std::string(s.name) + ".w");
        const ckpt::Blob* b = c.find(std::string(s.name) + ".b");
        MASKOFF_CHECK(w && b, "'", weights_path, "' is missing layer ", s.name);
        const Shape expect{s.cout, cin, 3, 3};
        MASKOFF_CHECK(w->shape == expect, "layer ", s.name, " has shape ", shape_str(w->shape),
                      ", expected ", shape_str(expect));
        MASKOFF_CHECK(static_cast<int64_t>(b->data.size()) == s.cout, "layer ", s.name,
                      " bias size mismatch");
        Layer l;
        l.w = Tensor::from(w->shape, w->data);
        l.b = Tensor::from(b->shape, b->data);
        l.tap = s.tap;
        l.pool_before = s.pool_before;
        layers_.push_back(std::move(l));
        cin = s.cout;
    }
}

std::vector<Tensor> Vgg16Backbone::extract(const Tensor& img) const {
    MASKOFF_CHECK(img.ndim() == 4 && img.dim(1) == 3, "backbone expects [N,3,H,W]");
    Tensor x = conv2d(model_to_unit(img), norm_w_, norm_b_, 1, 0);
    std::vector<Tensor> taps;
    for (const Layer& l : layers_) {
        if (l.pool_before) x = maxpool2x(x);
        x = relu(conv2d(x, l.w, l.b, 1, 1));
        if (l.tap) taps.push_back(x);
    }
    return taps;
}

std::string Vgg16Backbone::describe() const { return "vgg16(" + path_ + ")"; }

SurrogateBackbone::SurrogateBackbone(uint64_t seed, int64_t taps) : seed_(seed) {
    MASKOFF_CHECK(taps >= 1 && taps <= 5, "surrogate backbone supports 1..5 taps, got ", taps);
    const int64_t widths[5] = {8, 12, 16, 24, 32};
    Rng rng = Rng::keyed(seed, 0xfee7);
    int64_t cin = 3;
    for (int64_t i = 0; i < taps; ++i) {
        Stage s;
        s.w = nn::kaiming_conv({widths[i], cin, 3, 3}, rng);
        s.b = Tensor::zeros({widths[i]});
        stages_.push_back(std::move(s));
        cin = widths[i];
    }
}

std::vector<Tensor> SurrogateBackbone::extract(const Tensor& img) const {
    MASKOFF_CHECK(img.ndim() == 4 && img.dim(1) == 3, "backbone expects [N,3,H,W]");
    std::vector<Tensor> taps;
    Tensor x = img;
    for (size_t i = 0; i < stages_.size(); ++i) {
        if (i > 0) x = maxpool2x(x);
        x = relu(conv2d(x, stages_[i].w, stages_[i].b, 1, 1));
        taps.push_back(x);
    }
    return taps;
}

std::string SurrogateBackbone::describe() const {
    return "surrogate(seed=" + std::to_string(seed_) +
           ", taps=" + std::to_string(stages_.size()) + ")";
}

std::unique_ptr<FeatureBackbone> make_backbone(const std::string& spec) {
    if (spec == "vgg16") {
        const char* dir = std::getenv(kBackboneDirEnv);
        MASKOFF_CHECK(dir && *dir, "backbone 'vgg16' needs ", kBackboneDirEnv,
                      " to point at a directory containing vgg16.ckpt (create it with "
                      "scripts/export_vgg16.py)");
        return std::make_unique<Vgg16Backbone>((std::filesystem::path(dir) / "vgg16.ckpt").string());
    }
    if (spec.rfind("vgg16:", 0) == 0) return std::make_unique<Vgg16Backbone>(spec.substr(6));
    if (spec == "surrogate") return std::make_unique<SurrogateBackbone>();
    if (spec.rfind("surrogate:", 0) == 0) {
        const std::string rest = spec.substr(10);
        const size_t colon = rest.find(':');
        try {
            if (colon == std::string::npos)
                return std::make_unique<SurrogateBackbone>(std::stoull(rest));
            return std::make_unique<SurrogateBackbone>(std::stoull(rest.substr(0, colon)),
                                                       std::stoll(rest.substr(colon + 1)));
        } catch (const std::logic_error&) {
            fail("bad surrogate backbone spec '", spec, "'");
        }
    }
    fail("unknown backbone spec '", spec, "' (expected vgg16 | vgg16:<file> | surrogate[:seed[:taps]])");
}

}  // namespace maskoff::backbone
