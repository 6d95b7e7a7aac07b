#include "maskoff/segmentation.hpp"

#include <cmath>
#include <ostream>

#include "maskoff/mask_synthesis.hpp"

namespace maskoff::seg {

ConvBlock::ConvBlock(nn::ParamStore& ps, const std::string& name, int64_t cin, int64_t cout,
                     int stride, Rng& rng)
    : conv(ps, name + ".conv", cin, cout, 3, stride, 1, rng), norm(ps, name + ".norm", cout) {}

Tensor ConvBlock::operator()(const Tensor& x, bool training) const {
    return relu(norm(conv(x), training));
}

SegNet::SegNet(const SegNetConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    MASKOFF_CHECK(cfg.depth >= 1, "segnet depth must be >= 1");
    MASKOFF_CHECK(cfg.base_width >= 1, "segnet base width must be >= 1");
    MASKOFF_CHECK(cfg.input_size % (1LL << cfg.depth) == 0, "input size ", cfg.input_size,
                  " not divisible by 2^depth");
    Rng rng(init_seed);

    auto width = [&](int k) { return cfg.base_width << k; };  // block k in [0,depth)

    stem_ = ConvBlock(ps_, "stem", 3, width(0), 2, rng);
    enc_.resize(static_cast<size_t>(cfg.depth));
    for (int k = 0; k < cfg.depth; ++k) {
        const int64_t cin = k == 0 ? width(0) : width(k - 1);
        const std::string name = "enc" + std::to_string(k + 1);
        enc_[static_cast<size_t>(k)].c1 = ConvBlock(ps_, name + ".1", cin, width(k), 1, rng);
        enc_[static_cast<size_t>(k)].c2 = ConvBlock(ps_, name + ".2", width(k), width(k), 1, rng);
    }
    dec_.resize(static_cast<size_t>(cfg.depth));
    for (int k = 0; k < cfg.depth; ++k) {
        // decoder stage k lifts from width(depth-1-k); the skip is the
        // matching encoder output, or the input image at full resolution
        const int64_t from = width(cfg.depth - 1 - k);
        const bool last = k == cfg.depth - 1;
        const int64_t skip = last ? 3 : width(cfg.depth - 2 - k);
        const int64_t out = last ? width(0) : width(cfg.depth - 2 - k);
        const std::string name = "dec" + std::to_string(k + 1);
        dec_[static_cast<size_t>(k)].c1 = ConvBlock(ps_, name + ".1", from + skip, out, 1, rng);
        dec_[static_cast<size_t>(k)].c2 = ConvBlock(ps_, name + ".2", out, out, 1, rng);
    }
    head_ = nn::Conv2d(ps_, "head", width(0), 1, 1, 1, 0, rng);
}

Tensor SegNet::forward(const Tensor& img, bool training) const {
    MASKOFF_CHECK(img.ndim() == 4 && img.dim(1) == 3, "segnet expects [N,3,H,W]");
    MASKOFF_CHECK(img.dim(2) == cfg_.input_size && img.dim(3) == cfg_.input_size,
                  "segnet configured for ", cfg_.input_size, ", got ", img.dim(2), "x", img.dim(3));

    std::vector<Tensor> skips;  // encoder outputs, shallow to deep
    Tensor x = stem_(img, training);
    for (size_t k = 0; k < enc_.size(); ++k) {
        if (k > 0) x = maxpool2x(x);
        x = enc_[k].c2(enc_[k].c1(x, training), training);
        skips.push_back(x);
    }
    for (size_t k = 0; k < dec_.size(); ++k) {
        const bool last = k + 1 == dec_.size();
        const Tensor& skip = last ? img : skips[dec_.size() - 2 - k];
        x = upsample_bilinear(x, skip.dim(2), skip.dim(3));
        x = concat_channels({x, skip});
        x = dec_[k].c2(dec_[k].c1(x, training), training);
    }
    return sigmoid(head_(x));
}

Tensor bce_loss(const Tensor& pred, const Tensor& target) {
    MASKOFF_CHECK(pred.shape() == target.shape(), "bce_loss: shape mismatch ",
                  shape_str(pred.shape()), " vs ", shape_str(target.shape()));
    constexpr double eps = 1e-7;
    Tensor p = clamp(pred, eps, 1.0 - eps);
    Tensor pos = mul(target, log(p));
    Tensor neg_term = mul(add_scalar(neg(target), 1.0), log(add_scalar(neg(p), 1.0)));
    return neg(mean(add(pos, neg_term)));
}

Mask binarize(const Tensor& pred, double threshold, int64_t sample) {
    MASKOFF_CHECK(pred.ndim() == 4 && pred.dim(1) == 1, "binarize expects [N,1,H,W]");
    MASKOFF_CHECK(threshold > 0.0 && threshold < 1.0, "threshold must be in (0,1)");
    MASKOFF_CHECK(sample >= 0 && sample < pred.dim(0), "sample index out of range");
    const int64_t h = pred.dim(2), w = pred.dim(3);
    Mask m(h, w);
    const double* src = pred.data() + sample * h * w;
    for (int64_t i = 0; i < h * w; ++i) m.data[static_cast<size_t>(i)] = src[i] >= threshold ? 1 : 0;
    return m;
}

double iou(const Mask& a, const Mask& b) {
    MASKOFF_CHECK(a.h == b.h && a.w == b.w, "iou: mask sizes differ");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const bool av = a.data[i] != 0, bv = b.data[i] != 0;
        inter += (av && bv);
        uni += (av || bv);
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

SegTrainResult train_segmenter(SegNet& net, const std::string& manifest_path,
                               const SegTrainOptions& opt) {
    std::vector<Image> inputs;
    std::vector<Mask> targets;
    for (const auto& rec : synth::read_manifest(manifest_path)) {
        if (rec.status != "found") continue;
        synth::Triple t = synth::load_triple(manifest_path, rec);
        inputs.push_back(std::move(t.masked));
        targets.push_back(std::move(t.mask));
    }
    MASKOFF_CHECK(!inputs.empty(), "no usable records in '", manifest_path, "'");
    const int64_t n = static_cast<int64_t>(inputs.size());
    const int64_t steps_per_epoch =
        opt.steps_per_epoch > 0 ? opt.steps_per_epoch : (n + opt.batch_size - 1) / opt.batch_size;

    nn::Adam adam(net.params().tensors(), opt.base_lr, opt.adam_beta1, opt.adam_beta2);
    Rng rng = Rng::keyed(opt.seed, 0x5e9);

    SegTrainResult res;
    for (int64_t step = 1; step <= opt.steps; ++step) {
        const int64_t epoch = 1 + (step - 1) / steps_per_epoch;
        adam.set_lr(nn::lr_for_epoch(opt.base_lr, opt.lr_decay_per_epoch, opt.decay_start_epoch,
                                     epoch));

        std::vector<Image> bx;
        std::vector<Mask> bt;
        for (int64_t i = 0; i < opt.batch_size; ++i) {
            const int64_t j = rng.uniform_int(n);
            bx.push_back(inputs[static_cast<size_t>(j)]);
            bt.push_back(targets[static_cast<size_t>(j)]);
        }
        adam.zero_grad();
        Tensor pred = net.forward(images_to_chw(bx), true);
        Tensor loss = bce_loss(pred, masks_to_chw(bt));
        const double bce = loss.value();
        MASKOFF_CHECK(std::isfinite(bce), "non-finite BCE at step ", step);
        backward(loss);
        adam.step();
        res.final_bce = bce;
        res.steps = step;

        if (opt.log && opt.log_every > 0 && (step % opt.log_every == 0 || step == opt.steps)) {
            double miou = 0.0;
            {
                NoGradGuard ng;
                for (int64_t i = 0; i < n; ++i) {
                    Tensor p = net.forward(images_to_chw({inputs[static_cast<size_t>(i)]}), false);
                    miou += iou(binarize(p), targets[static_cast<size_t>(i)]);
                }
            }
            miou /= static_cast<double>(n);
            (*opt.log) << "seg step " << step << " epoch " << epoch << " lr " << adam.lr() << " bce "
                       << bce << " train_iou " << miou << "\n";
        }
    }

    {
        NoGradGuard ng;
        double miou = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            Tensor p = net.forward(images_to_chw({inputs[static_cast<size_t>(i)]}), false);
            miou += iou(binarize(p), targets[static_cast<size_t>(i)]);
        }
        res.train_iou = miou / static_cast<double>(n);
    }
    return res;
}

}  // namespace maskoff::seg
