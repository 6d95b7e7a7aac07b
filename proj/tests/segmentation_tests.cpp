#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "maskoff/image.hpp"
#include "maskoff/segmentation.hpp"
#include "maskoff/tensor.hpp"
#include "support/fixtures.hpp"
#include "support/testutil.hpp"

using namespace maskoff;
using namespace maskoff::seg;

TEST_CASE("bce: uniform 0.5 prediction costs ln 2") {
    const Tensor pred = Tensor::full({2, 1, 4, 4}, 0.5);
    Tensor target = Tensor::zeros({2, 1, 4, 4});
    for (int64_t i = 0; i < target.numel(); ++i) target.data()[i] = (i % 2) ? 1.0 : 0.0;
    CHECK(bce_loss(pred, target).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bce: perfect hard predictions cost at most the clamp floor") {
    Tensor pred = Tensor::zeros({1, 1, 3, 3});
    Tensor target = Tensor::zeros({1, 1, 3, 3});
    for (int64_t i = 0; i < 9; ++i) {
        const double v = (i % 3 == 0) ? 1.0 : 0.0;
        pred.data()[i] = v;
        target.data()[i] = v;
    }
    // clamped at 1e-7: -ln(1 - 1e-7) ~ 1e-7
    CHECK(bce_loss(pred, target).value() <= 2e-7);
    CHECK(bce_loss(pred, target).value() >= 0.0);
}

TEST_CASE("bce matches an elementwise loop oracle on random tensors") {
    Rng rng(88);
    Tensor pred = Tensor::zeros({2, 1, 8, 8});
    Tensor target = Tensor::zeros({2, 1, 8, 8});
    for (int64_t i = 0; i < pred.numel(); ++i) {
        pred.data()[i] = rng.uniform(0.001, 0.999);
        target.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    double acc = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const double p = std::min(std::max(pred.data()[i], 1e-7), 1.0 - 1e-7);
        const double t = target.data()[i];
        acc += -(t * std::log(p) + (1.0 - t) * std::log1p(-p));
    }
    acc /= double(pred.numel());
    CHECK(bce_loss(pred, target).value() == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("bce gradient agrees with finite differences") {
    Rng rng(31);
    Tensor pred = Tensor::zeros({1, 1, 4, 4}, true);
    Tensor target = Tensor::zeros({1, 1, 4, 4});
    for (int64_t i = 0; i < 16; ++i) {
        pred.data()[i] = rng.uniform(0.1, 0.9);  // away from the clamp
        target.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    testutil::check_grads([&] { return bce_loss(pred, target); }, {pred}, 1e-4);
}

TEST_CASE("segnet: output shape, range, and determinism") {
    SegNetConfig cfg;
    cfg.base_width = 4;
    cfg.depth = 4;
    cfg.input_size = 32;
    SegNet net(cfg, 7);

    Rng rng(5);
    Tensor img = Tensor::zeros({2, 3, 32, 32});
    for (int64_t i = 0; i < img.numel(); ++i) img.data()[i] = rng.uniform();

    NoGradGuard ng;
    const Tensor out = net.forward(img, false);
    REQUIRE(out.shape() == Shape{2, 1, 32, 32});
    for (int64_t i = 0; i < out.numel(); ++i) {
        CHECK(out.data()[i] > 0.0);
        CHECK(out.data()[i] < 1.0);
    }

    const Tensor again = net.forward(img, false);
    CHECK(out.vec() == again.vec());

    SegNet twin(cfg, 7);
    const Tensor twin_out = twin.forward(img, false);
    CHECK(out.vec() == twin_out.vec());

    SegNet other(cfg, 8);
    const Tensor other_out = other.forward(img, false);
    double diff = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) diff += std::abs(out.data()[i] - other_out.data()[i]);
    CHECK(diff > 0.0);
}

TEST_CASE("segnet handles several input sizes with matching output shapes") {
    for (int64_t size : {16, 32, 64}) {
        SegNetConfig cfg;
        cfg.base_width = 4;
        cfg.depth = size >= 32 ? 4 : 3;
        cfg.input_size = size;
        SegNet net(cfg, 3);
        NoGradGuard ng;
        const Tensor out = net.forward(Tensor::full({1, 3, size, size}, 0.25), false);
        CHECK(out.shape() == Shape{1, 1, size, size});
    }
}

TEST_CASE("binarize applies the >= 0.5 convention, including exact ties") {
    Tensor pred = Tensor::zeros({2, 1, 2, 2});
    // sample 0: {0.2, 0.5, 0.7, 0.49999}; sample 1: all high
    pred.data()[0] = 0.2;
    pred.data()[1] = 0.5;
    pred.data()[2] = 0.7;
    pred.data()[3] = 0.49999;
    for (int64_t i = 4; i < 8; ++i) pred.data()[i] = 0.9;

    const Mask m0 = binarize(pred);
    CHECK(m0.at(0, 0) == 0);
    CHECK(m0.at(0, 1) == 1);  // exact threshold is masked
    CHECK(m0.at(1, 0) == 1);
    CHECK(m0.at(1, 1) == 0);
    CHECK(binarize(pred, 0.5, 1).count() == 4);
    CHECK(binarize(pred, 0.95, 1).count() == 0);
}

TEST_CASE("iou: identical, disjoint, partial, symmetric, and empty-empty cases") {
    Mask a(10, 20), b(10, 20);
    CHECK(iou(a, b) == 1.0);  // both empty

    for (int64_t x = 0; x < 10; ++x) a.at(0, x) = 1;
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, b) == 0.0);

    // a: cols 0..9 of row 0; b: cols 5..19 of row 0 -> inter 5, union 20
    for (int64_t x = 5; x < 20; ++x) b.at(0, x) = 1;
    CHECK(iou(a, b) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(iou(b, a) == iou(a, b));

    // the strip case: 50 overlapping of 150 total
    Mask c(16, 16), d(16, 16);
    for (int64_t i = 0; i < 100; ++i) c.data[size_t(i)] = 1;
    for (int64_t i = 50; i < 150; ++i) d.data[size_t(i)] = 1;
    CHECK(iou(c, d) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("iou rejects mismatched shapes") {
    CHECK_THROWS_AS(iou(Mask(4, 4), Mask(4, 5)), Error);
}

TEST_CASE("train_segmenter: zero steps leaves parameters untouched") {
    const std::string root = fixtures::temp_dir("seg_zero");
    const std::string manifest = fixtures::build_desk_dataset(root, 4, 32, 10);

    SegNetConfig cfg;
    cfg.base_width = 4;
    cfg.depth = 3;
    cfg.input_size = 32;
    SegNet net(cfg, 1);
    std::vector<std::vector<double>> before;
    for (const auto& [name, tensor] : net.params().params()) before.push_back(tensor.vec());

    SegTrainOptions opt;
    opt.steps = 0;
    const SegTrainResult res = train_segmenter(net, manifest, opt);
    CHECK(res.steps == 0);
    const auto& entries = net.params().params();
    for (size_t i = 0; i < entries.size(); ++i) CHECK(entries[i].second.vec() == before[i]);
}

TEST_CASE("train_segmenter: a short run reduces the loss and is seed-reproducible") {
    const std::string root = fixtures::temp_dir("seg_short");
    const std::string manifest = fixtures::build_desk_dataset(root, 4, 32, 11);

    SegNetConfig cfg;
    cfg.base_width = 4;
    cfg.depth = 3;
    cfg.input_size = 32;

    auto run = [&](uint64_t seed) {
        SegNet net(cfg, seed);
        SegTrainOptions opt;
        opt.seed = seed;
        opt.steps = 40;
        opt.batch_size = 4;
        opt.base_lr = 2e-3;
        return train_segmenter(net, manifest, opt);
    };

    const SegTrainResult r1 = run(3);
    const SegTrainResult r2 = run(3);
    CHECK(r1.steps == 40);
    CHECK(r1.final_bce == r2.final_bce);
    CHECK(r1.train_iou == r2.train_iou);

    // compare against the untrained loss on the same data
    SegNet fresh(cfg, 3);
    SegTrainOptions probe;
    probe.seed = 3;
    probe.steps = 0;
    train_segmenter(fresh, manifest, probe);  // no-op, just validates the manifest
    CHECK(r1.final_bce < std::log(2.0));      // better than an uninformed 0.5 guess
    CHECK(r1.train_iou >= 0.0);
}
