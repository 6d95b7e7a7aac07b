#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "maskoff/attention.hpp"
#include "maskoff/tensor.hpp"
#include "support/testutil.hpp"

using namespace maskoff;
using namespace maskoff::attn;

namespace {

Tensor random_input(const Shape& shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor x = Tensor::zeros(shape);
    for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(lo, hi);
    return x;
}

}  // namespace

TEST_CASE("csam with beta = 0 is an exact identity") {
    for (const Shape& shape : {Shape{1, 4, 5, 5}, Shape{2, 8, 1, 1}, Shape{1, 16, 7, 3}}) {
        Rng init(11);
        nn::ParamStore ps;
        CSAMConfig cfg;
        cfg.channels = shape[1];
        cfg.beta_init = 0.0;
        CSAM block(cfg, ps, "c", init);
        const Tensor x = random_input(shape, 5 + uint64_t(shape[1]));
        NoGradGuard ng;
        const Tensor y = block.forward(x);
        REQUIRE(y.shape() == shape);
        CHECK(y.vec() == x.vec());
    }
}

TEST_CASE("csam perturbation is bounded by |beta| times the input") {
    Rng init(3);
    nn::ParamStore ps;
    CSAMConfig cfg;
    cfg.channels = 8;
    CSAM block(cfg, ps, "c", init);
    ps.at("c.beta").data()[0] = 0.5;

    const Tensor x = random_input({2, 8, 6, 6}, 17);
    NoGradGuard ng;
    const Tensor y = block.forward(x);
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double delta = std::abs(y.data()[i] - x.data()[i]);
        CHECK(delta <= 0.5 * std::abs(x.data()[i]) + 1e-12);
    }
}

TEST_CASE("csam matches a hand-computed volumetric oracle at 1x1 spatial") {
    Rng init(1);
    nn::ParamStore ps;
    CSAMConfig cfg;
    cfg.channels = 2;
    CSAM block(cfg, ps, "c", init);

    // weight w[kd][ky][kx], bias, and beta are all set by hand
    Tensor w = ps.at("c.w3d");
    for (int64_t i = 0; i < 27; ++i) w.data()[i] = 0.0;
    const double w_center = 0.3;   // kd=1, ky=1, kx=1
    const double w_below = -0.2;   // kd=2 -> looks one channel down
    const double w_above = 0.45;   // kd=0 -> looks one channel up
    w.data()[(1 * 3 + 1) * 3 + 1] = w_center;
    w.data()[(2 * 3 + 1) * 3 + 1] = w_below;
    w.data()[(0 * 3 + 1) * 3 + 1] = w_above;
    ps.at("c.b3d").data()[0] = 0.1;
    const double beta = 0.8;
    ps.at("c.beta").data()[0] = beta;

    const double f0 = 0.7, f1 = -0.4;
    Tensor x = Tensor::zeros({1, 2, 1, 1});
    x.data()[0] = f0;
    x.data()[1] = f1;

    NoGradGuard ng;
    const Tensor y = block.forward(x);
    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    const double s0 = 0.1 + w_center * f0 + w_below * f1;  // channel 0 sees channel 1 below it
    const double s1 = 0.1 + w_above * f0 + w_center * f1;  // channel 1 sees channel 0 above it
    CHECK(y.data()[0] == doctest::Approx(beta * sigmoid(s0) * f0 + f0).epsilon(1e-12));
    CHECK(y.data()[1] == doctest::Approx(beta * sigmoid(s1) * f1 + f1).epsilon(1e-12));
}

TEST_CASE("pyramid branches are C/4 wide and concatenate in fixed rate order") {
    const int64_t c = 16;
    Rng init(9);
    nn::ParamStore ps;
    DilatedPyramid pyr(c, ps, "p", init);
    for (int rate : {1, 2, 4, 8})
        CHECK(ps.at("p.branch" + std::to_string(rate) + ".w").shape() == Shape{c / 4, c, 3, 3});

    const Tensor x = random_input({1, c, 5, 5}, 23);
    NoGradGuard ng;
    const Tensor fd = pyr.forward(x);
    REQUIRE(fd.shape() == Shape{1, c, 5, 5});
    const int64_t cb = c / 4, hw = 25;
    const int rates[4] = {1, 2, 4, 8};
    for (int bi = 0; bi < 4; ++bi) {
        const Tensor single = pyr.branch(x, rates[bi]);
        REQUIRE(single.shape() == Shape{1, cb, 5, 5});
        for (int64_t i = 0; i < cb * hw; ++i)
            REQUIRE(fd.data()[bi * cb * hw + i] == single.data()[i]);
        for (int64_t i = 0; i < single.numel(); ++i) CHECK(single.data()[i] >= 0.0);  // ReLU
    }
    CHECK_THROWS_AS(pyr.branch(x, 3), Error);
}

TEST_CASE("rate-8 branch support: an impulse reaches a 17x17 neighborhood lattice") {
    const int64_t c = 4, n = 33, mid = 16;
    Rng init(2);
    nn::ParamStore ps;
    DilatedPyramid pyr(c, ps, "p", init);
    Tensor w = ps.at("p.branch8.w");  // [1, 4, 3, 3]
    for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = 1.0;

    Tensor x = Tensor::zeros({1, c, n, n});
    x.data()[mid * n + mid] = 1.0;  // impulse on channel 0 at the center

    NoGradGuard ng;
    const Tensor y = pyr.branch(x, 8);
    REQUIRE(y.shape() == Shape{1, 1, n, n});
    int64_t nonzero = 0;
    for (int64_t yy = 0; yy < n; ++yy)
        for (int64_t xx = 0; xx < n; ++xx) {
            const double v = y.data()[yy * n + xx];
            const bool lattice = (std::abs(yy - mid) == 0 || std::abs(yy - mid) == 8) &&
                                 (std::abs(xx - mid) == 0 || std::abs(xx - mid) == 8);
            if (lattice) {
                CHECK(v == 1.0);
                ++nonzero;
            } else {
                CHECK(v == 0.0);
            }
        }
    CHECK(nonzero == 9);  // corners span a 17x17 bounding box
}

TEST_CASE("mcsam with zeroed pyramid weights is an exact identity") {
    Rng init(4);
    nn::ParamStore ps;
    MCSAMConfig cfg;
    cfg.channels = 8;
    MCSAM block(cfg, ps, "m", init);
    ps.at("m.csam.beta").data()[0] = 0.9;  // attention active, but F_D will be zero
    for (int rate : {1, 2, 4, 8}) {
        Tensor w = ps.at("m.branch" + std::to_string(rate) + ".w");
        for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = 0.0;
        Tensor b = ps.at("m.branch" + std::to_string(rate) + ".b");
        for (int64_t i = 0; i < b.numel(); ++i) b.data()[i] = 0.0;
    }
    const Tensor x = random_input({2, 8, 4, 4}, 77);
    NoGradGuard ng;
    const Tensor y = block.forward(x);
    CHECK(y.vec() == x.vec());
}

TEST_CASE("mcsam preserves shape across a size grid") {
    for (int64_t c : {4, 8}) {
        for (int64_t s : {1, 4, 16}) {
            Rng init(6);
            nn::ParamStore ps;
            MCSAMConfig cfg;
            cfg.channels = c;
            MCSAM block(cfg, ps, "m", init);
            const Tensor x = random_input({1, c, s, s}, uint64_t(c * 100 + s));
            NoGradGuard ng;
            CHECK(block.forward(x).shape() == Shape{1, c, s, s});
        }
    }
    // channel counts not divisible by four are rejected up front
    Rng init(6);
    nn::ParamStore ps;
    MCSAMConfig bad;
    bad.channels = 6;
    CHECK_THROWS_AS(MCSAM(bad, ps, "m", init), Error);
}

TEST_CASE("mcsam regression vector stays frozen") {
    Rng init(20240817);
    nn::ParamStore ps;
    MCSAMConfig cfg;
    cfg.channels = 8;
    cfg.beta_init = 0.0;
    MCSAM block(cfg, ps, "blk", init);
    ps.at("blk.csam.beta").data()[0] = 0.7;

    const Tensor x = random_input({1, 8, 3, 3}, 99);
    NoGradGuard ng;
    const Tensor y = block.forward(x);

    const int64_t idx[8] = {0, 9, 17, 23, 31, 44, 58, 71};
    const double want[8] = {
        1.9690267833431865,   0.16829274257093618, 1.0682416885406063,  0.28889783793146862,
        -0.99732958208977651, 0.83259650379350925, -0.98419128099550135, 0.7216249902349523,
    };
    for (int k = 0; k < 8; ++k)
        CHECK(y.data()[idx[k]] == doctest::Approx(want[k]).epsilon(1e-12));
    double mean = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) mean += y.data()[i];
    CHECK(mean / double(y.numel()) == doctest::Approx(0.37623744789257346).epsilon(1e-12));
}

TEST_CASE("bottleneck variants expose the right parameters and act as documented") {
    Rng i1(8), i2(8), i3(8);
    nn::ParamStore p1, p2, p3;
    BottleneckBlock full(AttentionMode::mcsam, 8, p1, "b", i1);
    BottleneckBlock csam_only(AttentionMode::csam_only, 8, p2, "b", i2);
    BottleneckBlock plain(AttentionMode::none, 8, p3, "b", i3);

    CHECK(p1.has_param("b.branch1.w"));
    CHECK(p1.has_param("b.csam.w3d"));
    CHECK(p2.has_param("b.csam.w3d"));
    CHECK_FALSE(p2.has_param("b.branch1.w"));
    CHECK(p3.has_param("b.branch8.w"));
    CHECK_FALSE(p3.has_param("b.csam.w3d"));

    const Tensor x = random_input({1, 8, 5, 5}, 3);
    NoGradGuard ng;
    CHECK(full.forward(x).shape() == x.shape());
    CHECK(plain.forward(x).shape() == x.shape());
    // csam_only keeps beta at its zero init, so it starts as the identity
    CHECK(csam_only.forward(x).vec() == x.vec());

    CHECK(attention_mode_from_string("mcsam") == AttentionMode::mcsam);
    CHECK(attention_mode_from_string("csam_only") == AttentionMode::csam_only);
    CHECK(attention_mode_from_string("none") == AttentionMode::none);
    CHECK_THROWS_AS(attention_mode_from_string("cbam"), Error);
    CHECK(std::string(to_string(AttentionMode::mcsam)) == "mcsam");
}

TEST_CASE("scale_by gradients agree with finite differences") {
    Rng rng(41);
    Tensor x = testutil::away_from_kinks({2, 3}, rng);
    Tensor s = Tensor::scalar(0.37);
    s.set_requires_grad(true);
    testutil::check_grads([&] { return sum(mul(scale_by(x, s), x)); }, {x, s}, 1e-5);
}

TEST_CASE("mcsam gradients agree with finite differences") {
    Rng init(12);
    nn::ParamStore ps;
    MCSAMConfig cfg;
    cfg.channels = 4;
    MCSAM block(cfg, ps, "m", init);
    ps.at("m.csam.beta").data()[0] = 0.4;

    // positive inputs keep the branch pre-activations clear of the ReLU kink
    Tensor x = random_input({1, 4, 3, 3}, 19, 0.3, 1.0);
    x.set_requires_grad(true);

    std::vector<Tensor> wrt = {x, ps.at("m.csam.beta"), ps.at("m.csam.w3d"),
                               ps.at("m.branch2.w"), ps.at("m.branch8.b")};
    testutil::check_grads([&] { return mean(square(block.forward(x))); }, wrt, 2e-4);
}
