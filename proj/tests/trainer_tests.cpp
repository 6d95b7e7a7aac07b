// Tests for the training loop plumbing: the learning-rate schedule, the
// TrainConfig <-> key/value round trip, deterministic resume (split run ==
// uninterrupted run, byte for byte), early stopping, and the checkpoint
// bridges that rebuild generators and segmenters from saved state.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "maskoff/checkpoint.hpp"
#include "maskoff/common.hpp"
#include "maskoff/config.hpp"
#include "maskoff/generator.hpp"
#include "maskoff/image.hpp"
#include "maskoff/segmentation.hpp"
#include "maskoff/trainer.hpp"

#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using doctest::Contains;
using namespace maskoff;
using train::TrainConfig;

namespace {

// One tiny dataset shared by every training case in this binary.
const std::string& tiny_manifest() {
    static const std::string path =
        fixtures::build_desk_dataset(fixtures::temp_dir("trainer_data"), 4, 32, 2026);
    return path;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.seed = 77;
    cfg.batch_size = 2;
    cfg.epochs = 1;
    cfg.steps_per_epoch = 2;
    cfg.image_size = 32;
    cfg.gen_base_width = 4;
    cfg.disc_base_width = 4;
    cfg.feat_disc_base_width = 4;
    cfg.backbone = "surrogate:7";
    cfg.log_every = 0;
    return cfg;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("learning rate holds flat through the decay start, then ramps down") {
    const TrainConfig cfg;  // base 2e-4, decay 2e-6 per epoch from epoch 20
    CHECK(train::lr_schedule(cfg, 1) == 2e-4);
    CHECK(train::lr_schedule(cfg, 19) == 2e-4);
    CHECK(train::lr_schedule(cfg, 20) == 2e-4);
    CHECK(train::lr_schedule(cfg, 21) == doctest::Approx(1.98e-4).epsilon(1e-12));
    CHECK(train::lr_schedule(cfg, 30) == doctest::Approx(1.8e-4).epsilon(1e-12));
    CHECK(train::lr_schedule(cfg, 30) == 1.8e-4);  // exactly representable

    double prev = train::lr_schedule(cfg, 1);
    for (int64_t epoch = 2; epoch <= 200; ++epoch) {
        const double lr = train::lr_schedule(cfg, epoch);
        CHECK(lr <= prev);
        CHECK(lr >= 0.0);
        prev = lr;
    }
    CHECK(train::lr_schedule(cfg, 121) == 0.0);  // 2e-4 / 2e-6 = 100 epochs of decay
    CHECK(train::lr_schedule(cfg, 5000) == 0.0);
    CHECK_THROWS_AS((void)train::lr_schedule(cfg, 0), Error);
}

TEST_CASE("train config survives the key/value round trip") {
    TrainConfig cfg = tiny_config();
    cfg.supervision = loss::SupervisionMode::full;
    cfg.attention = attn::AttentionMode::csam_only;
    cfg.weights.lambda_s = 125.0;
    cfg.gram_spatial_norm = false;
    cfg.stop_check_every = 25;
    cfg.stop_masked_l1 = 0.05;
    cfg.stop_min_ssim = 0.85;

    const cfg::KeyValueConfig kv = train::to_key_values(cfg);
    const TrainConfig back = train::train_config_from(kv);
    CHECK(train::to_key_values(back).to_string() == kv.to_string());
    CHECK(back.seed == cfg.seed);
    CHECK(back.weights.lambda_s == 125.0);
    CHECK(back.supervision == loss::SupervisionMode::full);
    CHECK(back.attention == attn::AttentionMode::csam_only);
    CHECK(back.gram_spatial_norm == false);
    CHECK(back.backbone == "surrogate:7");
}

TEST_CASE("partial config files fall back to defaults, typos are rejected") {
    const TrainConfig got = train::train_config_from(
        cfg::KeyValueConfig::from_string("seed = 9\nimage_size = 128\n"));
    const TrainConfig dflt;
    CHECK(got.seed == 9);
    CHECK(got.image_size == 128);
    CHECK(got.batch_size == dflt.batch_size);
    CHECK(got.base_lr == dflt.base_lr);
    CHECK(got.weights.lambda_s == dflt.weights.lambda_s);
    CHECK(got.attention == dflt.attention);

    CHECK_THROWS_WITH_AS(
        (void)train::train_config_from(cfg::KeyValueConfig::from_string("imge_size = 64\n")),
        Contains("imge_size"), Error);
    CHECK_THROWS_AS(
        (void)train::train_config_from(cfg::KeyValueConfig::from_string("attention = fancy\n")),
        Error);
}

TEST_CASE("a short run writes checkpoints and a loadable generator") {
    const fs::path out = fixtures::temp_dir("trainer_smoke");
    std::ostringstream log;
    TrainConfig cfg = tiny_config();
    cfg.log_every = 1;
    const train::TrainResult r = train_inpainter(cfg, tiny_manifest(), out.string(), "", &log);

    CHECK(r.steps == 2);
    CHECK(r.epochs == 1);
    CHECK(r.early_stopped == false);
    CHECK(fs::exists(out / "epoch_0001.ckpt"));
    CHECK(fs::exists(out / "final.ckpt"));
    CHECK(r.final_checkpoint == (out / "final.ckpt").string());
    // Stop checks were disabled, so the final training-set scores are filled in.
    CHECK(r.train_ssim >= -1.0);
    CHECK(r.train_masked_l1 >= 0.0);
    CHECK(log.str().find("step 1") != std::string::npos);
    CHECK(log.str().find("total") != std::string::npos);

    const ckpt::Checkpoint c = ckpt::load(r.final_checkpoint);
    CHECK(c.epoch == 1);
    CHECK(c.step == 2);
    const TrainConfig stored = train::train_config_from_checkpoint(c);
    CHECK(stored.seed == cfg.seed);
    CHECK(stored.image_size == 32);

    const auto g = train::generator_from_checkpoint(c);
    NoGradGuard no_grad;
    Rng rng(5);
    Tensor masked = Tensor::zeros({1, 3, 32, 32});
    for (double& v : masked.vec()) v = rng.uniform(-1.0, 1.0);
    Tensor mask = Tensor::zeros({1, 1, 32, 32});
    for (double& v : mask.vec()) v = rng.uniform(0.0, 1.0) < 0.3 ? 1.0 : 0.0;
    const Tensor y = g->inpaint(masked, mask);
    CHECK(y.shape() == std::vector<int64_t>{1, 3, 32, 32});
    fs::remove_all(out);
}

TEST_CASE("resuming a split run reproduces the uninterrupted run byte for byte") {
    TrainConfig two_epochs = tiny_config();
    two_epochs.epochs = 2;

    const fs::path dir_a = fixtures::temp_dir("trainer_straight");
    const train::TrainResult ra = train_inpainter(two_epochs, tiny_manifest(), dir_a.string());
    CHECK(ra.steps == 4);

    // Same settings, but stop after epoch 1 and then resume to epoch 2.
    TrainConfig one_epoch = two_epochs;
    one_epoch.epochs = 1;
    const fs::path dir_b1 = fixtures::temp_dir("trainer_split1");
    const train::TrainResult rb1 = train_inpainter(one_epoch, tiny_manifest(), dir_b1.string());
    CHECK(rb1.steps == 2);

    const fs::path dir_b2 = fixtures::temp_dir("trainer_split2");
    const train::TrainResult rb2 =
        train_inpainter(two_epochs, tiny_manifest(), dir_b2.string(), rb1.final_checkpoint);
    CHECK(rb2.steps == 4);
    CHECK(rb2.epochs == 2);

    CHECK(read_bytes(rb2.final_checkpoint) == read_bytes(ra.final_checkpoint));
    CHECK(read_bytes((dir_b2 / "epoch_0002.ckpt").string()) ==
          read_bytes((dir_a / "epoch_0002.ckpt").string()));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b1);
    fs::remove_all(dir_b2);
}

TEST_CASE("resume refuses a checkpoint whose semantic settings differ") {
    TrainConfig cfg = tiny_config();
    const fs::path dir = fixtures::temp_dir("trainer_mismatch");
    const train::TrainResult r = train_inpainter(cfg, tiny_manifest(), dir.string());

    TrainConfig other = cfg;
    other.seed = 78;
    CHECK_THROWS_WITH_AS((void)train_inpainter(other, tiny_manifest(),
                                               (dir / "resume").string(), r.final_checkpoint),
                         Contains("does not match"), Error);

    // Run control may change freely: more epochs, different logging cadence.
    TrainConfig extended = cfg;
    extended.epochs = 2;
    extended.log_every = 1;
    CHECK_NOTHROW((void)train_inpainter(extended, tiny_manifest(), (dir / "more").string(),
                                        r.final_checkpoint));
    fs::remove_all(dir);
}

TEST_CASE("early stop triggers as soon as the thresholds are met") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 3;
    cfg.stop_check_every = 1;
    cfg.stop_masked_l1 = 10.0;  // trivially satisfied
    cfg.stop_min_ssim = -1.0;
    const fs::path dir = fixtures::temp_dir("trainer_stop");
    std::ostringstream log;
    const train::TrainResult r = train_inpainter(cfg, tiny_manifest(), dir.string(), "", &log);

    CHECK(r.early_stopped == true);
    CHECK(r.steps == 1);
    CHECK(r.train_masked_l1 >= 0.0);
    CHECK(r.train_ssim > -1.0);
    CHECK(log.str().find("check step 1") != std::string::npos);
    CHECK(fs::exists(dir / "final.ckpt"));
    fs::remove_all(dir);
}

TEST_CASE("generators with every attention mode round-trip through checkpoints") {
    for (const attn::AttentionMode mode :
         {attn::AttentionMode::mcsam, attn::AttentionMode::csam_only, attn::AttentionMode::none}) {
        CAPTURE(attn::to_string(mode));
        TrainConfig cfg = tiny_config();
        cfg.steps_per_epoch = 1;
        cfg.attention = mode;
        const fs::path dir = fixtures::temp_dir(std::string("trainer_attn_") + attn::to_string(mode));
        const train::TrainResult r = train_inpainter(cfg, tiny_manifest(), dir.string());
        const auto g = train::generator_from_checkpoint(ckpt::load(r.final_checkpoint));
        CHECK(g->config().attention == mode);

        NoGradGuard no_grad;
        Tensor masked = Tensor::zeros({1, 3, 32, 32});
        Tensor mask = Tensor::zeros({1, 1, 32, 32});
        Rng rng(11);
        for (double& v : masked.vec()) v = rng.uniform(-1.0, 1.0);
        for (double& v : mask.vec()) v = rng.uniform(0.0, 1.0) < 0.5 ? 1.0 : 0.0;
        const Tensor y = g->inpaint(masked, mask);
        CHECK(y.shape() == std::vector<int64_t>{1, 3, 32, 32});
        fs::remove_all(dir);
    }
}

TEST_CASE("segmenter checkpoints restore an identical network") {
    seg::SegNetConfig sc;
    sc.base_width = 4;
    sc.depth = 3;
    sc.input_size = 32;
    seg::SegNet net(sc, 404);

    const fs::path dir = fixtures::temp_dir("trainer_seg");
    const std::string path = (dir / "seg.ckpt").string();
    train::save_segmenter_checkpoint(path, net, 123);

    const ckpt::Checkpoint c = ckpt::load(path);
    CHECK(c.step == 123);
    const auto restored = train::segmenter_from_checkpoint(c);
    CHECK(restored->config().base_width == 4);
    CHECK(restored->config().depth == 3);
    CHECK(restored->config().input_size == 32);

    Image img(32, 32, 3);
    Rng rng(6);
    for (double& v : img.data) v = rng.uniform(0.0, 1.0);
    NoGradGuard no_grad;
    const Tensor x = image_to_chw(img);
    const Tensor a = net.forward(x, /*training=*/false);
    const Tensor b = restored->forward(x, /*training=*/false);
    CHECK(a.vec() == b.vec());
    fs::remove_all(dir);
}

TEST_CASE("checkpoint bridges reject the wrong model kind") {
    TrainConfig cfg = tiny_config();
    cfg.steps_per_epoch = 1;
    const fs::path dir = fixtures::temp_dir("trainer_kind");
    const train::TrainResult r = train_inpainter(cfg, tiny_manifest(), dir.string());
    const ckpt::Checkpoint gen_ckpt = ckpt::load(r.final_checkpoint);
    CHECK_THROWS_WITH_AS((void)train::segmenter_from_checkpoint(gen_ckpt),
                         Contains("segmenter"), Error);

    seg::SegNetConfig sc;
    sc.base_width = 4;
    sc.depth = 3;
    sc.input_size = 32;
    seg::SegNet net(sc, 404);
    const std::string seg_path = (dir / "seg.ckpt").string();
    train::save_segmenter_checkpoint(seg_path, net, 1);
    CHECK_THROWS_AS((void)train::generator_from_checkpoint(ckpt::load(seg_path)), Error);
    fs::remove_all(dir);
}
