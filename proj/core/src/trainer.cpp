#include "maskoff/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <utility>

#include "maskoff/adversarial.hpp"
#include "maskoff/backbone.hpp"
#include "maskoff/common.hpp"
#include "maskoff/mask_synthesis.hpp"

namespace maskoff::train {

namespace fs = std::filesystem;

TrainConfig train_config_from(const cfg::KeyValueConfig& kv) {
    kv.require_known({"seed",          "batch_size",      "epochs",
                      "steps_per_epoch", "base_lr",       "lr_decay_per_epoch",
                      "decay_start_epoch", "adam_beta1",  "adam_beta2",
                      "lambda_r",      "lambda_p",        "lambda_s",
                      "lambda_adv",    "supervision",     "attention",
                      "image_size",    "gen_base_width",  "disc_base_width",
                      "feat_disc_base_width", "backbone", "feature_tap",
                      "gram_spatial_norm", "deterministic", "checkpoint_every",
                      "log_every",     "stop_check_every", "stop_masked_l1",
                      "stop_min_ssim"});
    TrainConfig c;
    c.seed = kv.get_u64("seed", c.seed);
    c.batch_size = kv.get_int("batch_size", c.batch_size);
    c.epochs = kv.get_int("epochs", c.epochs);
    c.steps_per_epoch = kv.get_int("steps_per_epoch", c.steps_per_epoch);
    c.base_lr = kv.get_double("base_lr", c.base_lr);
    c.lr_decay_per_epoch = kv.get_double("lr_decay_per_epoch", c.lr_decay_per_epoch);
    c.decay_start_epoch = kv.get_int("decay_start_epoch", c.decay_start_epoch);
    c.adam_beta1 = kv.get_double("adam_beta1", c.adam_beta1);
    c.adam_beta2 = kv.get_double("adam_beta2", c.adam_beta2);
    c.weights.lambda_r = kv.get_double("lambda_r", c.weights.lambda_r);
    c.weights.lambda_p = kv.get_double("lambda_p", c.weights.lambda_p);
    c.weights.lambda_s = kv.get_double("lambda_s", c.weights.lambda_s);
    c.weights.lambda_adv = kv.get_double("lambda_adv", c.weights.lambda_adv);
    c.supervision = loss::supervision_mode_from_string(
        kv.get_str("supervision", loss::to_string(c.supervision)));
    c.attention =
        attn::attention_mode_from_string(kv.get_str("attention", attn::to_string(c.attention)));
    c.image_size = kv.get_int("image_size", c.image_size);
    c.gen_base_width = kv.get_int("gen_base_width", c.gen_base_width);
    c.disc_base_width = kv.get_int("disc_base_width", c.disc_base_width);
    c.feat_disc_base_width = kv.get_int("feat_disc_base_width", c.feat_disc_base_width);
    c.backbone = kv.get_str("backbone", c.backbone);
    c.feature_tap = kv.get_int("feature_tap", c.feature_tap);
    c.gram_spatial_norm = kv.get_bool("gram_spatial_norm", c.gram_spatial_norm);
    c.deterministic = kv.get_bool("deterministic", c.deterministic);
    c.checkpoint_every = kv.get_int("checkpoint_every", c.checkpoint_every);
    c.log_every = kv.get_int("log_every", c.log_every);
    c.stop_check_every = kv.get_int("stop_check_every", c.stop_check_every);
    c.stop_masked_l1 = kv.get_double("stop_masked_l1", c.stop_masked_l1);
    c.stop_min_ssim = kv.get_double("stop_min_ssim", c.stop_min_ssim);
    return c;
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

cfg::KeyValueConfig to_key_values(const TrainConfig& c) {
    cfg::KeyValueConfig kv;
    kv.set("seed", std::to_string(c.seed));
    kv.set("batch_size", std::to_string(c.batch_size));
    kv.set("epochs", std::to_string(c.epochs));
    kv.set("steps_per_epoch", std::to_string(c.steps_per_epoch));
    kv.set("base_lr", fmt_double(c.base_lr));
    kv.set("lr_decay_per_epoch", fmt_double(c.lr_decay_per_epoch));
    kv.set("decay_start_epoch", std::to_string(c.decay_start_epoch));
    kv.set("adam_beta1", fmt_double(c.adam_beta1));
    kv.set("adam_beta2", fmt_double(c.adam_beta2));
    kv.set("lambda_r", fmt_double(c.weights.lambda_r));
    kv.set("lambda_p", fmt_double(c.weights.lambda_p));
    kv.set("lambda_s", fmt_double(c.weights.lambda_s));
    kv.set("lambda_adv", fmt_double(c.weights.lambda_adv));
    kv.set("supervision", loss::to_string(c.supervision));
    kv.set("attention", attn::to_string(c.attention));
    kv.set("image_size", std::to_string(c.image_size));
    kv.set("gen_base_width", std::to_string(c.gen_base_width));
    kv.set("disc_base_width", std::to_string(c.disc_base_width));
    kv.set("feat_disc_base_width", std::to_string(c.feat_disc_base_width));
    kv.set("backbone", c.backbone);
    kv.set("feature_tap", std::to_string(c.feature_tap));
    kv.set("gram_spatial_norm", c.gram_spatial_norm ? "true" : "false");
    kv.set("deterministic", c.deterministic ? "true" : "false");
    kv.set("checkpoint_every", std::to_string(c.checkpoint_every));
    kv.set("log_every", std::to_string(c.log_every));
    kv.set("stop_check_every", std::to_string(c.stop_check_every));
    kv.set("stop_masked_l1", fmt_double(c.stop_masked_l1));
    kv.set("stop_min_ssim", fmt_double(c.stop_min_ssim));
    return kv;
}

double lr_schedule(const TrainConfig& cfg, int64_t epoch) {
    return nn::lr_for_epoch(cfg.base_lr, cfg.lr_decay_per_epoch, cfg.decay_start_epoch, epoch);
}

namespace {

struct LoadedSet {
    std::vector<synth::Triple> triples;   // [0,1] images for metrics
    std::vector<Image> masked_m, gt_m;    // model-range copies for the nets
};

LoadedSet load_training_set(const std::string& manifest_path, int64_t image_size) {
    LoadedSet set;
    for (const synth::DatasetRecord& rec : synth::read_manifest(manifest_path)) {
        if (rec.status != "found") continue;
        synth::Triple t = synth::load_triple(manifest_path, rec);
        MASKOFF_CHECK(t.gt.h == image_size && t.gt.w == image_size, "training image ", rec.gt,
                      " is ", t.gt.h, "x", t.gt.w, ", config says ", image_size);
        set.masked_m.push_back(to_model_range(t.masked));
        set.gt_m.push_back(to_model_range(t.gt));
        set.triples.push_back(std::move(t));
    }
    MASKOFF_CHECK(!set.triples.empty(), "no usable triples in ", manifest_path);
    return set;
}

// All state the loop mutates, gathered so checkpoint save/load stays in sync.
struct TrainState {
    gen::Generator g;
    adv::PatchDiscriminator d_patch;
    adv::FeaturePatchDiscriminator d_feat;
    nn::Adam opt_g, opt_dp, opt_df;
    Rng data_rng;
    int64_t epoch = 0;  // last finished epoch
    int64_t step = 0;   // global step counter
};

ckpt::Checkpoint snapshot(const TrainConfig& cfg, TrainState& st) {
    ckpt::Checkpoint c;
    c.config = to_key_values(cfg).to_string();
    c.epoch = st.epoch;
    c.step = st.step;
    c.rng_state_hex = st.data_rng.state_hex();
    ckpt::pack_store(c, st.g.params());
    ckpt::pack_store(c, st.d_patch.params());
    ckpt::pack_store(c, st.d_feat.params());
    ckpt::pack_adam(c, "adam_gen.", st.g.params(), st.opt_g);
    ckpt::pack_adam(c, "adam_disc_patch.", st.d_patch.params(), st.opt_dp);
    ckpt::pack_adam(c, "adam_disc_feat.", st.d_feat.params(), st.opt_df);
    return c;
}

// The keys that shape the model, the optimizer and the data stream. Run
// control (epochs, logging cadence, stop thresholds) may differ on resume.
std::string semantic_echo(const TrainConfig& cfg) {
    cfg::KeyValueConfig all = to_key_values(cfg);
    cfg::KeyValueConfig sem;
    for (const std::string& key :
         {"seed", "batch_size", "steps_per_epoch", "base_lr", "lr_decay_per_epoch",
          "decay_start_epoch", "adam_beta1", "adam_beta2", "lambda_r", "lambda_p", "lambda_s",
          "lambda_adv", "supervision", "attention", "image_size", "gen_base_width",
          "disc_base_width", "feat_disc_base_width", "backbone", "feature_tap",
          "gram_spatial_norm"})
        sem.set(key, all.get_str(key));
    return sem.to_string();
}

void restore(const ckpt::Checkpoint& c, const TrainConfig& cfg, TrainState& st) {
    const TrainConfig stored = train_config_from(cfg::KeyValueConfig::from_string(c.config));
    MASKOFF_CHECK(semantic_echo(stored) == semantic_echo(cfg),
                  "checkpoint config does not match the requested training config; "
                  "resume with the original model/optimizer/data settings");
    st.epoch = c.epoch;
    st.step = c.step;
    st.data_rng.set_state_hex(c.rng_state_hex);
    ckpt::unpack_store(c, st.g.params());
    ckpt::unpack_store(c, st.d_patch.params());
    ckpt::unpack_store(c, st.d_feat.params());
    ckpt::unpack_adam(c, "adam_gen.", st.g.params(), st.opt_g);
    ckpt::unpack_adam(c, "adam_disc_patch.", st.d_patch.params(), st.opt_dp);
    ckpt::unpack_adam(c, "adam_disc_feat.", st.d_feat.params(), st.opt_df);
}

struct TrainSetScores {
    double masked_l1 = 0.0;
    double ssim = 0.0;
};

// Training-set quality in eval conditions (no grad, composited output).
TrainSetScores score_training_set(const gen::Generator& g, const LoadedSet& set) {
    NoGradGuard no_grad;
    TrainSetScores s;
    int64_t masked_count = 0;
    for (size_t i = 0; i < set.triples.size(); ++i) {
        const synth::Triple& t = set.triples[i];
        Tensor syn = g.inpaint(image_to_chw(set.masked_m[i]), mask_to_chw(t.mask));
        Image out = from_model_range(chw_to_image(syn));
        s.ssim += metrics::ssim(out, t.gt);
        if (t.mask.count() > 0) {
            s.masked_l1 += metrics::l1_masked(out, t.gt, t.mask);
            ++masked_count;
        }
    }
    s.ssim /= static_cast<double>(set.triples.size());
    if (masked_count > 0) s.masked_l1 /= static_cast<double>(masked_count);
    return s;
}

}  // namespace

TrainResult train_inpainter(const TrainConfig& cfg, const std::string& manifest_path,
                            const std::string& out_dir, const std::string& resume_from,
                            std::ostream* log) {
    MASKOFF_CHECK(cfg.batch_size >= 1 && cfg.epochs >= 1, "train_inpainter: bad batch/epoch count");
    LoadedSet set = load_training_set(manifest_path, cfg.image_size);
    fs::create_directories(out_dir);

    auto bb = backbone::make_backbone(cfg.backbone);
    MASKOFF_CHECK(cfg.feature_tap >= 0 && cfg.feature_tap < bb->num_taps(),
                  "feature_tap ", cfg.feature_tap, " out of range for backbone with ",
                  bb->num_taps(), " taps");

    // Probe the tap width so the feature critic can be sized.
    int64_t tap_channels = 0;
    {
        NoGradGuard no_grad;
        Tensor probe = image_to_chw(set.masked_m[0]);
        tap_channels = bb->extract(probe)[static_cast<size_t>(cfg.feature_tap)].dim(1);
    }

    gen::GeneratorConfig gc{cfg.gen_base_width, cfg.image_size, 3, cfg.attention};
    adv::PatchDiscConfig pc{cfg.disc_base_width, 3};
    adv::FeatureDiscConfig fc{tap_channels, cfg.feat_disc_base_width};
    TrainState st{
        gen::Generator(gc, Rng::keyed(cfg.seed, 0x9e0).next_u64()),
        adv::PatchDiscriminator(pc, Rng::keyed(cfg.seed, 0xd15c).next_u64()),
        adv::FeaturePatchDiscriminator(fc, Rng::keyed(cfg.seed, 0xfea7).next_u64()),
        nn::Adam({}, cfg.base_lr, cfg.adam_beta1, cfg.adam_beta2),
        nn::Adam({}, cfg.base_lr, cfg.adam_beta1, cfg.adam_beta2),
        nn::Adam({}, cfg.base_lr, cfg.adam_beta1, cfg.adam_beta2),
        Rng::keyed(cfg.seed, 0xba7c4),
    };
    st.opt_g = nn::Adam(st.g.params().tensors(), cfg.base_lr, cfg.adam_beta1, cfg.adam_beta2);
    st.opt_dp =
        nn::Adam(st.d_patch.params().tensors(), cfg.base_lr, cfg.adam_beta1, cfg.adam_beta2);
    st.opt_df =
        nn::Adam(st.d_feat.params().tensors(), cfg.base_lr, cfg.adam_beta1, cfg.adam_beta2);

    if (!resume_from.empty()) restore(ckpt::load(resume_from), cfg, st);

    const int64_t n = static_cast<int64_t>(set.triples.size());
    const int64_t steps_per_epoch =
        cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : (n + cfg.batch_size - 1) / cfg.batch_size;

    TrainResult result;
    std::string last_ckpt;
    auto write_ckpt = [&](const std::string& name) {
        const std::string path = (fs::path(out_dir) / name).string();
        ckpt::Checkpoint c = snapshot(cfg, st);
        ckpt::save(path, c);
        last_ckpt = path;
        return path;
    };

    double last_total = 0.0;
    bool stop = false;
    for (int64_t epoch = st.epoch + 1; epoch <= cfg.epochs && !stop; ++epoch) {
        const double lr = lr_schedule(cfg, epoch);
        st.opt_g.set_lr(lr);
        st.opt_dp.set_lr(lr);
        st.opt_df.set_lr(lr);
        for (int64_t s = 0; s < steps_per_epoch && !stop; ++s) {
            // Seeded with-replacement batch; the RNG state rides in checkpoints
            // so resumed runs consume the identical index stream.
            std::vector<Image> masked_b, gt_b;
            std::vector<Mask> mask_b;
            for (int64_t k = 0; k < cfg.batch_size; ++k) {
                const auto idx = static_cast<size_t>(
                    st.data_rng.uniform_int(static_cast<uint64_t>(n)));
                masked_b.push_back(set.masked_m[idx]);
                gt_b.push_back(set.gt_m[idx]);
                mask_b.push_back(set.triples[idx].mask);
            }
            Tensor inp = images_to_chw(masked_b);
            Tensor gt = images_to_chw(gt_b);
            Tensor mask = masks_to_chw(mask_b);

            // --- generator update ---------------------------------------------
            st.opt_g.zero_grad();
            st.opt_dp.zero_grad();  // the generator pass also reaches critic weights
            st.opt_df.zero_grad();
            Tensor raw = st.g.forward(inp, mask);
            Tensor target = loss::supervision_target(cfg.supervision, inp, mask, raw);
            Tensor l_r = loss::reconstruction_loss(target, gt);
            std::vector<Tensor> taps_syn = bb->extract(target);
            std::vector<Tensor> taps_gt = bb->extract(gt);
            Tensor l_p = loss::perceptual_loss(taps_syn, taps_gt);
            Tensor l_s = loss::style_loss(taps_syn, taps_gt, cfg.gram_spatial_norm);
            adv::AdvLosses patch =
                adv::ralsgan_losses(st.d_patch.forward(gt), st.d_patch.forward(target));
            const auto tap = static_cast<size_t>(cfg.feature_tap);
            adv::AdvLosses feat =
                adv::ralsgan_losses(st.d_feat.forward(taps_gt[tap]), st.d_feat.forward(taps_syn[tap]));
            Tensor l_adv = mul_scalar(add(patch.gen, feat.gen), 0.5);
            Tensor total;
            try {
                total = loss::total_loss(cfg.weights, l_r, l_p, l_s, l_adv);
            } catch (const Error& e) {
                fail(e.what(), " at step ", st.step + 1,
                     last_ckpt.empty() ? "; no checkpoint written yet"
                                       : "; last good checkpoint: " + last_ckpt);
            }
            backward(total);
            st.opt_g.step();
            last_total = total.value();

            // --- discriminator updates (fresh graphs, generator detached) ------
            Tensor fake = target.detach();
            st.opt_dp.zero_grad();
            Tensor l_dp =
                adv::ralsgan_losses(st.d_patch.forward(gt), st.d_patch.forward(fake)).disc;
            backward(l_dp);
            st.opt_dp.step();

            st.opt_df.zero_grad();
            Tensor l_df = adv::ralsgan_losses(st.d_feat.forward(taps_gt[tap]),
                                              st.d_feat.forward(taps_syn[tap].detach()))
                              .disc;
            backward(l_df);
            st.opt_df.step();

            ++st.step;
            if (log && cfg.log_every > 0 && st.step % cfg.log_every == 0) {
                (*log) << "step " << st.step << " epoch " << epoch << " lr " << lr << " l_r "
                       << l_r.value() << " l_p " << l_p.value() << " l_s " << l_s.value()
                       << " l_adv " << l_adv.value() << " l_dp " << l_dp.value() << " l_df "
                       << l_df.value() << " total " << last_total << "\n";
            }
            if (cfg.stop_check_every > 0 && st.step % cfg.stop_check_every == 0) {
                TrainSetScores sc = score_training_set(st.g, set);
                result.train_masked_l1 = sc.masked_l1;
                result.train_ssim = sc.ssim;
                if (log)
                    (*log) << "check step " << st.step << " masked_l1 " << sc.masked_l1 << " ssim "
                           << sc.ssim << "\n";
                if (sc.masked_l1 < cfg.stop_masked_l1 && sc.ssim > cfg.stop_min_ssim) {
                    result.early_stopped = true;
                    stop = true;
                }
            }
        }
        st.epoch = epoch;
        if (!stop && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04lld.ckpt", static_cast<long long>(epoch));
            write_ckpt(name);
        }
    }

    result.final_checkpoint = write_ckpt("final.ckpt");
    result.steps = st.step;
    result.epochs = st.epoch;
    result.final_total = last_total;
    if (cfg.stop_check_every <= 0) {
        TrainSetScores sc = score_training_set(st.g, set);
        result.train_masked_l1 = sc.masked_l1;
        result.train_ssim = sc.ssim;
    }
    return result;
}

TrainConfig train_config_from_checkpoint(const ckpt::Checkpoint& c) {
    return train_config_from(cfg::KeyValueConfig::from_string(c.config));
}

std::unique_ptr<gen::Generator> generator_from_checkpoint(const ckpt::Checkpoint& c) {
    const TrainConfig tc = train_config_from_checkpoint(c);
    gen::GeneratorConfig gc{tc.gen_base_width, tc.image_size, 3, tc.attention};
    auto g = std::make_unique<gen::Generator>(gc, Rng::keyed(tc.seed, 0x9e0).next_u64());
    ckpt::unpack_store(c, g->params());
    return g;
}

void save_segmenter_checkpoint(const std::string& path, seg::SegNet& net, int64_t steps) {
    ckpt::Checkpoint c;
    cfg::KeyValueConfig kv;
    kv.set("model", "segmenter");
    kv.set("seg_base_width", std::to_string(net.config().base_width));
    kv.set("seg_depth", std::to_string(net.config().depth));
    kv.set("seg_input_size", std::to_string(net.config().input_size));
    c.config = kv.to_string();
    c.step = steps;
    ckpt::pack_store(c, net.params());
    ckpt::save(path, c);
}

std::unique_ptr<seg::SegNet> segmenter_from_checkpoint(const ckpt::Checkpoint& c) {
    cfg::KeyValueConfig kv = cfg::KeyValueConfig::from_string(c.config);
    MASKOFF_CHECK(kv.get_str("model", "") == "segmenter",
                  "checkpoint does not hold a segmenter (model = '", kv.get_str("model", ""),
                  "')");
    seg::SegNetConfig sc;
    sc.base_width = kv.get_int("seg_base_width");
    sc.depth = kv.get_int("seg_depth");
    sc.input_size = kv.get_int("seg_input_size");
    auto net = std::make_unique<seg::SegNet>(sc, 0);
    ckpt::unpack_store(c, net->params());
    return net;
}

namespace {

const char* kRefMultiscale[] = {
    "reference (published, 256x256 full-scale training):",
    "  full bottleneck     SSIM 0.9511  PSNR 30.3885  l1 0.0076",
    "  plain attention     SSIM 0.9454  PSNR 29.6126  l1 0.0084",
};
const char* kRefLocal[] = {
    "reference (published, 256x256 full-scale training):",
    "  local supervision   SSIM 0.9511  PSNR 30.3885  l1 0.0076",
    "  full supervision    SSIM 0.9441  PSNR 29.6932  l1 0.0088",
};
const char* kRefCsam[] = {
    "reference (published, 256x256 full-scale training):",
    "  with attention      SSIM 0.9511  PSNR 30.3885  l1 0.0076",
    "  without attention   SSIM 0.9495  PSNR 30.1338  l1 0.0077",
};

}  // namespace

AblationReport run_ablation(const std::string& preset, const TrainConfig& base,
                            const std::string& manifest_path, const std::string& out_dir,
                            std::ostream* log) {
    AblationReport report;
    report.preset = preset;
    TrainConfig a = base, b = base;
    if (preset == "local_vs_full") {
        a.supervision = loss::SupervisionMode::local;
        b.supervision = loss::SupervisionMode::full;
        report.a.name = "local";
        report.b.name = "full";
        report.reference_footer.assign(std::begin(kRefLocal), std::end(kRefLocal));
    } else if (preset == "csam") {
        a.attention = attn::AttentionMode::mcsam;
        b.attention = attn::AttentionMode::none;
        report.a.name = "with_attention";
        report.b.name = "without_attention";
        report.reference_footer.assign(std::begin(kRefCsam), std::end(kRefCsam));
    } else if (preset == "multiscale") {
        a.attention = attn::AttentionMode::mcsam;
        b.attention = attn::AttentionMode::csam_only;
        report.a.name = "multi_scale";
        report.b.name = "single_scale";
        report.reference_footer.assign(std::begin(kRefMultiscale), std::end(kRefMultiscale));
    } else {
        fail("unknown ablation preset '", preset, "' (expected local_vs_full|csam|multiscale)");
    }
    report.a.cfg = a;
    report.b.cfg = b;

    for (AblationArm* arm : {&report.a, &report.b}) {
        const std::string arm_dir = (fs::path(out_dir) / arm->name).string();
        if (log) (*log) << "ablation arm " << arm->name << "\n";
        TrainResult r = train_inpainter(arm->cfg, manifest_path, arm_dir, "", log);
        ckpt::Checkpoint c = ckpt::load(r.final_checkpoint);
        std::unique_ptr<gen::Generator> g = generator_from_checkpoint(c);
        arm->eval = metrics::evaluate_set(manifest_path, *g, nullptr, {});
    }
    return report;
}

std::string render_ablation(const AblationReport& report) {
    std::ostringstream os;
    os << "ablation: " << report.preset << "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-20s %10s %12s %10s %12s\n", "arm", "SSIM(+)", "PSNR(+)",
                  "l1(-)", "masked_l1(-)");
    os << line;
    for (const AblationArm* arm : {&report.a, &report.b}) {
        std::snprintf(line, sizeof(line), "%-20s %10.4f %12.4f %10.4f %12.4f\n",
                      arm->name.c_str(), arm->eval.mean_ssim, arm->eval.mean_psnr,
                      arm->eval.mean_l1, arm->eval.mean_l1_masked);
        os << line;
    }
    for (const std::string& lineref : report.reference_footer) os << lineref << "\n";
    return os.str();
}

}  // namespace maskoff::train
