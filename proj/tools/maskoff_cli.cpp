// maskoff: dataset synthesis, training, evaluation and single-image inference.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maskoff/backbone.hpp"
#include "maskoff/checkpoint.hpp"
#include "maskoff/config.hpp"
#include "maskoff/image.hpp"
#include "maskoff/mask_synthesis.hpp"
#include "maskoff/metrics.hpp"
#include "maskoff/segmentation.hpp"
#include "maskoff/trainer.hpp"

namespace fs = std::filesystem;
using namespace maskoff;

namespace {

// Shared --config/--seed/--deterministic plumbing: file first, then CLI
// overrides on top.
struct CommonOpts {
    std::string config_file;
    std::string seed;           // kept as text so "unset" is representable
    bool deterministic = false;
    std::vector<std::string> sets;  // raw key=value overrides

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "key = value config file");
        cmd->add_option("--seed", seed, "PRNG seed (overrides the config file)");
        cmd->add_flag("--deterministic", deterministic,
                      "single-threaded bit-reproducible mode (always on; recorded in checkpoints)");
        cmd->add_option("--set", sets, "extra key=value override (repeatable)")
            ->type_name("KEY=VALUE");
    }

    cfg::KeyValueConfig merged() const {
        cfg::KeyValueConfig kv = config_file.empty() ? cfg::KeyValueConfig()
                                                     : cfg::KeyValueConfig::from_file(config_file);
        for (const std::string& s : sets) {
            const auto eq = s.find('=');
            MASKOFF_CHECK(eq != std::string::npos, "--set expects key=value, got '", s, "'");
            kv.set(s.substr(0, eq), s.substr(eq + 1));
        }
        if (!seed.empty()) kv.set("seed", seed);
        if (deterministic) kv.set("deterministic", "true");
        return kv;
    }
};

int run_synth(const std::string& faces, const std::string& landmarks, const std::string& out,
              const std::string& templates_dir, int64_t size, uint64_t seed) {
    std::vector<synth::MaskTemplate> templates =
        templates_dir.empty() ? synth::builtin_templates() : synth::load_templates(templates_dir);
    synth::BuildOptions opt;
    opt.out_size = size;
    std::vector<synth::DatasetRecord> records = synth::build_dataset(
        faces, templates, out, seed, synth::landmark_file_provider(landmarks), opt);
    int64_t found = 0;
    for (const auto& r : records) found += r.status == "found" ? 1 : 0;
    std::cout << "wrote " << found << "/" << records.size() << " triples to " << out << "\n";
    return 0;
}

int run_make_templates(const std::string& out) {
    synth::write_templates(out, synth::builtin_templates());
    std::cout << "wrote builtin mask templates to " << out << "\n";
    return 0;
}

int run_train_seg(const std::string& manifest, const std::string& out, const CommonOpts& common) {
    cfg::KeyValueConfig kv = common.merged();
    kv.require_known({"seed", "steps", "batch_size", "base_lr", "lr_decay_per_epoch",
                      "decay_start_epoch", "adam_beta1", "adam_beta2", "steps_per_epoch",
                      "log_every", "seg_base_width", "seg_depth", "seg_input_size",
                      "deterministic"});
    seg::SegNetConfig sc;
    sc.base_width = kv.get_int("seg_base_width", sc.base_width);
    sc.depth = kv.get_int("seg_depth", sc.depth);
    sc.input_size = kv.get_int("seg_input_size", sc.input_size);
    seg::SegTrainOptions opt;
    opt.seed = kv.get_u64("seed", opt.seed);
    opt.steps = kv.get_int("steps", opt.steps);
    opt.batch_size = kv.get_int("batch_size", opt.batch_size);
    opt.base_lr = kv.get_double("base_lr", opt.base_lr);
    opt.lr_decay_per_epoch = kv.get_double("lr_decay_per_epoch", opt.lr_decay_per_epoch);
    opt.decay_start_epoch = kv.get_int("decay_start_epoch", opt.decay_start_epoch);
    opt.adam_beta1 = kv.get_double("adam_beta1", opt.adam_beta1);
    opt.adam_beta2 = kv.get_double("adam_beta2", opt.adam_beta2);
    opt.steps_per_epoch = kv.get_int("steps_per_epoch", opt.steps_per_epoch);
    opt.log_every = kv.get_int("log_every", opt.log_every);
    opt.log = &std::cout;

    seg::SegNet net(sc, Rng::keyed(opt.seed, 0x5e6).next_u64());
    seg::SegTrainResult result = seg::train_segmenter(net, manifest, opt);
    fs::create_directories(out);
    const std::string path = (fs::path(out) / "seg.ckpt").string();
    train::save_segmenter_checkpoint(path, net, result.steps);
    std::cout << "steps " << result.steps << " final_bce " << result.final_bce << " train_iou "
              << result.train_iou << "\nwrote " << path << "\n";
    return 0;
}

int run_train_inpaint(const std::string& manifest, const std::string& out,
                      const std::string& resume, const CommonOpts& common) {
    train::TrainConfig cfg = train::train_config_from(common.merged());
    train::TrainResult r = train::train_inpainter(cfg, manifest, out, resume, &std::cout);
    std::cout << "steps " << r.steps << " epochs " << r.epochs << " total " << r.final_total
              << " train_masked_l1 " << r.train_masked_l1 << " train_ssim " << r.train_ssim
              << "\nwrote " << r.final_checkpoint << "\n";
    return 0;
}

int run_eval(const std::string& manifest, const std::string& checkpoint,
             const std::string& seg_checkpoint, const std::string& mask_source,
             const std::string& report_path) {
    ckpt::Checkpoint c = ckpt::load(checkpoint);
    std::unique_ptr<gen::Generator> g = train::generator_from_checkpoint(c);
    metrics::EvalOptions opt;
    opt.mask_source = metrics::mask_source_from_string(mask_source);
    std::unique_ptr<seg::SegNet> segmenter;
    if (opt.mask_source == metrics::MaskSource::predicted) {
        MASKOFF_CHECK(!seg_checkpoint.empty(), "--mask-source predicted needs --seg-checkpoint");
        segmenter = train::segmenter_from_checkpoint(ckpt::load(seg_checkpoint));
    }
    metrics::EvalReport report = metrics::evaluate_set(manifest, *g, segmenter.get(), opt);
    std::cout << metrics::render_table(report);
    if (!report_path.empty()) {
        metrics::write_report_jsonl(report_path, report);
        std::cout << "wrote " << report_path << "\n";
    }
    return 0;
}

int run_infer(const std::string& image_path, const std::string& checkpoint,
              const std::string& seg_checkpoint, const std::string& out_path) {
    ckpt::Checkpoint c = ckpt::load(checkpoint);
    std::unique_ptr<gen::Generator> g = train::generator_from_checkpoint(c);
    std::unique_ptr<seg::SegNet> segmenter =
        train::segmenter_from_checkpoint(ckpt::load(seg_checkpoint));
    const int64_t size = g->config().input_size;
    MASKOFF_CHECK(segmenter->config().input_size == size, "segmenter expects ",
                  segmenter->config().input_size, "px inputs but the generator expects ", size);

    Image face = load_image(image_path, 3);
    face = resize_bilinear(center_crop_square(face), size, size);

    NoGradGuard no_grad;
    Tensor soft = segmenter->forward(image_to_chw(face), /*training=*/false);
    Mask mask = seg::binarize(soft, 0.5, 0);
    Tensor syn = g->inpaint(image_to_chw(to_model_range(face)), mask_to_chw(mask));
    Image out = from_model_range(chw_to_image(syn));

    save_png(out_path, out);
    const fs::path mask_path = fs::path(out_path).replace_extension("");
    const std::string mask_file = mask_path.string() + ".mask.png";
    save_mask_png(mask_file, mask);
    std::cout << "wrote " << out_path << " and " << mask_file << "\n";
    return 0;
}

int run_ablate(const std::string& preset, const std::string& manifest, const std::string& out,
               const CommonOpts& common) {
    train::TrainConfig base = train::train_config_from(common.merged());
    train::AblationReport report = train::run_ablation(preset, base, manifest, out, &std::cout);
    const std::string table = train::render_ablation(report);
    std::cout << table;
    fs::create_directories(out);
    const std::string path = (fs::path(out) / "ablation.txt").string();
    std::ofstream f(path);
    MASKOFF_CHECK(f.good(), "cannot write ", path);
    f << table;
    std::cout << "wrote " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"face-mask removal toolkit: synthesize datasets, train the segmenter and "
                 "inpainter, evaluate, and run single-image inference"};
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "build a (gt, masked, mask) dataset");
    std::string faces, landmarks, out_dir, templates_dir;
    int64_t synth_size = 256;
    uint64_t synth_seed = 0;
    synth_cmd->add_option("--faces", faces, "directory of face images")->required();
    synth_cmd->add_option("--landmarks", landmarks, "landmark JSONL file")->required();
    synth_cmd->add_option("--out", out_dir, "output dataset directory")->required();
    synth_cmd->add_option("--templates", templates_dir, "mask template directory (default: builtin)");
    synth_cmd->add_option("--size", synth_size, "output image size");
    synth_cmd->add_option("--seed", synth_seed, "template-choice seed");

    // make-templates
    auto* mt_cmd = app.add_subcommand("make-templates", "write the builtin mask templates");
    std::string mt_out;
    mt_cmd->add_option("--out", mt_out, "output directory")->required();

    // train-seg
    auto* ts_cmd = app.add_subcommand("train-seg", "train the mask segmenter");
    std::string ts_manifest, ts_out;
    CommonOpts ts_common;
    ts_cmd->add_option("--manifest", ts_manifest, "dataset manifest")->required();
    ts_cmd->add_option("--out", ts_out, "checkpoint directory")->required();
    ts_common.attach(ts_cmd);

    // train-inpaint
    auto* ti_cmd = app.add_subcommand("train-inpaint", "train the inpainting generator");
    std::string ti_manifest, ti_out, ti_resume;
    CommonOpts ti_common;
    ti_cmd->add_option("--manifest", ti_manifest, "dataset manifest")->required();
    ti_cmd->add_option("--out", ti_out, "checkpoint directory")->required();
    ti_cmd->add_option("--resume", ti_resume, "checkpoint to resume from");
    ti_common.attach(ti_cmd);

    // eval
    auto* ev_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset");
    std::string ev_manifest, ev_ckpt, ev_seg, ev_mask_source = "gt", ev_report;
    ev_cmd->add_option("--manifest", ev_manifest, "dataset manifest")->required();
    ev_cmd->add_option("--checkpoint", ev_ckpt, "inpainter checkpoint")->required();
    ev_cmd->add_option("--seg-checkpoint", ev_seg, "segmenter checkpoint");
    ev_cmd->add_option("--mask-source", ev_mask_source, "gt|predicted");
    ev_cmd->add_option("--report", ev_report, "JSONL report path");

    // infer
    auto* in_cmd = app.add_subcommand("infer", "remove the mask from one image");
    std::string in_image, in_ckpt, in_seg, in_out;
    in_cmd->add_option("--image", in_image, "input image")->required();
    in_cmd->add_option("--checkpoint", in_ckpt, "inpainter checkpoint")->required();
    in_cmd->add_option("--seg-checkpoint", in_seg, "segmenter checkpoint")->required();
    in_cmd->add_option("--out", in_out, "output PNG (a .mask.png lands next to it)")->required();

    // ablate
    auto* ab_cmd = app.add_subcommand("ablate", "train and compare two configuration arms");
    std::string ab_preset, ab_manifest, ab_out;
    CommonOpts ab_common;
    ab_cmd->add_option("--preset", ab_preset, "local_vs_full|csam|multiscale")->required();
    ab_cmd->add_option("--manifest", ab_manifest, "dataset manifest")->required();
    ab_cmd->add_option("--out", ab_out, "output directory")->required();
    ab_common.attach(ab_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // help exits 0, every usage error exits 1
    }

    try {
        if (synth_cmd->parsed())
            return run_synth(faces, landmarks, out_dir, templates_dir, synth_size, synth_seed);
        if (mt_cmd->parsed()) return run_make_templates(mt_out);
        if (ts_cmd->parsed()) return run_train_seg(ts_manifest, ts_out, ts_common);
        if (ti_cmd->parsed()) return run_train_inpaint(ti_manifest, ti_out, ti_resume, ti_common);
        if (ev_cmd->parsed()) return run_eval(ev_manifest, ev_ckpt, ev_seg, ev_mask_source, ev_report);
        if (in_cmd->parsed()) return run_infer(in_image, in_ckpt, in_seg, in_out);
        if (ab_cmd->parsed()) return run_ablate(ab_preset, ab_manifest, ab_out, ab_common);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
