// End-to-end tests for the `maskoff` command line tool, run as a subprocess:
// argument validation and exit codes, and the full pipeline — template export,
// dataset synthesis, segmenter and inpainter training, evaluation, and
// single-image inference — at a miniature scale.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "maskoff/image.hpp"

#include "support/fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;  // stdout and stderr combined
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(MASKOFF_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    char buf[4096];
    size_t n = 0;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Pipeline artifacts shared by the cases below, produced lazily through the
// CLI itself so every stage is exercised exactly once.
struct Artifacts {
    fs::path root = fixtures::temp_dir("cli_pipeline");
    fs::path faces_dir = root / "faces";
    std::string landmarks;
    fs::path data_dir = root / "data";
    fs::path manifest = data_dir / "manifest.jsonl";
    fs::path seg_ckpt = root / "seg" / "seg.ckpt";
    fs::path gen_ckpt = root / "gen" / "final.ckpt";

    static Artifacts& get() {
        static Artifacts a;
        return a;
    }

    const fs::path& synth() {
        if (landmarks.empty()) {
            landmarks = fixtures::write_face_corpus(faces_dir.string(), 4, 32, 911);
            const RunResult r = run_cli("synth --faces " + faces_dir.string() + " --landmarks " +
                                        landmarks + " --out " + data_dir.string() +
                                        " --size 32 --seed 5");
            REQUIRE(r.code == 0);
            REQUIRE(r.out.find("wrote 4/4 triples") != std::string::npos);
        }
        return manifest;
    }

    const fs::path& train_seg() {
        if (!fs::exists(seg_ckpt)) {
            synth();
            const RunResult r = run_cli(
                "train-seg --manifest " + manifest.string() + " --out " +
                (root / "seg").string() +
                " --seed 3 --set steps=5 --set seg_base_width=4 --set seg_depth=3"
                " --set seg_input_size=32 --set batch_size=2 --set log_every=0");
            REQUIRE(r.code == 0);
            REQUIRE(r.out.find("final_bce") != std::string::npos);
        }
        return seg_ckpt;
    }

    const fs::path& train_inpaint() {
        if (!fs::exists(gen_ckpt)) {
            synth();
            const RunResult r = run_cli(
                "train-inpaint --manifest " + manifest.string() + " --out " +
                (root / "gen").string() +
                " --seed 3 --set image_size=32 --set gen_base_width=4"
                " --set disc_base_width=4 --set feat_disc_base_width=4"
                " --set batch_size=2 --set steps_per_epoch=2 --set epochs=1"
                " --set backbone=surrogate:7 --set log_every=0");
            REQUIRE(r.code == 0);
            REQUIRE(r.out.find("wrote " + gen_ckpt.string()) != std::string::npos);
        }
        return gen_ckpt;
    }
};

}  // namespace

TEST_CASE("bare invocation fails with usage, --help succeeds") {
    const RunResult bare = run_cli("");
    CHECK(bare.code == 1);
    CHECK(bare.out.find("subcommand") != std::string::npos);

    const RunResult help = run_cli("--help");
    CHECK(help.code == 0);
    for (const char* sub : {"synth", "make-templates", "train-seg", "train-inpaint", "eval",
                            "infer", "ablate"})
        CHECK(help.out.find(sub) != std::string::npos);

    const RunResult sub_help = run_cli("eval --help");
    CHECK(sub_help.code == 0);
    CHECK(sub_help.out.find("--checkpoint") != std::string::npos);
}

TEST_CASE("missing required options exit 1 without writing anything") {
    const fs::path out = fs::path(fixtures::temp_dir("cli_reqd")) / "never";
    const RunResult r = run_cli("synth --faces somewhere --out " + out.string());
    CHECK(r.code == 1);
    CHECK(r.out.find("--landmarks") != std::string::npos);
    CHECK_FALSE(fs::exists(out));

    CHECK(run_cli("train-seg --manifest x.jsonl").code == 1);
    CHECK(run_cli("no-such-command").code == 1);
}

TEST_CASE("runtime failures exit 2 with a diagnostic") {
    const RunResult r = run_cli("eval --manifest nope.jsonl --checkpoint nope.ckpt");
    CHECK(r.code == 2);
    CHECK(r.out.find("error:") != std::string::npos);

    const fs::path dir = fixtures::temp_dir("cli_badset");
    const RunResult bad_set = run_cli("train-inpaint --manifest nope.jsonl --out " + dir.string() +
                                      " --set junkvalue");
    CHECK(bad_set.code == 2);
    CHECK(bad_set.out.find("key=value") != std::string::npos);

    const RunResult typo = run_cli("train-inpaint --manifest nope.jsonl --out " + dir.string() +
                                   " --set epohcs=3");
    CHECK(typo.code == 2);
    CHECK(typo.out.find("epohcs") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("make-templates writes a loadable template registry") {
    const fs::path dir = fixtures::temp_dir("cli_templates");
    const RunResult r = run_cli("make-templates --out " + dir.string());
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "anchors.txt"));
    int pngs = 0;
    for (const auto& entry : fs::directory_iterator(dir))
        pngs += entry.path().extension() == ".png" ? 1 : 0;
    CHECK(pngs == 5);
    CHECK(read_text(dir / "anchors.txt").find("surgical_blue.png") != std::string::npos);

    // The registry round-trips through `synth --templates`.
    Artifacts& a = Artifacts::get();
    a.synth();
    const fs::path out2 = fixtures::temp_dir("cli_synth_tpl");
    const RunResult r2 = run_cli("synth --faces " + a.faces_dir.string() + " --landmarks " +
                                 a.landmarks + " --out " + out2.string() +
                                 " --size 32 --seed 5 --templates " + dir.string());
    CHECK(r2.code == 0);
    // Same templates, same seed: byte-identical manifest.
    CHECK(read_text(out2 / "manifest.jsonl") == read_text(a.manifest));
    fs::remove_all(dir);
    fs::remove_all(out2);
}

TEST_CASE("synth reruns are deterministic") {
    Artifacts& a = Artifacts::get();
    a.synth();
    const fs::path out2 = fixtures::temp_dir("cli_synth_again");
    const RunResult r = run_cli("synth --faces " + a.faces_dir.string() + " --landmarks " +
                                a.landmarks + " --out " + out2.string() + " --size 32 --seed 5");
    CHECK(r.code == 0);
    CHECK(read_text(out2 / "manifest.jsonl") == read_text(a.manifest));
    for (const char* name : {"face_000_gt.png", "face_000_masked.png", "face_000_mask.png"})
        CHECK(read_text(out2 / name) == read_text(a.data_dir / name));
    fs::remove_all(out2);
}

TEST_CASE("train-seg produces a segmenter checkpoint") {
    Artifacts& a = Artifacts::get();
    const fs::path& ckpt = a.train_seg();
    CHECK(fs::exists(ckpt));
    CHECK(fs::file_size(ckpt) > 0);
}

TEST_CASE("train-inpaint produces a generator checkpoint eval can score") {
    Artifacts& a = Artifacts::get();
    const fs::path& ckpt = a.train_inpaint();
    CHECK(fs::exists(ckpt));

    const fs::path report = a.root / "report.jsonl";
    const RunResult ev = run_cli("eval --manifest " + a.manifest.string() + " --checkpoint " +
                                 ckpt.string() + " --report " + report.string());
    CHECK(ev.code == 0);
    CHECK(ev.out.find("SSIM") != std::string::npos);
    CHECK(ev.out.find("mask source: gt") != std::string::npos);
    CHECK(fs::exists(report));
    CHECK(read_text(report).find("\"ssim\"") != std::string::npos);
}

TEST_CASE("eval with predicted masks requires and uses the segmenter") {
    Artifacts& a = Artifacts::get();
    a.train_inpaint();
    const RunResult missing = run_cli("eval --manifest " + a.manifest.string() + " --checkpoint " +
                                      a.gen_ckpt.string() + " --mask-source predicted");
    CHECK(missing.code == 2);
    CHECK(missing.out.find("--seg-checkpoint") != std::string::npos);

    a.train_seg();
    const RunResult ok = run_cli("eval --manifest " + a.manifest.string() + " --checkpoint " +
                                 a.gen_ckpt.string() + " --mask-source predicted" +
                                 " --seg-checkpoint " + a.seg_ckpt.string());
    CHECK(ok.code == 0);
    CHECK(ok.out.find("mask source: predicted") != std::string::npos);
}

TEST_CASE("infer writes the inpainted image and the predicted mask") {
    Artifacts& a = Artifacts::get();
    a.train_seg();
    a.train_inpaint();
    const fs::path out_png = a.root / "restored.png";
    const RunResult r = run_cli("infer --image " + (a.faces_dir / "face_001.png").string() +
                                " --checkpoint " + a.gen_ckpt.string() + " --seg-checkpoint " +
                                a.seg_ckpt.string() + " --out " + out_png.string());
    CHECK(r.code == 0);
    REQUIRE(fs::exists(out_png));
    REQUIRE(fs::exists(a.root / "restored.mask.png"));

    const maskoff::Image img = maskoff::load_image(out_png.string(), 3);
    CHECK(img.h == 32);
    CHECK(img.w == 32);
    const maskoff::Mask mask = maskoff::load_mask_png((a.root / "restored.mask.png").string());
    CHECK(mask.h == 32);
    CHECK(mask.w == 32);
}

TEST_CASE("a corrupt checkpoint is reported, not crashed on") {
    Artifacts& a = Artifacts::get();
    a.synth();
    const fs::path bad = a.root / "bad.ckpt";
    std::ofstream(bad) << "this is not a checkpoint";
    const RunResult r = run_cli("eval --manifest " + a.manifest.string() + " --checkpoint " +
                                bad.string());
    CHECK(r.code == 2);
    CHECK(r.out.find("error:") != std::string::npos);
}
