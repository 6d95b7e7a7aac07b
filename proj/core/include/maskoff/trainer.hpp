#ifndef MASKOFF_TRAINER_HPP
#define MASKOFF_TRAINER_HPP

#include <iosfwd>
#include <memory>
#include <string>

#include "maskoff/attention.hpp"
#include "maskoff/checkpoint.hpp"
#include "maskoff/config.hpp"
#include "maskoff/generator.hpp"
#include "maskoff/losses.hpp"
#include "maskoff/metrics.hpp"
#include "maskoff/segmentation.hpp"

namespace maskoff::train {

struct TrainConfig {
    uint64_t seed = 0;
    int64_t batch_size = 4;
    int64_t epochs = 1;
    int64_t steps_per_epoch = 0;  // 0: one pass over the dataset per epoch
    double base_lr = 2e-4;
    double lr_decay_per_epoch = 2e-6;
    int64_t decay_start_epoch = 20;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    loss::LossWeights weights;
    loss::SupervisionMode supervision = loss::SupervisionMode::local;
    attn::AttentionMode attention = attn::AttentionMode::mcsam;
    int64_t image_size = 64;
    int64_t gen_base_width = 16;
    int64_t disc_base_width = 16;
    int64_t feat_disc_base_width = 16;
    std::string backbone = "surrogate";  // see backbone::make_backbone
    int64_t feature_tap = 2;             // backbone tap fed to the feature critic
    bool gram_spatial_norm = true;
    bool deterministic = true;  // accepted for the CLI surface; runs are always deterministic
    int64_t checkpoint_every = 1;  // epochs
    int64_t log_every = 10;        // steps
    // Optional early stop on training-set thresholds; 0 disables the checks.
    int64_t stop_check_every = 0;
    double stop_masked_l1 = 0.0;
    double stop_min_ssim = 0.0;
};

// Round-trip between TrainConfig and the documented key=value schema. The
// canonical rendering doubles as the checkpoint config echo.
TrainConfig train_config_from(const cfg::KeyValueConfig& kv);
cfg::KeyValueConfig to_key_values(const TrainConfig& cfg);

// Flat base rate through decay_start_epoch, then base - (epoch-start)*decay,
// floored at zero.
double lr_schedule(const TrainConfig& cfg, int64_t epoch);

struct TrainResult {
    std::string final_checkpoint;
    int64_t steps = 0;
    int64_t epochs = 0;
    double final_total = 0.0;
    double train_masked_l1 = -1.0;  // filled when stop checks ran
    double train_ssim = -1.0;
    bool early_stopped = false;
};

// Adversarial training loop: per step one generator update, then one update
// for each discriminator. Checkpoints land in out_dir (epoch_NNNN.ckpt plus
// final.ckpt); pass resume_from to continue a run bit-exactly.
TrainResult train_inpainter(const TrainConfig& cfg, const std::string& manifest_path,
                            const std::string& out_dir, const std::string& resume_from = "",
                            std::ostream* log = nullptr);

// --- checkpoint bridging ---------------------------------------------------------

TrainConfig train_config_from_checkpoint(const ckpt::Checkpoint& c);
std::unique_ptr<gen::Generator> generator_from_checkpoint(const ckpt::Checkpoint& c);

void save_segmenter_checkpoint(const std::string& path, seg::SegNet& net, int64_t steps);
std::unique_ptr<seg::SegNet> segmenter_from_checkpoint(const ckpt::Checkpoint& c);

// --- ablations ---------------------------------------------------------------------

// Presets: local_vs_full (supervision target), csam (with/without the
// attention arm), multiscale (full bottleneck vs plain attention). Both arms
// share the seed and data order; each trains from scratch and is evaluated
// on the manifest with ground-truth masks.
struct AblationArm {
    std::string name;
    TrainConfig cfg;
    metrics::EvalReport eval;
};

struct AblationReport {
    std::string preset;
    AblationArm a, b;
    std::vector<std::string> reference_footer;  // published paper-scale numbers
};

AblationReport run_ablation(const std::string& preset, const TrainConfig& base,
                            const std::string& manifest_path, const std::string& out_dir,
                            std::ostream* log = nullptr);
std::string render_ablation(const AblationReport& report);

}  // namespace maskoff::train

#endif
