#ifndef MASKOFF_METRICS_HPP
#define MASKOFF_METRICS_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "maskoff/generator.hpp"
#include "maskoff/image.hpp"
#include "maskoff/segmentation.hpp"

namespace maskoff::metrics {

struct PsnrResult {
    double db = 0.0;
    bool exact_match = false;  // MSE was 0; db holds the 99.0 cap
};

inline constexpr double kPsnrCap = 99.0;

// 10*log10(peak^2 / MSE); exact matches report the cap with the flag set.
PsnrResult psnr(const Image& a, const Image& b, double peak = 1.0);

// Windowed SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// computed per channel over all fully-contained windows and averaged.
double ssim(const Image& a, const Image& b);

// Mean absolute difference over all pixels and channels, in [0,1] space.
double l1_metric(const Image& a, const Image& b);

// Mean absolute difference restricted to mask=1 pixels.
double l1_masked(const Image& a, const Image& b, const Mask& m);

enum class MaskSource { gt, predicted };
MaskSource mask_source_from_string(const std::string& s);
std::string to_string(MaskSource s);

struct EvalOptions {
    MaskSource mask_source = MaskSource::gt;
};

struct ImageMetrics {
    std::string id;
    double ssim = 0.0;
    double psnr = 0.0;
    bool psnr_exact = false;
    double l1 = 0.0;
    double l1_masked = 0.0;
};

struct EvalReport {
    std::string mask_source;
    std::vector<ImageMetrics> rows;
    double mean_ssim = 0.0;
    double mean_psnr = 0.0;
    double mean_l1 = 0.0;
    double mean_l1_masked = 0.0;
};

// Runs the generator over every "ok" manifest triple and scores I_syn against
// I_gt. Masks come from the dataset or from the provided segmenter (which is
// required for MaskSource::predicted).
EvalReport evaluate_set(const std::filesystem::path& manifest_path, const gen::Generator& g,
                        seg::SegNet* segmenter, const EvalOptions& opts);

// Three-column table (SSIM up, PSNR up, l1 down) plus the summary row.
std::string render_table(const EvalReport& report);

// Line-delimited JSON: one object per image, then one summary object.
void write_report_jsonl(const std::filesystem::path& path, const EvalReport& report);

}  // namespace maskoff::metrics

#endif
