#include "maskoff/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "maskoff/common.hpp"
#include "maskoff/mask_synthesis.hpp"

namespace maskoff::metrics {

namespace {

void check_same_shape(const Image& a, const Image& b, const char* who) {
    MASKOFF_CHECK(a.h == b.h && a.w == b.w && a.c == b.c, who, ": image shape mismatch (", a.h,
                  "x", a.w, "x", a.c, " vs ", b.h, "x", b.w, "x", b.c, ")");
}

}  // namespace

PsnrResult psnr(const Image& a, const Image& b, double peak) {
    check_same_shape(a, b, "psnr");
    MASKOFF_CHECK(peak > 0.0, "psnr: peak must be positive");
    double se = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0.0) return {kPsnrCap, true};
    return {10.0 * std::log10(peak * peak / mse), false};
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

const std::vector<double>& gaussian_window() {
    static const std::vector<double> win = [] {
        std::vector<double> w1(kWin);
        double s = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - (kWin - 1) / 2.0;
            w1[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            s += w1[i];
        }
        for (double& v : w1) v /= s;
        std::vector<double> w2(kWin * kWin);
        for (int y = 0; y < kWin; ++y)
            for (int x = 0; x < kWin; ++x) w2[y * kWin + x] = w1[y] * w1[x];
        return w2;
    }();
    return win;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    check_same_shape(a, b, "ssim");
    MASKOFF_CHECK(a.h >= kWin && a.w >= kWin, "ssim: image ", a.h, "x", a.w,
                  " is smaller than the ", kWin, "x", kWin, " window");
    const std::vector<double>& win = gaussian_window();
    const double c1 = kK1 * kK1;  // peak = 1
    const double c2 = kK2 * kK2;
    double total = 0.0;
    int64_t count = 0;
    for (int64_t ch = 0; ch < a.c; ++ch) {
        for (int64_t y = 0; y + kWin <= a.h; ++y) {
            for (int64_t x = 0; x + kWin <= a.w; ++x) {
                double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
                for (int wy = 0; wy < kWin; ++wy) {
                    for (int wx = 0; wx < kWin; ++wx) {
                        const double wgt = win[wy * kWin + wx];
                        const double va = a.at(y + wy, x + wx, ch);
                        const double vb = b.at(y + wy, x + wx, ch);
                        mx += wgt * va;
                        my += wgt * vb;
                        mxx += wgt * va * va;
                        myy += wgt * vb * vb;
                        mxy += wgt * va * vb;
                    }
                }
                const double vx = mxx - mx * mx;
                const double vy = myy - my * my;
                const double cxy = mxy - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                         ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

double l1_metric(const Image& a, const Image& b) {
    check_same_shape(a, b, "l1_metric");
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

double l1_masked(const Image& a, const Image& b, const Mask& m) {
    check_same_shape(a, b, "l1_masked");
    MASKOFF_CHECK(m.h == a.h && m.w == a.w, "l1_masked: mask shape mismatch");
    double s = 0.0;
    int64_t n = 0;
    for (int64_t y = 0; y < a.h; ++y)
        for (int64_t x = 0; x < a.w; ++x) {
            if (!m.at(y, x)) continue;
            for (int64_t ch = 0; ch < a.c; ++ch) {
                s += std::abs(a.at(y, x, ch) - b.at(y, x, ch));
                ++n;
            }
        }
    MASKOFF_CHECK(n > 0, "l1_masked: mask selects no pixels");
    return s / static_cast<double>(n);
}

MaskSource mask_source_from_string(const std::string& s) {
    if (s == "gt") return MaskSource::gt;
    if (s == "predicted") return MaskSource::predicted;
    fail("unknown mask source '", s, "' (expected gt|predicted)");
}

std::string to_string(MaskSource s) { return s == MaskSource::gt ? "gt" : "predicted"; }

EvalReport evaluate_set(const std::filesystem::path& manifest_path, const gen::Generator& g,
                        seg::SegNet* segmenter, const EvalOptions& opts) {
    MASKOFF_CHECK(opts.mask_source == MaskSource::gt || segmenter != nullptr,
                  "evaluate_set: predicted mask source needs a segmenter");
    EvalReport report;
    report.mask_source = to_string(opts.mask_source);
    NoGradGuard no_grad;
    for (const synth::DatasetRecord& rec : synth::read_manifest(manifest_path.string())) {
        if (rec.status != "found") continue;
        synth::Triple triple = synth::load_triple(manifest_path.string(), rec);
        MASKOFF_CHECK(triple.gt.h == g.config().input_size && triple.gt.w == g.config().input_size,
                      "evaluate_set: image ", rec.gt, " is ", triple.gt.h, "x", triple.gt.w,
                      " but the generator expects ", g.config().input_size);
        Mask mask = triple.mask;
        if (opts.mask_source == MaskSource::predicted) {
            Tensor pred = segmenter->forward(image_to_chw(triple.masked), /*training=*/false);
            mask = seg::binarize(pred, 0.5, 0);
        }
        Tensor inp = image_to_chw(to_model_range(triple.masked));
        Tensor syn = g.inpaint(inp, mask_to_chw(mask));
        Image out = from_model_range(chw_to_image(syn));

        ImageMetrics row;
        row.id = std::filesystem::path(rec.gt).stem().string();
        if (row.id.ends_with("_gt")) row.id.resize(row.id.size() - 3);
        row.ssim = ssim(out, triple.gt);
        PsnrResult p = psnr(out, triple.gt, 1.0);
        row.psnr = p.db;
        row.psnr_exact = p.exact_match;
        row.l1 = l1_metric(out, triple.gt);
        row.l1_masked = mask.count() > 0 ? l1_masked(out, triple.gt, mask) : 0.0;
        report.rows.push_back(std::move(row));
    }
    MASKOFF_CHECK(!report.rows.empty(), "evaluate_set: no usable triples in ",
                  manifest_path.string());
    for (const ImageMetrics& r : report.rows) {
        report.mean_ssim += r.ssim;
        report.mean_psnr += r.psnr;
        report.mean_l1 += r.l1;
        report.mean_l1_masked += r.l1_masked;
    }
    const double n = static_cast<double>(report.rows.size());
    report.mean_ssim /= n;
    report.mean_psnr /= n;
    report.mean_l1 /= n;
    report.mean_l1_masked /= n;
    return report;
}

std::string render_table(const EvalReport& report) {
    std::ostringstream os;
    os << "mask source: " << report.mask_source << "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-24s %10s %12s %10s\n", "image", "SSIM(+)", "PSNR(+)",
                  "l1(-)");
    os << line;
    for (const ImageMetrics& r : report.rows) {
        std::snprintf(line, sizeof(line), "%-24s %10.4f %12.4f %10.4f\n", r.id.c_str(), r.ssim,
                      r.psnr, r.l1);
        os << line;
    }
    std::snprintf(line, sizeof(line), "%-24s %10.4f %12.4f %10.4f\n", "mean", report.mean_ssim,
                  report.mean_psnr, report.mean_l1);
    os << line;
    return os.str();
}

void write_report_jsonl(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path);
    MASKOFF_CHECK(out.good(), "cannot open report file ", path.string());
    for (const ImageMetrics& r : report.rows) {
        nlohmann::json j{{"id", r.id},
                         {"ssim", r.ssim},
                         {"psnr", r.psnr},
                         {"psnr_exact", r.psnr_exact},
                         {"l1", r.l1},
                         {"l1_masked", r.l1_masked}};
        out << j.dump() << "\n";
    }
    nlohmann::json summary{{"summary", true},
                           {"mask_source", report.mask_source},
                           {"count", report.rows.size()},
                           {"mean_ssim", report.mean_ssim},
                           {"mean_psnr", report.mean_psnr},
                           {"mean_l1", report.mean_l1},
                           {"mean_l1_masked", report.mean_l1_masked}};
    out << summary.dump() << "\n";
    MASKOFF_CHECK(out.good(), "failed writing report file ", path.string());
}

}  // namespace maskoff::metrics
