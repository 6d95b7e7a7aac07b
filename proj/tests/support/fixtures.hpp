#ifndef MASKOFF_TESTS_FIXTURES_HPP
#define MASKOFF_TESTS_FIXTURES_HPP

// Procedural test data: deterministic cartoon faces with landmarks that
// match their geometry, plus helpers that assemble full desk-scale datasets.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "maskoff/image.hpp"
#include "maskoff/mask_synthesis.hpp"
#include "maskoff/rng.hpp"

namespace fixtures {

// Fresh scratch directory under the system temp root, wiped per call.
inline std::string temp_dir(const std::string& tag) {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / ("maskoff_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

struct FaceGeometry {
    double cx, cy;  // face center
    double wx, wy;  // ellipse half-axes
};

inline FaceGeometry face_geometry(int64_t size, maskoff::Rng& rng) {
    const double s = static_cast<double>(size);
    FaceGeometry g;
    g.cx = s * (0.5 + rng.uniform(-0.04, 0.04));
    g.cy = s * (0.5 + rng.uniform(-0.03, 0.03));
    g.wx = s * (0.30 + rng.uniform(-0.03, 0.03));
    g.wy = s * (0.40 + rng.uniform(-0.03, 0.03));
    return g;
}

inline maskoff::synth::FaceLandmarks landmarks_for(const FaceGeometry& g) {
    maskoff::synth::FaceLandmarks lm;
    const double ny0 = g.cy - 0.30 * g.wy;
    const double ny1 = g.cy + 0.10 * g.wy;
    for (int i = 0; i < 4; ++i)
        lm.nose_bridge[i] = {g.cx, ny0 + (ny1 - ny0) * static_cast<double>(i) / 3.0};
    for (int i = 0; i < 17; ++i) {
        const double t = M_PI + M_PI * static_cast<double>(i) / 16.0;
        lm.chin[i] = {g.cx + g.wx * std::cos(t), g.cy - g.wy * std::sin(t)};
    }
    return lm;
}

// Smooth shaded face on a gradient background; every value is a pure
// function of (seed, size) so corpora regenerate identically.
inline maskoff::Image face_image(int64_t size, uint64_t seed,
                                 maskoff::synth::FaceLandmarks* lm_out = nullptr) {
    maskoff::Rng rng = maskoff::Rng::keyed(seed, 0xfaceUL);
    const FaceGeometry g = face_geometry(size, rng);
    if (lm_out) *lm_out = landmarks_for(g);

    const double phase1 = rng.uniform(0.0, 2.0 * M_PI);
    const double phase2 = rng.uniform(0.0, 2.0 * M_PI);
    const double skin_r = 0.78 + rng.uniform(-0.06, 0.06);
    const double skin_g = 0.62 + rng.uniform(-0.06, 0.06);
    const double skin_b = 0.50 + rng.uniform(-0.06, 0.06);

    maskoff::Image img(size, size, 3);
    const double s = static_cast<double>(size);
    for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
            const double fy = static_cast<double>(y) / s;
            const double fx = static_cast<double>(x) / s;
            double r = 0.18 + 0.15 * fy + 0.05 * std::sin(6.0 * fx + phase1);
            double gr = 0.22 + 0.12 * fy + 0.05 * std::sin(5.0 * fy + phase2);
            double b = 0.30 + 0.10 * fy;

            const double ex = (static_cast<double>(x) - g.cx) / g.wx;
            const double ey = (static_cast<double>(y) - g.cy) / g.wy;
            const double rho = ex * ex + ey * ey;
            if (rho <= 1.0) {
                const double shade = 0.82 + 0.18 * (1.0 - rho);
                r = skin_r * shade;
                gr = skin_g * shade;
                b = skin_b * shade;
                // eyes
                for (const double side : {-1.0, 1.0}) {
                    const double dx = (static_cast<double>(x) - (g.cx + side * 0.45 * g.wx));
                    const double dy = (static_cast<double>(y) - (g.cy - 0.35 * g.wy));
                    if (dx * dx + dy * dy <= 0.012 * g.wx * g.wx * 4.0) {
                        r = 0.12;
                        gr = 0.10;
                        b = 0.10;
                    }
                }
                // mouth
                const double mx = (static_cast<double>(x) - g.cx) / (0.35 * g.wx);
                const double my = (static_cast<double>(y) - (g.cy + 0.55 * g.wy)) / (0.10 * g.wy);
                if (mx * mx + my * my <= 1.0) {
                    r = 0.55;
                    gr = 0.20;
                    b = 0.22;
                }
            }
            img.at(y, x, 0) = std::clamp(r, 0.0, 1.0);
            img.at(y, x, 1) = std::clamp(gr, 0.0, 1.0);
            img.at(y, x, 2) = std::clamp(b, 0.0, 1.0);
        }
    }
    return img;
}

// Writes face_NNN.png plus landmarks.jsonl; returns the landmark file path.
inline std::string write_face_corpus(const std::string& dir, int count, int64_t size,
                                     uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::vector<std::pair<std::string, maskoff::synth::FaceLandmarks>> entries;
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "face_%03d.png", i);
        maskoff::synth::FaceLandmarks lm;
        maskoff::Image img = face_image(size, seed + static_cast<uint64_t>(i), &lm);
        maskoff::save_png((std::filesystem::path(dir) / name).string(), img);
        entries.emplace_back(name, lm);
    }
    const std::string lm_path = (std::filesystem::path(dir) / "landmarks.jsonl").string();
    maskoff::synth::write_landmark_file(lm_path, entries);
    return lm_path;
}

// Face corpus -> (gt, masked, mask) dataset with the builtin templates.
// Returns the manifest path; faces land in <root>/faces, triples in
// <root>/data.
inline std::string build_desk_dataset(const std::string& root, int count, int64_t size,
                                      uint64_t seed) {
    const std::string faces = (std::filesystem::path(root) / "faces").string();
    const std::string data = (std::filesystem::path(root) / "data").string();
    const std::string lm_path = write_face_corpus(faces, count, size, seed);
    maskoff::synth::BuildOptions opt;
    opt.out_size = size;
    maskoff::synth::build_dataset(faces, maskoff::synth::builtin_templates(), data, seed,
                                  maskoff::synth::landmark_file_provider(lm_path), opt);
    return (std::filesystem::path(data) / "manifest.jsonl").string();
}

}  // namespace fixtures

#endif
