#ifndef MASKOFF_MASK_SYNTHESIS_HPP
#define MASKOFF_MASK_SYNTHESIS_HPP

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maskoff/image.hpp"
#include "maskoff/rng.hpp"

namespace maskoff::synth {

struct Point {
    double x = 0.0, y = 0.0;
};

double dist(Point p, Point q);

// 2x3 affine transform [a b tx; c d ty] acting on pixel coordinates
// (x right, y down).
struct Affine {
    double a = 1.0, b = 0.0, tx = 0.0;
    double c = 0.0, d = 1.0, ty = 0.0;

    Point apply(Point p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
    Affine inverse() const;

    // Decomposition of a rotation·diag(sx,sy) transform.
    double rotation() const { return std::atan2(c, a); }
    double scale_x() const { return std::hypot(a, c); }
    double scale_y() const { return std::hypot(b, d); }
};

// The 21-point landmark set: 4 nose-bridge points ordered top to bottom and
// 17 chin points ordered left to right along the jaw.
struct FaceLandmarks {
    std::array<Point, 4> nose_bridge;
    std::array<Point, 17> chin;

    Point nose_top() const { return nose_bridge[0]; }
    Point chin_apex() const { return chin[8]; }  // 9th of 17, the jaw apex
    Point jaw_left() const { return chin[0]; }
    Point jaw_right() const { return chin[16]; }

    bool within(int64_t h, int64_t w) const;
};

// RGBA mask asset plus the four anchor points that the landmark fit maps
// onto the face.
struct MaskTemplate {
    std::string id;
    Image rgba;  // channels = 4, alpha in [0,1]
    Point anchor_top, anchor_bottom, anchor_left, anchor_right;
};

// Rigid-ish fit: rotation follows the nose-bridge axis, vertical scale from
// nose-top to chin-apex distance, horizontal scale from the jaw extremes.
Affine fit_mask_transform(const FaceLandmarks& lm, const MaskTemplate& tpl);

// Warp the template onto the face by inverse mapping with bilinear sampling.
// A pixel is masked iff the sampled alpha is >= 0.5; the same threshold
// drives both outputs so they agree exactly. Throws if no pixel is covered.
std::pair<Image, Mask> overlay_mask(const Image& face, const MaskTemplate& tpl, const Affine& T);

// --- template registry -------------------------------------------------------------

// Five procedural mask assets (two surgical variants, cloth, N95-type,
// scarf) used as the default registry and by the test fixtures.
std::vector<MaskTemplate> builtin_templates();

// Directory form: five RGBA PNGs plus an `anchors.txt` sidecar with lines
//   <file.png> top_x top_y bottom_x bottom_y left_x left_y right_x right_y
std::vector<MaskTemplate> load_templates(const std::string& dir);
void write_templates(const std::string& dir, const std::vector<MaskTemplate>& templates);

// --- dataset builder ----------------------------------------------------------------

struct DatasetRecord {
    std::string gt, masked, mask;  // file names relative to the manifest directory
    std::string template_id;
    std::string status;  // "found" | "not_found"
};

// Pluggable landmark source: path + the already cropped/resized face image;
// coordinates must be in the cropped image's frame. nullopt = no landmarks.
using LandmarkProvider =
    std::function<std::optional<FaceLandmarks>(const std::string& path, const Image& cropped)>;

struct BuildOptions {
    int64_t out_size = 256;
};

// Center-crop/resize every face in faces_dir, overlay a seeded uniform
// template choice, write (gt, masked, mask) PNG triples plus manifest.jsonl
// into out_dir. Returns the records in face order.
std::vector<DatasetRecord> build_dataset(const std::string& faces_dir,
                                         const std::vector<MaskTemplate>& templates,
                                         const std::string& out_dir, uint64_t seed,
                                         const LandmarkProvider& provider,
                                         const BuildOptions& options = {});

void write_manifest(const std::string& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_manifest(const std::string& path);

// A self-consistent training triple loaded back from disk.
struct Triple {
    Image gt, masked;
    Mask mask;
};
Triple load_triple(const std::string& manifest_path, const DatasetRecord& rec);

// JSONL landmark file: one object per face,
//   {"file": <basename>, "nose_bridge": [[x,y]*4], "chin": [[x,y]*17]}
// entries may instead carry {"file":..., "status":"not_found"}.
LandmarkProvider landmark_file_provider(const std::string& jsonl_path);
void write_landmark_file(const std::string& path,
                         const std::vector<std::pair<std::string, FaceLandmarks>>& entries);

}  // namespace maskoff::synth

#endif
