#ifndef MASKOFF_IMAGE_HPP
#define MASKOFF_IMAGE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "maskoff/common.hpp"
#include "maskoff/tensor.hpp"

namespace maskoff {

// Dense HWC image. File-facing values live in [0,1]; the generator works in
// [-1,1] (see to_model_range). Channel count is 1 (gray), 3 (RGB) or 4 (RGBA).
struct Image {
    int64_t h = 0, w = 0, c = 0;
    std::vector<double> data;

    Image() = default;
    Image(int64_t h, int64_t w, int64_t c, double fill = 0.0)
        : h(h), w(w), c(c), data(static_cast<size_t>(h * w * c), fill) {}

    double& at(int64_t y, int64_t x, int64_t ch) { return data[(y * w + x) * c + ch]; }
    double at(int64_t y, int64_t x, int64_t ch) const { return data[(y * w + x) * c + ch]; }
    int64_t pixels() const { return h * w; }
};

// Hard binary mask; 1 = masked (occluded) pixel, matching the dataset and
// network conventions everywhere in this codebase.
struct Mask {
    int64_t h = 0, w = 0;
    std::vector<uint8_t> data;

    Mask() = default;
    Mask(int64_t h, int64_t w, uint8_t fill = 0)
        : h(h), w(w), data(static_cast<size_t>(h * w), fill) {}

    uint8_t& at(int64_t y, int64_t x) { return data[y * w + x]; }
    uint8_t at(int64_t y, int64_t x) const { return data[y * w + x]; }
    int64_t count() const;  // number of 1s
};

// --- file I/O -------------------------------------------------------------------

// Decode an 8-bit PNG or JPEG into [0,1]. Grayscale files are expanded when
// 3 channels are expected; any other channel mismatch is an error.
Image load_image(const std::string& path, int64_t expected_channels);

// Lossless 8-bit PNG encode; accepts 1, 3 or 4 channels in [0,1].
void save_png(const std::string& path, const Image& img);

Mask load_mask_png(const std::string& path);  // 0/255 grayscale convention
void save_mask_png(const std::string& path, const Mask& mask);

// --- range & compositing -----------------------------------------------------------

// x -> 2x-1 with input validated to [0,1] (tolerance 1e-6), and its inverse.
Image to_model_range(const Image& img);
Image from_model_range(const Image& img);

// I_syn = (1-I_m)*I_inp + I_m*I_r, evaluated as an exact per-pixel selection.
Image composite(const Image& inp, const Mask& mask, const Image& raw_output);

// --- geometry ---------------------------------------------------------------------

Image resize_bilinear(const Image& img, int64_t out_h, int64_t out_w);
Image center_crop_square(const Image& img);

// --- tensor bridging -----------------------------------------------------------------

Tensor image_to_chw(const Image& img);                       // [1,C,H,W]
Tensor images_to_chw(const std::vector<Image>& batch);       // [N,C,H,W]
Image chw_to_image(const Tensor& t, int64_t n = 0);          // one sample
Tensor mask_to_chw(const Mask& mask);                        // [1,1,H,W], values 0/1
Tensor masks_to_chw(const std::vector<Mask>& batch);         // [N,1,H,W]

}  // namespace maskoff

#endif
