#include "maskoff/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <csetjmp>
#include <cstring>
#include <memory>

#include <jpeglib.h>
#include <png.h>

namespace maskoff {

int64_t Mask::count() const {
    int64_t n = 0;
    for (uint8_t v : data) n += v;
    return n;
}

// --- decode helpers -------------------------------------------------------------

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    MASKOFF_CHECK(f != nullptr, "cannot open '", path, "'");
    return f;
}

// 8-bit interleaved pixel buffer shared by both decoders.
struct Raw8 {
    int64_t h = 0, w = 0, c = 0;
    std::vector<uint8_t> px;
};

Raw8 decode_png(std::FILE* f, const std::string& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    MASKOFF_CHECK(png, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("libpng init failed");
    }
    std::vector<png_bytep> rows;
    Raw8 out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("cannot decode PNG '", path, "'");
    }
    png_init_io(png, f);
    png_read_info(png, info);

    // Normalize everything to 8-bit gray/GA/RGB/RGBA.
    png_set_expand(png);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    png_read_update_info(png, info);

    out.h = png_get_image_height(png, info);
    out.w = png_get_image_width(png, info);
    out.c = png_get_channels(png, info);
    out.px.resize(static_cast<size_t>(out.h * out.w * out.c));
    rows.resize(static_cast<size_t>(out.h));
    for (int64_t y = 0; y < out.h; ++y) rows[static_cast<size_t>(y)] = out.px.data() + y * out.w * out.c;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

struct JpegErrorMgr {
    jpeg_error_mgr base;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

Raw8 decode_jpeg(std::FILE* f, const std::string& path) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        fail("cannot decode JPEG '", path, "'");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    jpeg_start_decompress(&cinfo);

    Raw8 out;
    out.h = cinfo.output_height;
    out.w = cinfo.output_width;
    out.c = cinfo.output_components;
    MASKOFF_CHECK(out.c == 1 || out.c == 3, "unsupported JPEG channel count ", out.c, " in '", path,
                  "'");
    out.px.resize(static_cast<size_t>(out.h * out.w * out.c));
    while (cinfo.output_scanline < cinfo.output_height) {
        uint8_t* row = out.px.data() + static_cast<int64_t>(cinfo.output_scanline) * out.w * out.c;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

}  // namespace

Image load_image(const std::string& path, int64_t expected_channels) {
    FilePtr f = open_file(path, "rb");
    uint8_t magic[2] = {0, 0};
    const size_t got = std::fread(magic, 1, 2, f.get());
    MASKOFF_CHECK(got == 2, "cannot read '", path, "'");
    std::rewind(f.get());

    Raw8 raw;
    if (magic[0] == 0x89 && magic[1] == 'P') {
        raw = decode_png(f.get(), path);
    } else if (magic[0] == 0xFF && magic[1] == 0xD8) {
        raw = decode_jpeg(f.get(), path);
    } else {
        fail("'", path, "' is neither PNG nor JPEG");
    }

    // Drop an alpha channel nobody asked for; expand gray to RGB on request.
    if (raw.c == 4 && expected_channels == 3) {
        std::vector<uint8_t> rgb(static_cast<size_t>(raw.h * raw.w * 3));
        for (int64_t i = 0; i < raw.h * raw.w; ++i)
            for (int64_t ch = 0; ch < 3; ++ch) rgb[i * 3 + ch] = raw.px[i * 4 + ch];
        raw.px = std::move(rgb);
        raw.c = 3;
    }
    if (raw.c == 2 && expected_channels == 1) {
        std::vector<uint8_t> g(static_cast<size_t>(raw.h * raw.w));
        for (int64_t i = 0; i < raw.h * raw.w; ++i) g[static_cast<size_t>(i)] = raw.px[i * 2];
        raw.px = std::move(g);
        raw.c = 1;
    }

    Image img(raw.h, raw.w, expected_channels);
    if (raw.c == expected_channels) {
        for (size_t i = 0; i < raw.px.size(); ++i) img.data[i] = raw.px[i] / 255.0;
    } else if (raw.c == 1 && expected_channels == 3) {
        for (int64_t i = 0; i < raw.h * raw.w; ++i) {
            const double v = raw.px[static_cast<size_t>(i)] / 255.0;
            img.data[i * 3 + 0] = v;
            img.data[i * 3 + 1] = v;
            img.data[i * 3 + 2] = v;
        }
    } else {
        fail("'", path, "' has ", raw.c, " channels, expected ", expected_channels);
    }
    return img;
}

void save_png(const std::string& path, const Image& img) {
    MASKOFF_CHECK(img.c == 1 || img.c == 3 || img.c == 4, "save_png: unsupported channel count ",
                  img.c);
    MASKOFF_CHECK(img.h > 0 && img.w > 0, "save_png: empty image");
    FilePtr f = open_file(path, "wb");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    MASKOFF_CHECK(png, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("libpng init failed");
    }
    std::vector<uint8_t> px(static_cast<size_t>(img.h * img.w * img.c));
    std::vector<png_bytep> rows(static_cast<size_t>(img.h));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("cannot write PNG '", path, "'");
    }
    png_init_io(png, f.get());
    const int color = img.c == 1   ? PNG_COLOR_TYPE_GRAY
                      : img.c == 3 ? PNG_COLOR_TYPE_RGB
                                   : PNG_COLOR_TYPE_RGBA;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    for (size_t i = 0; i < px.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        px[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    for (int64_t y = 0; y < img.h; ++y) rows[static_cast<size_t>(y)] = px.data() + y * img.w * img.c;
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
}

Mask load_mask_png(const std::string& path) {
    Image img = load_image(path, 1);
    Mask m(img.h, img.w);
    for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = img.data[i] >= 0.5 ? 1 : 0;
    return m;
}

void save_mask_png(const std::string& path, const Mask& mask) {
    Image img(mask.h, mask.w, 1);
    for (size_t i = 0; i < mask.data.size(); ++i) img.data[i] = mask.data[i] ? 1.0 : 0.0;
    save_png(path, img);
}

// --- range & compositing -----------------------------------------------------------

namespace {

void check_range(const Image& img, double lo, double hi, const char* what) {
    constexpr double tol = 1e-6;
    for (double v : img.data)
        MASKOFF_CHECK(v >= lo - tol && v <= hi + tol, what, ": value ", v, " outside [", lo, ",",
                      hi, "]");
}

}  // namespace

Image to_model_range(const Image& img) {
    check_range(img, 0.0, 1.0, "to_model_range");
    Image out = img;
    for (double& v : out.data) v = 2.0 * v - 1.0;
    return out;
}

Image from_model_range(const Image& img) {
    check_range(img, -1.0, 1.0, "from_model_range");
    Image out = img;
    for (double& v : out.data) v = (v + 1.0) / 2.0;
    return out;
}

Image composite(const Image& inp, const Mask& mask, const Image& raw_output) {
    MASKOFF_CHECK(inp.h == mask.h && inp.w == mask.w, "composite: mask size ", mask.h, "x", mask.w,
                  " vs image ", inp.h, "x", inp.w);
    MASKOFF_CHECK(inp.h == raw_output.h && inp.w == raw_output.w && inp.c == raw_output.c,
                  "composite: image shapes differ");
    Image out = inp;
    for (int64_t y = 0; y < inp.h; ++y)
        for (int64_t x = 0; x < inp.w; ++x)
            if (mask.at(y, x))
                for (int64_t ch = 0; ch < inp.c; ++ch) out.at(y, x, ch) = raw_output.at(y, x, ch);
    return out;
}

// --- geometry ---------------------------------------------------------------------

Image resize_bilinear(const Image& img, int64_t out_h, int64_t out_w) {
    MASKOFF_CHECK(out_h >= 1 && out_w >= 1, "resize_bilinear: bad target size");
    Image out(out_h, out_w, img.c);
    const double sy = static_cast<double>(img.h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(img.w) / static_cast<double>(out_w);
    for (int64_t y = 0; y < out_h; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.h - 1));
        const int64_t y0 = static_cast<int64_t>(std::floor(fy));
        const int64_t y1 = std::min(y0 + 1, img.h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (int64_t x = 0; x < out_w; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.w - 1));
            const int64_t x0 = static_cast<int64_t>(std::floor(fx));
            const int64_t x1 = std::min(x0 + 1, img.w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (int64_t ch = 0; ch < img.c; ++ch)
                out.at(y, x, ch) = (1 - wy) * ((1 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch)) +
                                   wy * ((1 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch));
        }
    }
    return out;
}

Image center_crop_square(const Image& img) {
    const int64_t side = std::min(img.h, img.w);
    const int64_t y0 = (img.h - side) / 2;
    const int64_t x0 = (img.w - side) / 2;
    Image out(side, side, img.c);
    for (int64_t y = 0; y < side; ++y)
        for (int64_t x = 0; x < side; ++x)
            for (int64_t ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(y0 + y, x0 + x, ch);
    return out;
}

// --- tensor bridging -----------------------------------------------------------------

Tensor image_to_chw(const Image& img) { return images_to_chw({img}); }

Tensor images_to_chw(const std::vector<Image>& batch) {
    MASKOFF_CHECK(!batch.empty(), "images_to_chw: empty batch");
    const int64_t h = batch[0].h, w = batch[0].w, c = batch[0].c;
    Tensor t = Tensor::zeros({static_cast<int64_t>(batch.size()), c, h, w});
    for (size_t n = 0; n < batch.size(); ++n) {
        const Image& img = batch[n];
        MASKOFF_CHECK(img.h == h && img.w == w && img.c == c, "images_to_chw: ragged batch");
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x)
                    t.data()[((static_cast<int64_t>(n) * c + ch) * h + y) * w + x] = img.at(y, x, ch);
    }
    return t;
}

Image chw_to_image(const Tensor& t, int64_t n) {
    MASKOFF_CHECK(t.ndim() == 4 && n >= 0 && n < t.dim(0), "chw_to_image: bad tensor or index");
    const int64_t c = t.dim(1), h = t.dim(2), w = t.dim(3);
    Image img(h, w, c);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) img.at(y, x, ch) = t.data()[((n * c + ch) * h + y) * w + x];
    return img;
}

Tensor mask_to_chw(const Mask& mask) { return masks_to_chw({mask}); }

Tensor masks_to_chw(const std::vector<Mask>& batch) {
    MASKOFF_CHECK(!batch.empty(), "masks_to_chw: empty batch");
    const int64_t h = batch[0].h, w = batch[0].w;
    Tensor t = Tensor::zeros({static_cast<int64_t>(batch.size()), 1, h, w});
    for (size_t n = 0; n < batch.size(); ++n) {
        const Mask& m = batch[n];
        MASKOFF_CHECK(m.h == h && m.w == w, "masks_to_chw: ragged batch");
        for (int64_t i = 0; i < h * w; ++i)
            t.data()[static_cast<int64_t>(n) * h * w + i] = m.data[static_cast<size_t>(i)] ? 1.0 : 0.0;
    }
    return t;
}

}  // namespace maskoff
