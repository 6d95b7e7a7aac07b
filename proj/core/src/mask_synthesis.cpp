#include "maskoff/mask_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace maskoff::synth {

double dist(Point p, Point q) { return std::hypot(p.x - q.x, p.y - q.y); }

Affine Affine::inverse() const {
    const double det = a * d - b * c;
    MASKOFF_CHECK(std::abs(det) > 1e-12, "affine transform is singular");
    Affine inv;
    inv.a = d / det;
    inv.b = -b / det;
    inv.c = -c / det;
    inv.d = a / det;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
}

bool FaceLandmarks::within(int64_t h, int64_t w) const {
    auto ok = [&](Point p) { return p.x >= 0 && p.x < w && p.y >= 0 && p.y < h; };
    for (const Point& p : nose_bridge)
        if (!ok(p)) return false;
    for (const Point& p : chin)
        if (!ok(p)) return false;
    return true;
}

Affine fit_mask_transform(const FaceLandmarks& lm, const MaskTemplate& tpl) {
    const Point nose = lm.nose_top();
    const double axis_x = lm.nose_bridge[3].x - lm.nose_bridge[0].x;
    const double axis_y = lm.nose_bridge[3].y - lm.nose_bridge[0].y;
    MASKOFF_CHECK(std::hypot(axis_x, axis_y) > 1e-9, "degenerate nose bridge");
    // rotation that maps the template's downward axis onto the nose axis
    const double theta = std::atan2(-axis_x, axis_y);

    const double face_h = dist(nose, lm.chin_apex());
    const double face_w = dist(lm.jaw_left(), lm.jaw_right());
    const double tpl_h = dist(tpl.anchor_top, tpl.anchor_bottom);
    const double tpl_w = dist(tpl.anchor_left, tpl.anchor_right);
    MASKOFF_CHECK(face_h > 1e-9 && face_w > 1e-9, "degenerate landmark geometry");
    MASKOFF_CHECK(tpl_h > 1e-9 && tpl_w > 1e-9, "degenerate template anchors in '", tpl.id, "'");
    const double sy = face_h / tpl_h;
    const double sx = face_w / tpl_w;

    // T(p) = R(theta) * diag(sx, sy) * (p - anchor_top) + nose_top
    const double ct = std::cos(theta), st = std::sin(theta);
    Affine T;
    T.a = ct * sx;
    T.b = -st * sy;
    T.c = st * sx;
    T.d = ct * sy;
    T.tx = nose.x - (T.a * tpl.anchor_top.x + T.b * tpl.anchor_top.y);
    T.ty = nose.y - (T.c * tpl.anchor_top.x + T.d * tpl.anchor_top.y);
    return T;
}

namespace {

// Bilinear sample of one channel; zero outside the template bounds.
double sample(const Image& img, double x, double y, int64_t ch) {
    if (x < 0 || y < 0 || x > static_cast<double>(img.w - 1) || y > static_cast<double>(img.h - 1))
        return 0.0;
    const int64_t x0 = static_cast<int64_t>(std::floor(x));
    const int64_t y0 = static_cast<int64_t>(std::floor(y));
    const int64_t x1 = std::min(x0 + 1, img.w - 1);
    const int64_t y1 = std::min(y0 + 1, img.h - 1);
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);
    return (1 - fy) * ((1 - fx) * img.at(y0, x0, ch) + fx * img.at(y0, x1, ch)) +
           fy * ((1 - fx) * img.at(y1, x0, ch) + fx * img.at(y1, x1, ch));
}

}  // namespace

std::pair<Image, Mask> overlay_mask(const Image& face, const MaskTemplate& tpl, const Affine& T) {
    MASKOFF_CHECK(face.c == 3, "overlay_mask: face must be RGB");
    MASKOFF_CHECK(tpl.rgba.c == 4, "overlay_mask: template '", tpl.id, "' must be RGBA");
    const Affine inv = T.inverse();
    Image masked = face;
    Mask mask(face.h, face.w);
    for (int64_t y = 0; y < face.h; ++y)
        for (int64_t x = 0; x < face.w; ++x) {
            const Point q = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            const double alpha = sample(tpl.rgba, q.x, q.y, 3);
            if (alpha >= 0.5) {
                mask.at(y, x) = 1;
                for (int64_t ch = 0; ch < 3; ++ch) masked.at(y, x, ch) = sample(tpl.rgba, q.x, q.y, ch);
            }
        }
    MASKOFF_CHECK(mask.count() > 0, "mask out of frame for template '", tpl.id, "'");
    return {std::move(masked), std::move(mask)};
}

// --- procedural templates ------------------------------------------------------------

namespace {

using Poly = std::vector<Point>;

bool inside_polygon(const Poly& poly, double x, double y) {
    bool in = false;
    for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Point& pi = poly[i];
        const Point& pj = poly[j];
        if ((pi.y > y) != (pj.y > y) && x < (pj.x - pi.x) * (y - pi.y) / (pj.y - pi.y) + pi.x)
            in = !in;
    }
    return in;
}

void fill_polygon(Image& rgba, const Poly& poly, double r, double g, double b) {
    for (int64_t y = 0; y < rgba.h; ++y)
        for (int64_t x = 0; x < rgba.w; ++x)
            if (inside_polygon(poly, static_cast<double>(x), static_cast<double>(y))) {
                rgba.at(y, x, 0) = r;
                rgba.at(y, x, 1) = g;
                rgba.at(y, x, 2) = b;
                rgba.at(y, x, 3) = 1.0;
            }
}

void fill_ellipse(Image& rgba, Point center, double rx, double ry, double r, double g, double b,
                  bool set_alpha = true) {
    for (int64_t y = 0; y < rgba.h; ++y)
        for (int64_t x = 0; x < rgba.w; ++x) {
            const double dx = (static_cast<double>(x) - center.x) / rx;
            const double dy = (static_cast<double>(y) - center.y) / ry;
            if (dx * dx + dy * dy <= 1.0) {
                rgba.at(y, x, 0) = r;
                rgba.at(y, x, 1) = g;
                rgba.at(y, x, 2) = b;
                if (set_alpha) rgba.at(y, x, 3) = 1.0;
            }
        }
}

void tint_band(Image& rgba, int64_t y0, int64_t y1, double fr, double fg, double fb) {
    for (int64_t y = std::max<int64_t>(0, y0); y < std::min(rgba.h, y1); ++y)
        for (int64_t x = 0; x < rgba.w; ++x)
            if (rgba.at(y, x, 3) >= 0.5) {
                rgba.at(y, x, 0) *= fr;
                rgba.at(y, x, 1) *= fg;
                rgba.at(y, x, 2) *= fb;
            }
}

MaskTemplate make_template(std::string id) {
    MaskTemplate t;
    t.id = std::move(id);
    t.rgba = Image(120, 160, 4, 0.0);
    return t;
}

}  // namespace

std::vector<MaskTemplate> builtin_templates() {
    std::vector<MaskTemplate> out;

    {  // pleated light-blue surgical mask
        MaskTemplate t = make_template("surgical_blue");
        fill_polygon(t.rgba, {{18, 30}, {142, 30}, {150, 80}, {80, 112}, {10, 80}}, 0.55, 0.74, 0.92);
        tint_band(t.rgba, 48, 52, 0.85, 0.85, 0.9);
        tint_band(t.rgba, 66, 70, 0.85, 0.85, 0.9);
        tint_band(t.rgba, 84, 88, 0.85, 0.85, 0.9);
        t.anchor_top = {80, 30};
        t.anchor_bottom = {80, 112};
        t.anchor_left = {10, 80};
        t.anchor_right = {150, 80};
        out.push_back(std::move(t));
    }
    {  // darker surgical variant
        MaskTemplate t = make_template("surgical_green");
        fill_polygon(t.rgba, {{20, 28}, {140, 28}, {148, 78}, {80, 110}, {12, 78}}, 0.45, 0.62, 0.52);
        tint_band(t.rgba, 46, 50, 0.8, 0.85, 0.8);
        tint_band(t.rgba, 64, 68, 0.8, 0.85, 0.8);
        t.anchor_top = {80, 28};
        t.anchor_bottom = {80, 110};
        t.anchor_left = {12, 78};
        t.anchor_right = {148, 78};
        out.push_back(std::move(t));
    }
    {  // plain cloth mask
        MaskTemplate t = make_template("cloth_olive");
        fill_polygon(t.rgba, {{14, 26}, {146, 26}, {136, 92}, {80, 114}, {24, 92}}, 0.36, 0.42, 0.3);
        t.anchor_top = {80, 26};
        t.anchor_bottom = {80, 114};
        t.anchor_left = {14, 26};
        t.anchor_right = {146, 26};
        out.push_back(std::move(t));
    }
    {  // N95-type cup with valve
        MaskTemplate t = make_template("n95_cup");
        fill_ellipse(t.rgba, {80, 62}, 66, 48, 0.92, 0.91, 0.88);
        fill_ellipse(t.rgba, {80, 66}, 10, 10, 0.65, 0.65, 0.68, false);
        t.anchor_top = {80, 14};
        t.anchor_bottom = {80, 110};
        t.anchor_left = {14, 62};
        t.anchor_right = {146, 62};
        out.push_back(std::move(t));
    }
    {  // striped scarf wrap
        MaskTemplate t = make_template("scarf_red");
        fill_polygon(t.rgba, {{6, 34}, {154, 34}, {120, 100}, {80, 118}, {40, 100}}, 0.74, 0.2, 0.24);
        tint_band(t.rgba, 46, 56, 0.7, 0.7, 0.7);
        tint_band(t.rgba, 70, 80, 0.7, 0.7, 0.7);
        tint_band(t.rgba, 94, 104, 0.7, 0.7, 0.7);
        t.anchor_top = {80, 34};
        t.anchor_bottom = {80, 118};
        t.anchor_left = {6, 34};
        t.anchor_right = {154, 34};
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<MaskTemplate> load_templates(const std::string& dir) {
    const fs::path anchors = fs::path(dir) / "anchors.txt";
    MASKOFF_CHECK(fs::exists(anchors), "template registry '", dir, "' has no anchors.txt");
    std::ifstream in(anchors);
    MASKOFF_CHECK(in.good(), "cannot read '", anchors.string(), "'");

    std::vector<MaskTemplate> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string file;
        MaskTemplate t;
        if (!(ls >> file >> t.anchor_top.x >> t.anchor_top.y >> t.anchor_bottom.x >>
              t.anchor_bottom.y >> t.anchor_left.x >> t.anchor_left.y >> t.anchor_right.x >>
              t.anchor_right.y))
            fail("bad anchors.txt line ", lineno, " in '", dir, "'");
        t.id = fs::path(file).stem().string();
        t.rgba = load_image((fs::path(dir) / file).string(), 4);
        auto in_bounds = [&](Point p) {
            return p.x >= 0 && p.x < static_cast<double>(t.rgba.w) && p.y >= 0 &&
                   p.y < static_cast<double>(t.rgba.h);
        };
        MASKOFF_CHECK(in_bounds(t.anchor_top) && in_bounds(t.anchor_bottom) &&
                          in_bounds(t.anchor_left) && in_bounds(t.anchor_right),
                      "anchors outside template '", t.id, "'");
        out.push_back(std::move(t));
    }
    MASKOFF_CHECK(out.size() == 5, "template registry '", dir, "' holds ", out.size(),
                  " templates, expected 5");
    return out;
}

void write_templates(const std::string& dir, const std::vector<MaskTemplate>& templates) {
    fs::create_directories(dir);
    std::ofstream anchors(fs::path(dir) / "anchors.txt");
    MASKOFF_CHECK(anchors.good(), "cannot write anchors.txt in '", dir, "'");
    for (const MaskTemplate& t : templates) {
        const std::string file = t.id + ".png";
        save_png((fs::path(dir) / file).string(), t.rgba);
        anchors << file << ' ' << t.anchor_top.x << ' ' << t.anchor_top.y << ' ' << t.anchor_bottom.x
                << ' ' << t.anchor_bottom.y << ' ' << t.anchor_left.x << ' ' << t.anchor_left.y << ' '
                << t.anchor_right.x << ' ' << t.anchor_right.y << '\n';
    }
}

// --- dataset builder ----------------------------------------------------------------

namespace {

bool is_face_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

std::vector<DatasetRecord> build_dataset(const std::string& faces_dir,
                                         const std::vector<MaskTemplate>& templates,
                                         const std::string& out_dir, uint64_t seed,
                                         const LandmarkProvider& provider,
                                         const BuildOptions& options) {
    MASKOFF_CHECK(!templates.empty(), "no mask templates");
    MASKOFF_CHECK(fs::is_directory(faces_dir), "faces directory '", faces_dir, "' not found");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    MASKOFF_CHECK(fs::is_directory(out_dir), "cannot create output directory '", out_dir, "'");

    std::vector<fs::path> faces;
    for (const auto& e : fs::directory_iterator(faces_dir))
        if (e.is_regular_file() && is_face_file(e.path())) faces.push_back(e.path());
    std::sort(faces.begin(), faces.end());

    std::vector<DatasetRecord> records;
    records.reserve(faces.size());
    for (size_t i = 0; i < faces.size(); ++i) {
        const fs::path& src = faces[i];
        DatasetRecord rec;
        rec.status = "not_found";
        try {
            Image face = load_image(src.string(), 3);
            face = center_crop_square(face);
            if (face.h != options.out_size)
                face = resize_bilinear(face, options.out_size, options.out_size);

            const auto lm = provider(src.string(), face);
            if (lm && lm->within(face.h, face.w)) {
                // per-face keyed stream so parallel builds stay reproducible
                Rng rng = Rng::keyed(seed, static_cast<uint64_t>(i));
                const MaskTemplate& tpl =
                    templates[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(templates.size())))];
                auto [masked, mask] = overlay_mask(face, tpl, fit_mask_transform(*lm, tpl));

                const std::string stem = src.stem().string();
                rec.gt = stem + "_gt.png";
                rec.masked = stem + "_masked.png";
                rec.mask = stem + "_mask.png";
                rec.template_id = tpl.id;
                rec.status = "found";
                save_png((fs::path(out_dir) / rec.gt).string(), face);
                save_png((fs::path(out_dir) / rec.masked).string(), masked);
                save_mask_png((fs::path(out_dir) / rec.mask).string(), mask);
            }
        } catch (const Error& e) {
            std::cerr << "skipping " << src.string() << ": " << e.what() << "\n";
            rec = DatasetRecord{};
            rec.status = "not_found";
        }
        records.push_back(std::move(rec));
    }
    write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), records);
    return records;
}

void write_manifest(const std::string& path, const std::vector<DatasetRecord>& records) {
    std::ofstream out(path);
    MASKOFF_CHECK(out.good(), "cannot write manifest '", path, "'");
    for (const DatasetRecord& r : records) {
        json j;
        j["gt"] = r.gt;
        j["masked"] = r.masked;
        j["mask"] = r.mask;
        j["template_id"] = r.template_id;
        j["status"] = r.status;
        out << j.dump() << '\n';
    }
}

std::vector<DatasetRecord> read_manifest(const std::string& path) {
    std::ifstream in(path);
    MASKOFF_CHECK(in.good(), "cannot read manifest '", path, "'");
    std::vector<DatasetRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail("manifest '", path, "' line ", lineno, ": ", e.what());
        }
        DatasetRecord r;
        r.gt = j.value("gt", "");
        r.masked = j.value("masked", "");
        r.mask = j.value("mask", "");
        r.template_id = j.value("template_id", "");
        r.status = j.value("status", "");
        MASKOFF_CHECK(r.status == "found" || r.status == "not_found", "manifest '", path, "' line ",
                      lineno, ": bad status '", r.status, "'");
        records.push_back(std::move(r));
    }
    return records;
}

Triple load_triple(const std::string& manifest_path, const DatasetRecord& rec) {
    MASKOFF_CHECK(rec.status == "found", "record has no files (status not_found)");
    const fs::path dir = fs::path(manifest_path).parent_path();
    Triple t;
    t.gt = load_image((dir / rec.gt).string(), 3);
    t.masked = load_image((dir / rec.masked).string(), 3);
    t.mask = load_mask_png((dir / rec.mask).string());
    MASKOFF_CHECK(t.gt.h == t.masked.h && t.gt.w == t.masked.w && t.gt.h == t.mask.h &&
                      t.gt.w == t.mask.w,
                  "triple '", rec.gt, "' has inconsistent sizes");
    return t;
}

LandmarkProvider landmark_file_provider(const std::string& jsonl_path) {
    std::ifstream in(jsonl_path);
    MASKOFF_CHECK(in.good(), "cannot read landmark file '", jsonl_path, "'");
    auto table = std::make_shared<std::map<std::string, std::optional<FaceLandmarks>>>();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail("landmark file '", jsonl_path, "' line ", lineno, ": ", e.what());
        }
        const std::string file = j.at("file").get<std::string>();
        if (j.value("status", "found") == "not_found") {
            (*table)[file] = std::nullopt;
            continue;
        }
        FaceLandmarks lm;
        const auto& nose = j.at("nose_bridge");
        const auto& chin = j.at("chin");
        MASKOFF_CHECK(nose.size() == 4 && chin.size() == 17, "landmark file '", jsonl_path,
                      "' line ", lineno, ": need 4 nose + 17 chin points");
        for (size_t k = 0; k < 4; ++k)
            lm.nose_bridge[k] = {nose[k][0].get<double>(), nose[k][1].get<double>()};
        for (size_t k = 0; k < 17; ++k) lm.chin[k] = {chin[k][0].get<double>(), chin[k][1].get<double>()};
        (*table)[file] = lm;
    }
    return [table](const std::string& path, const Image&) -> std::optional<FaceLandmarks> {
        const auto it = table->find(fs::path(path).filename().string());
        if (it == table->end()) return std::nullopt;
        return it->second;
    };
}

void write_landmark_file(const std::string& path,
                         const std::vector<std::pair<std::string, FaceLandmarks>>& entries) {
    std::ofstream out(path);
    MASKOFF_CHECK(out.good(), "cannot write landmark file '", path, "'");
    for (const auto& [file, lm] : entries) {
        json j;
        j["file"] = file;
        json nose = json::array(), chin = json::array();
        for (const Point& p : lm.nose_bridge) nose.push_back({p.x, p.y});
        for (const Point& p : lm.chin) chin.push_back({p.x, p.y});
        j["nose_bridge"] = nose;
        j["chin"] = chin;
        out << j.dump() << '\n';
    }
}

}  // namespace maskoff::synth
