#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "spn/error.hpp"
#include "spn/localization.hpp"
#include "spn/png_io.hpp"
#include "spn/rng.hpp"
#include "spn/tensor.hpp"

namespace spn {

// Shapes-on-clutter generator: one class-defining shape per image (two in
// multi-label mode), image-level labels for training, tight ground-truth
// boxes for evaluation only. Class-correlated distractor textures are placed
// outside the shape box so a localizer can be fooled by co-occurrence while
// a classifier cannot be hurt by it.
struct SynthConfig {
    std::size_t image_size = 32;
    std::size_t class_count = 3; // disc, square, triangle
    std::size_t train_count = 600;
    std::size_t test_count = 150;
    double clutter_level = 0.5;
    double co_occur_prob = 0.5;
    bool multi_label = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (image_size < 16) throw ConfigError("synth: image_size must be >= 16");
        if (class_count < 1 || class_count > 3) throw ConfigError("synth: class_count must be 1..3");
        if (train_count < 1 || test_count < 1) throw ConfigError("synth: counts must be >= 1");
        if (!(clutter_level >= 0.0 && clutter_level <= 1.0)) throw ConfigError("synth: clutter_level in [0,1]");
        if (!(co_occur_prob >= 0.0 && co_occur_prob <= 1.0)) throw ConfigError("synth: co_occur_prob in [0,1]");
        if (multi_label && class_count < 2) throw ConfigError("synth: multi-label needs >= 2 classes");
    }
};

struct AnnotatedSample {
    std::string file;                 // image file name within the dataset dir
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> rgb;    // interleaved, row-major
    std::vector<int> labels;          // sorted unique class ids
    std::vector<Box> boxes;           // evaluation only, never read in training

    // Planar 3xHxW tensor with values k/255.
    Tensor3 to_input() const {
        Tensor3 t(3, height, width);
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    t(c, y, x) = static_cast<double>(rgb[(y * width + x) * 3 + c]) / 255.0;
        return t;
    }
};

struct Dataset {
    std::vector<std::string> class_names;
    std::vector<AnnotatedSample> samples;
};

struct SynthSplits {
    Dataset train;
    Dataset test;
};

namespace detail {

inline const char* kClassNames[3] = {"disc", "square", "triangle"};

struct Canvas {
    std::size_t size;
    std::vector<double> v; // interleaved RGB

    explicit Canvas(std::size_t s) : size(s), v(s * s * 3, 0.0) {}
    double* px(std::size_t y, std::size_t x) { return &v[(y * size + x) * 3]; }
};

inline void fill_rect(Canvas& c, int x0, int y0, int x1, int y1, const double rgb[3], double alpha) {
    for (int y = std::max(0, y0); y < std::min<int>(static_cast<int>(c.size), y1); ++y)
        for (int x = std::max(0, x0); x < std::min<int>(static_cast<int>(c.size), x1); ++x) {
            double* p = c.px(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
            for (int k = 0; k < 3; ++k) p[k] = (1.0 - alpha) * p[k] + alpha * rgb[k];
        }
}

// Rasterizes the class shape with top-left (x0,y0) and nominal size s,
// filled with a class-specific texture grain so object interiors carry
// feature structure everywhere, not only at silhouette edges. Triangles
// point up or down at random. Returns the tight bounds of the painted
// pixels.
inline Box draw_shape(Canvas& c, int cls, int x0, int y0, int s, const double rgb[3], Rng& rng) {
    int min_x = static_cast<int>(c.size), max_x = -1, min_y = static_cast<int>(c.size), max_y = -1;

    // Two-scale brightness texture: a coarse 4 px component keeps every part
    // of the object locally distinct at feature-map resolution, and a fine
    // class-specific grain (1/2/3 px) separates the classes by local texture
    // statistics everywhere, not only at silhouette edges.
    const int grain = cls + 1;
    const int fine_cells = (s + grain - 1) / grain;
    const int coarse_cells = (s + 3) / 4;
    std::vector<double> fine(static_cast<std::size_t>(fine_cells) * fine_cells);
    for (double& t : fine) t = 0.88 + 0.24 * rng.uniform();
    std::vector<double> coarse(static_cast<std::size_t>(coarse_cells) * coarse_cells);
    for (double& t : coarse) t = 0.72 + 0.42 * rng.uniform();
    const bool flipped = cls == 2 && rng.bernoulli(0.5);

    auto paint = [&](int x, int y) {
        const int fy = (y - y0) / grain, fx = (x - x0) / grain;
        const int cy2 = (y - y0) / 4, cx2 = (x - x0) / 4;
        const double scale = fine[static_cast<std::size_t>(fy) * fine_cells + static_cast<std::size_t>(fx)] *
                             coarse[static_cast<std::size_t>(cy2) * coarse_cells + static_cast<std::size_t>(cx2)];
        double* p = c.px(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        for (int k = 0; k < 3; ++k) p[k] = std::min(1.0, rgb[k] * scale);
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
    };

    const double cx = x0 + s / 2.0, cy = y0 + s / 2.0;
    for (int y = y0; y < y0 + s; ++y) {
        for (int x = x0; x < x0 + s; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            bool inside = false;
            switch (cls) {
            case 0: { // disc
                const double r = s / 2.0;
                inside = (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
                break;
            }
            case 1: // square
                inside = true;
                break;
            case 2: { // triangle, apex up or down
                double t = (py - y0) / s; // 0 at apex row, 1 at base
                if (flipped) t = 1.0 - t;
                const double half = t * (s / 2.0);
                inside = std::abs(px - cx) <= half;
                break;
            }
            default:
                throw ConfigError("synth: unknown shape class");
            }
            if (inside) paint(x, y);
        }
    }
    if (max_x < 0) throw InputError("synth: shape rasterized to nothing");
    Box b;
    b.class_id = cls;
    b.x0 = min_x;
    b.y0 = min_y;
    b.x1 = max_x + 1;
    b.y1 = max_y + 1;
    return b;
}

// Class-correlated texture patch: stripes or checker in a class-specific hue.
inline void draw_distractor(Canvas& c, int cls, int x0, int y0, int d) {
    static const double hues[3][3] = {{0.80, 0.30, 0.80}, {0.30, 0.80, 0.80}, {0.90, 0.80, 0.20}};
    for (int y = y0; y < y0 + d; ++y) {
        for (int x = x0; x < x0 + d; ++x) {
            bool on = false;
            switch (cls) {
            case 0: on = ((y - y0) % 2) == 0; break;          // horizontal stripes
            case 1: on = ((x - x0) % 2) == 0; break;          // vertical stripes
            default: on = ((x - x0 + y - y0) % 2) == 0; break; // checkerboard
            }
            const double scale = on ? 0.55 : 0.30;
            double* p = c.px(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
            for (int k = 0; k < 3; ++k) p[k] = hues[cls][k] * scale;
        }
    }
}

inline bool boxes_overlap(const Box& a, const Box& b, int margin) {
    return a.x0 - margin < b.x1 && b.x0 - margin < a.x1 && a.y0 - margin < b.y1 && b.y0 - margin < a.y1;
}

inline AnnotatedSample make_sample(const SynthConfig& cfg, Rng& rng, int primary_class,
                                   std::size_t index, bool small_scale) {
    const int size = static_cast<int>(cfg.image_size);
    Canvas canvas(cfg.image_size);

    // flat background
    static const double base[3] = {0.24, 0.24, 0.28};
    for (std::size_t i = 0; i < canvas.v.size(); ++i) canvas.v[i] = base[i % 3];

    // clutter: pixel noise plus a few dim rectangles
    if (cfg.clutter_level > 0.0) {
        const double amp = 0.25 * cfg.clutter_level;
        for (double& x : canvas.v) x += rng.uniform(-amp, amp);
        const int blobs = static_cast<int>(std::lround(3.0 * cfg.clutter_level));
        for (int b = 0; b < blobs; ++b) {
            const int bw = static_cast<int>(rng.uniform_int(4, std::max(5, size / 3)));
            const int bh = static_cast<int>(rng.uniform_int(4, std::max(5, size / 3)));
            const int bx = static_cast<int>(rng.uniform_int(0, size - bw));
            const int by = static_cast<int>(rng.uniform_int(0, size - bh));
            const double col[3] = {rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3)};
            fill_rect(canvas, bx, by, bx + bw, by + bh, col, 0.4 * cfg.clutter_level);
        }
    }

    // Bimodal object scale: small distant instances keep the localization
    // task hard (the image center rarely hits them), large close-up instances
    // give the box metrics enough pixels to be meaningful. Large shapes are
    // kept a few pixels inside the frame; grid-border cells receive little
    // walk mass, so objects flush against the border lose their far edge.
    const int small_lo = std::max(5, static_cast<int>(std::lround(0.19 * size)));
    const int small_hi = std::max(small_lo, static_cast<int>(std::lround(0.25 * size)));
    const int big_lo = static_cast<int>(std::lround(0.69 * size));
    const int big_hi = static_cast<int>(std::lround(0.78 * size));
    std::vector<int> classes{primary_class};
    if (cfg.multi_label) {
        int other = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.class_count) - 2));
        if (other >= primary_class) ++other;
        classes.push_back(other);
    }

    struct Placement {
        int cls, x0, y0, s;
    };
    std::vector<Placement> placements;
    std::vector<Box> planned;
    for (int cls : classes) {
        // multi-label images hold two shapes, which only fit at the small scale
        const bool small = cfg.multi_label || small_scale;
        const int s = static_cast<int>(small ? rng.uniform_int(small_lo, small_hi)
                                             : rng.uniform_int(big_lo, big_hi));
        const int margin = small ? 1 : std::min(std::max(2, size / 8), (size - s) / 2);
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            const int x0 = static_cast<int>(rng.uniform_int(margin, size - s - margin));
            const int y0 = static_cast<int>(rng.uniform_int(margin, size - s - margin));
            Box planned_box{x0, y0, x0 + s, y0 + s, cls};
            bool clash = false;
            for (const Box& other : planned)
                if (boxes_overlap(planned_box, other, 1)) clash = true;
            if (clash) continue;
            placements.push_back({cls, x0, y0, s});
            planned.push_back(planned_box);
            placed = true;
        }
        if (!placed) throw DataError("synth: could not place shape after bounded retries");
    }

    // Co-occurring distractors, strictly outside every shape box. Around a
    // large shape there may be no free patch at all; the distractor is then
    // skipped rather than failing the whole image.
    std::vector<Placement> distractors;
    for (int cls : classes) {
        if (!rng.bernoulli(cfg.co_occur_prob)) continue;
        const int d = std::max(4, size / 6);
        for (int attempt = 0; attempt < 200; ++attempt) {
            const int x0 = static_cast<int>(rng.uniform_int(0, size - d));
            const int y0 = static_cast<int>(rng.uniform_int(0, size - d));
            Box db{x0, y0, x0 + d, y0 + d, cls};
            bool clash = false;
            for (const Box& other : planned)
                if (boxes_overlap(db, other, 1)) clash = true;
            if (clash) continue;
            distractors.push_back({cls, x0, y0, d});
            planned.push_back(db);
            break;
        }
    }
    for (const auto& p : distractors) draw_distractor(canvas, p.cls, p.x0, p.y0, p.s);

    // shapes drawn last so nothing is painted over them
    AnnotatedSample sample;
    for (const auto& p : placements) {
        double rgb[3];
        for (double& ch : rgb) ch = 0.55 + 0.45 * rng.uniform();
        sample.boxes.push_back(draw_shape(canvas, p.cls, p.x0, p.y0, p.s, rgb, rng));
    }

    std::set<int> labels;
    for (int cls : classes) labels.insert(cls);
    sample.labels.assign(labels.begin(), labels.end());
    sample.height = cfg.image_size;
    sample.width = cfg.image_size;
    sample.rgb.resize(canvas.v.size());
    for (std::size_t i = 0; i < canvas.v.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, canvas.v[i]));
        sample.rgb[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05zu.png", index);
    sample.file = name;
    return sample;
}

inline Dataset make_split(const SynthConfig& cfg, Rng& rng, std::size_t count) {
    Dataset ds;
    for (std::size_t c = 0; c < cfg.class_count; ++c) ds.class_names.push_back(kClassNames[c]);
    for (std::size_t i = 0; i < count; ++i) {
        const int cls = static_cast<int>(i % cfg.class_count); // balanced within +-1
        const bool small_scale = i % 5 < 2; // fixed 40% small instances per split
        ds.samples.push_back(make_sample(cfg, rng, cls, i, small_scale));
    }
    return ds;
}

} // namespace detail

// Deterministic for a fixed seed: the train split consumes the random stream
// first, then the test split.
inline SynthSplits generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SynthSplits splits;
    splits.train = detail::make_split(cfg, rng, cfg.train_count);
    splits.test = detail::make_split(cfg, rng, cfg.test_count);
    return splits;
}

// On-disk layout: <dir>/images/*.png, <dir>/annotations.jsonl (one record
// per image), <dir>/classes.json (index-ordered names).
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir / "images", ec);
    if (ec) throw IoError("save_dataset: cannot create " + (dir / "images").string());

    nlohmann::json classes = ds.class_names;
    {
        std::ofstream f(dir / "classes.json");
        if (!f) throw IoError("save_dataset: cannot write classes.json");
        f << classes.dump() << "\n";
    }

    std::ofstream ann(dir / "annotations.jsonl");
    if (!ann) throw IoError("save_dataset: cannot write annotations.jsonl");
    for (const auto& s : ds.samples) {
        Image8 img;
        img.width = s.width;
        img.height = s.height;
        img.channels = 3;
        img.pixels = s.rgb;
        write_png(dir / "images" / s.file, img);

        nlohmann::json rec;
        rec["file"] = s.file;
        rec["labels"] = s.labels;
        nlohmann::json boxes = nlohmann::json::array();
        for (const Box& b : s.boxes)
            boxes.push_back({{"class", b.class_id}, {"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}});
        rec["boxes"] = boxes;
        ann << rec.dump() << "\n";
    }
    if (!ann) throw IoError("save_dataset: write failed for annotations.jsonl");
}

// Validates invariants on load; iteration order is lexicographic by file
// name. Errors carry the offending file (and line for annotations).
inline Dataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    Dataset ds;

    const fs::path classes_path = dir / "classes.json";
    {
        std::ifstream f(classes_path);
        if (!f) throw DataError("load_dataset: missing " + classes_path.string());
        nlohmann::json j;
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("load_dataset: malformed " + classes_path.string() + ": " + e.what());
        }
        if (!j.is_array() || j.empty()) throw DataError("load_dataset: classes.json must be a non-empty array");
        for (const auto& name : j) ds.class_names.push_back(name.get<std::string>());
    }

    const fs::path ann_path = dir / "annotations.jsonl";
    std::ifstream ann(ann_path);
    if (!ann) throw DataError("load_dataset: missing " + ann_path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ann, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = ann_path.string() + ":" + std::to_string(line_no);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("load_dataset: malformed record at " + where + ": " + e.what());
        }

        AnnotatedSample s;
        try {
            s.file = rec.at("file").get<std::string>();
            s.labels = rec.at("labels").get<std::vector<int>>();
            for (const auto& jb : rec.at("boxes")) {
                Box b;
                b.class_id = jb.at("class").get<int>();
                b.x0 = jb.at("x0").get<int>();
                b.y0 = jb.at("y0").get<int>();
                b.x1 = jb.at("x1").get<int>();
                b.y1 = jb.at("y1").get<int>();
                s.boxes.push_back(b);
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError("load_dataset: bad record at " + where + ": " + e.what());
        }

        const fs::path img_path = dir / "images" / s.file;
        if (!fs::exists(img_path))
            throw DataError("load_dataset: annotation at " + where + " references missing image " +
                            img_path.string());
        Image8 img = read_png(img_path);
        if (img.channels == 1) { // tolerate grayscale input by replication
            std::vector<std::uint8_t> rgb(img.width * img.height * 3);
            for (std::size_t p = 0; p < img.width * img.height; ++p)
                rgb[p * 3] = rgb[p * 3 + 1] = rgb[p * 3 + 2] = img.pixels[p];
            img.pixels = std::move(rgb);
            img.channels = 3;
        }
        s.width = img.width;
        s.height = img.height;
        s.rgb = std::move(img.pixels);

        for (const Box& b : s.boxes) {
            if (!b.valid() || b.x0 < 0 || b.y0 < 0 || b.x1 > static_cast<int>(s.width) ||
                b.y1 > static_cast<int>(s.height))
                throw DataError("load_dataset: out-of-bounds box at " + where);
            if (b.class_id < 0 || static_cast<std::size_t>(b.class_id) >= ds.class_names.size())
                throw DataError("load_dataset: box class out of range at " + where);
        }
        for (int l : s.labels) {
            if (l < 0 || static_cast<std::size_t>(l) >= ds.class_names.size())
                throw DataError("load_dataset: label out of range at " + where);
            bool has_box = false;
            for (const Box& b : s.boxes)
                if (b.class_id == l) has_box = true;
            if (!has_box) throw DataError("load_dataset: label without a box at " + where);
        }
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw DataError("load_dataset: no samples in " + ann_path.string());
    std::sort(ds.samples.begin(), ds.samples.end(),
              [](const AnnotatedSample& a, const AnnotatedSample& b) { return a.file < b.file; });
    return ds;
}

} // namespace spn
