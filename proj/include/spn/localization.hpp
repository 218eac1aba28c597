#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "spn/error.hpp"
#include "spn/tensor.hpp"

namespace spn {

// Axis-aligned pixel box, x1/y1 exclusive.
struct Box {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;
    int class_id = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    long long area() const { return static_cast<long long>(width()) * height(); }
    bool valid() const { return x0 < x1 && y0 < y1; }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

    bool operator==(const Box&) const = default;
};

// Class-specific localization map R_c: the classifier-weighted sum of the
// coupled last-conv feature maps. Values may be negative.
struct ResponseMap {
    Grid data;
    int class_id = 0;
};

// R_c[i,j] = sum_k w[class,k] * U_hat[k,i,j] * M[i,j], with U_hat the
// pre-coupling last-conv maps and M the proposal map cached at forward time.
inline ResponseMap response_map(const Tensor3& u_hat, const Grid& m, const Matrix& fc_weights,
                                int class_id) {
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= fc_weights.rows)
        throw InputError("response_map: class out of range");
    if (fc_weights.cols != u_hat.channels) throw InputError("response_map: weight/channel mismatch");
    if (m.rows != u_hat.height || m.cols != u_hat.width)
        throw InputError("response_map: proposal map shape mismatch");

    ResponseMap r;
    r.class_id = class_id;
    r.data = Grid(u_hat.height, u_hat.width, 0.0);
    const std::size_t hw = u_hat.height * u_hat.width;
    const double* w = &fc_weights.v[static_cast<std::size_t>(class_id) * fc_weights.cols];
    for (std::size_t k = 0; k < u_hat.channels; ++k) {
        const double wk = w[k];
        const double* src = &u_hat.v[k * hw];
        for (std::size_t p = 0; p < hw; ++p) r.data.v[p] += wk * src[p] * m.v[p];
    }
    return r;
}

// Corner-aligned bilinear upscaling. Interpolation is a convex combination,
// so the output stays within the input's min/max bounds.
inline Grid upscale_map(const Grid& in, std::size_t height, std::size_t width) {
    if (in.rows < 1 || in.cols < 1) throw InputError("upscale_map: empty input");
    if (height < in.rows || width < in.cols)
        throw ConfigError("upscale_map: target smaller than source");
    Grid out(height, width);
    const double sy = height > 1 ? static_cast<double>(in.rows - 1) / static_cast<double>(height - 1) : 0.0;
    const double sx = width > 1 ? static_cast<double>(in.cols - 1) / static_cast<double>(width - 1) : 0.0;
    for (std::size_t r = 0; r < height; ++r) {
        const double fy = static_cast<double>(r) * sy;
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, in.rows - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t c = 0; c < width; ++c) {
            const double fx = static_cast<double>(c) * sx;
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, in.cols - 1);
            const double tx = fx - static_cast<double>(x0);
            out(r, c) = (1.0 - ty) * ((1.0 - tx) * in(y0, x0) + tx * in(y0, x1)) +
                        ty * ((1.0 - tx) * in(y1, x0) + tx * in(y1, x1));
        }
    }
    return out;
}

// Fraction of the normalized energy mass falling inside the union of the
// ground-truth boxes; overlapping boxes count each pixel once. An all-zero
// map carries no energy anywhere and scores 0.
inline double object_energy(const Grid& energy_map, const std::vector<Box>& gt_boxes) {
    double total = 0.0;
    for (double x : energy_map.v) {
        if (x < 0.0) throw InputError("object_energy: energy map must be non-negative");
        total += x;
    }
    if (total <= 0.0) return 0.0;

    double inside = 0.0;
    for (std::size_t r = 0; r < energy_map.rows; ++r) {
        for (std::size_t c = 0; c < energy_map.cols; ++c) {
            for (const Box& b : gt_boxes) {
                if (b.contains(static_cast<int>(c), static_cast<int>(r))) {
                    inside += energy_map(r, c);
                    break;
                }
            }
        }
    }
    return inside / total;
}

// Energy map for box-proposal methods: each pixel accumulates the scores of
// every proposal box covering it.
inline Grid energy_from_scored_boxes(const std::vector<std::pair<Box, double>>& scored,
                                     std::size_t height, std::size_t width) {
    Grid out(height, width, 0.0);
    for (const auto& [box, score] : scored) {
        const int y_lo = std::max(box.y0, 0), y_hi = std::min(box.y1, static_cast<int>(height));
        const int x_lo = std::max(box.x0, 0), x_hi = std::min(box.x1, static_cast<int>(width));
        for (int y = y_lo; y < y_hi; ++y)
            for (int x = x_lo; x < x_hi; ++x) out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) += score;
    }
    return out;
}

// Ties resolve to the first position in row-major order.
inline std::pair<std::size_t, std::size_t> argmax_rowmajor(const Grid& g) {
    if (g.size() == 0) throw InputError("argmax_rowmajor: empty map");
    std::size_t best = 0;
    for (std::size_t i = 1; i < g.v.size(); ++i)
        if (g.v[i] > g.v[best]) best = i;
    return {best / g.cols, best % g.cols};
}

// Containment test against boxes expanded by the tolerance on all four
// sides; the expansion is inclusive, so a point exactly tolerance pixels
// outside an edge still counts.
inline bool point_in_expanded_boxes(int x, int y, const std::vector<Box>& boxes, int tolerance_px) {
    for (const Box& b : boxes) {
        if (x >= b.x0 - tolerance_px && x < b.x1 + tolerance_px && y >= b.y0 - tolerance_px &&
            y < b.y1 + tolerance_px)
            return true;
    }
    return false;
}

// Pointing-game hit test: the maximum of the upscaled response must fall in
// one of the cued class's ground-truth boxes, within the pixel tolerance.
inline bool pointing_hit(const ResponseMap& response, std::size_t image_height, std::size_t image_width,
                         const std::vector<Box>& gt_boxes_of_class, int tolerance_px) {
    if (gt_boxes_of_class.empty())
        throw InputError("pointing_hit: no ground-truth boxes for the cued class");
    const Grid up = upscale_map(response.data, image_height, image_width);
    const auto [row, col] = argmax_rowmajor(up);
    return point_in_expanded_boxes(static_cast<int>(col), static_cast<int>(row), gt_boxes_of_class,
                                   tolerance_px);
}

// Per-class hit/miss bookkeeping; Acc = Hits/(Hits+Misses) per class, and
// the reported figure is the mean of per-class accuracies over classes that
// were cued at least once.
struct PointingTally {
    std::vector<std::size_t> hits;
    std::vector<std::size_t> misses;

    explicit PointingTally(std::size_t class_count = 0) : hits(class_count, 0), misses(class_count, 0) {}

    void add(int class_id, bool hit) {
        const auto c = static_cast<std::size_t>(class_id);
        if (c >= hits.size()) {
            hits.resize(c + 1, 0);
            misses.resize(c + 1, 0);
        }
        (hit ? hits[c] : misses[c]) += 1;
    }

    double class_accuracy(std::size_t c) const {
        const std::size_t n = hits[c] + misses[c];
        return n == 0 ? 0.0 : static_cast<double>(hits[c]) / static_cast<double>(n);
    }

    double mean_accuracy() const {
        double sum = 0.0;
        std::size_t counted = 0;
        for (std::size_t c = 0; c < hits.size(); ++c) {
            if (hits[c] + misses[c] == 0) continue;
            sum += class_accuracy(c);
            ++counted;
        }
        return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
    }
};

// Mean-threshold bounding-box extraction: upscale, keep pixels strictly
// above the map mean, return the tightest box around them. A constant map
// has no foreground and yields the full-image box.
inline Box extract_bbox(const ResponseMap& response, std::size_t image_height, std::size_t image_width) {
    const Grid up = upscale_map(response.data, image_height, image_width);
    double mean = 0.0;
    for (double x : up.v) mean += x;
    mean /= static_cast<double>(up.size());

    int min_x = static_cast<int>(image_width), max_x = -1;
    int min_y = static_cast<int>(image_height), max_y = -1;
    for (std::size_t r = 0; r < up.rows; ++r) {
        for (std::size_t c = 0; c < up.cols; ++c) {
            if (up(r, c) > mean) {
                min_x = std::min(min_x, static_cast<int>(c));
                max_x = std::max(max_x, static_cast<int>(c));
                min_y = std::min(min_y, static_cast<int>(r));
                max_y = std::max(max_y, static_cast<int>(r));
            }
        }
    }
    Box box;
    box.class_id = response.class_id;
    if (max_x < 0) { // constant map
        box.x0 = 0;
        box.y0 = 0;
        box.x1 = static_cast<int>(image_width);
        box.y1 = static_cast<int>(image_height);
    } else {
        box.x0 = min_x;
        box.y0 = min_y;
        box.x1 = max_x + 1;
        box.y1 = max_y + 1;
    }
    return box;
}

inline double iou(const Box& a, const Box& b) {
    const int ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
    const int ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
    const long long iw = std::max(0, ix1 - ix0), ih = std::max(0, iy1 - iy0);
    const long long inter = iw * ih;
    const long long uni = a.area() + b.area() - inter;
    return uni <= 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// One positive image of one class: the predicted box and that class's
// ground-truth boxes.
struct CorLocSample {
    int class_id = 0;
    Box predicted;
    std::vector<Box> gt_boxes;
};

struct CorLocClassRate {
    int class_id = 0;
    std::size_t positives = 0;
    std::size_t correct = 0;
    double rate = 0.0;
};

struct CorLocReport {
    std::vector<CorLocClassRate> per_class; // classes with at least one positive image
    double mean = 0.0;
};

// Fraction of positive images whose predicted box reaches the IoU threshold
// against at least one ground-truth box; classes with no positive images are
// excluded from the mean.
inline CorLocReport corloc(const std::vector<CorLocSample>& samples, std::size_t class_count,
                           double threshold = 0.5) {
    std::vector<CorLocClassRate> rates(class_count);
    for (std::size_t c = 0; c < class_count; ++c) rates[c].class_id = static_cast<int>(c);
    for (const auto& s : samples) {
        if (s.class_id < 0 || static_cast<std::size_t>(s.class_id) >= class_count)
            throw InputError("corloc: class out of range");
        auto& r = rates[static_cast<std::size_t>(s.class_id)];
        ++r.positives;
        for (const Box& gt : s.gt_boxes) {
            if (iou(s.predicted, gt) >= threshold) {
                ++r.correct;
                break;
            }
        }
    }
    CorLocReport report;
    double sum = 0.0;
    for (auto& r : rates) {
        if (r.positives == 0) continue;
        r.rate = static_cast<double>(r.correct) / static_cast<double>(r.positives);
        sum += r.rate;
        report.per_class.push_back(r);
    }
    report.mean = report.per_class.empty() ? 0.0 : sum / static_cast<double>(report.per_class.size());
    return report;
}

} // namespace spn
