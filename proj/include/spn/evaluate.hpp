#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "spn/localization.hpp"
#include "spn/network.hpp"
#include "spn/synthdata.hpp"
#include "spn/train.hpp"

namespace spn {

inline std::vector<LabeledImage> to_labeled_images(const Dataset& ds) {
    std::vector<LabeledImage> out;
    out.reserve(ds.samples.size());
    for (const auto& s : ds.samples) out.push_back({s.to_input(), s.labels});
    return out;
}

struct EvalOptions {
    bool classification = true;
    bool pointing = true;
    bool corloc = true;
    bool energy = true;
    int tolerance_px = 3;
    double corloc_iou = 0.5;
};

struct EvalReport {
    std::size_t images = 0;
    // classification
    std::size_t correct = 0;
    double accuracy = 0.0;
    // pointing (per-class tallies plus the center baseline)
    PointingTally pointing;
    PointingTally center;
    // bounding boxes
    CorLocReport corloc;
    // object energy of the upscaled proposal map
    double mean_object_energy = 0.0;
};

// Runs the network over every sample once and feeds all requested metrics
// from the same forward pass. Pointing, CorLoc and energy follow the cued
// ground-truth labels; images without a box for a cued class skip that class.
inline EvalReport evaluate(const Network& net, const Dataset& ds, const EvalOptions& opt = {}) {
    EvalReport report;
    report.pointing = PointingTally(net.spec.class_count);
    report.center = PointingTally(net.spec.class_count);
    report.images = ds.samples.size();

    std::vector<CorLocSample> corloc_samples;
    double energy_sum = 0.0;

    for (const auto& sample : ds.samples) {
        const Tensor3 input = sample.to_input();
        const ForwardCache cache = spn_forward(net, input);

        if (opt.classification)
            report.correct += detail::prediction_correct(cache.logits, sample.labels, net.spec.loss_mode);

        if ((opt.pointing || opt.corloc) && cache.sp_active) {
            for (int cls : sample.labels) {
                std::vector<Box> gt;
                for (const Box& b : sample.boxes)
                    if (b.class_id == cls) gt.push_back(b);
                if (gt.empty()) continue; // skipped for that class

                const ResponseMap r =
                    response_map(cache.sp_input, cache.proposal.data, net.fc.weights, cls);
                if (opt.pointing) {
                    report.pointing.add(cls, pointing_hit(r, sample.height, sample.width, gt, opt.tolerance_px));
                    const int cx = static_cast<int>(sample.width) / 2;
                    const int cy = static_cast<int>(sample.height) / 2;
                    report.center.add(cls, point_in_expanded_boxes(cx, cy, gt, opt.tolerance_px));
                }
                if (opt.corloc) {
                    CorLocSample cs;
                    cs.class_id = cls;
                    cs.predicted = extract_bbox(r, sample.height, sample.width);
                    cs.gt_boxes = gt;
                    corloc_samples.push_back(std::move(cs));
                }
            }
        }

        if (opt.energy && cache.sp_active && !sample.boxes.empty()) {
            const Grid energy = upscale_map(cache.proposal.data, sample.height, sample.width);
            energy_sum += object_energy(energy, sample.boxes);
        }
    }

    if (opt.classification && !ds.samples.empty())
        report.accuracy = static_cast<double>(report.correct) / static_cast<double>(ds.samples.size());
    if (opt.corloc) report.corloc = corloc(corloc_samples, net.spec.class_count, opt.corloc_iou);
    if (opt.energy && !ds.samples.empty())
        report.mean_object_energy = energy_sum / static_cast<double>(ds.samples.size());
    return report;
}

// Line-oriented report: one record per class plus a mean record per metric.
inline void print_report(const EvalReport& r, const std::vector<std::string>& class_names,
                         const EvalOptions& opt, std::ostream& os) {
    auto name_of = [&](std::size_t c) {
        return c < class_names.size() ? class_names[c] : std::to_string(c);
    };
    if (opt.classification) {
        os << "cls total=" << r.images << " correct=" << r.correct << " accuracy=" << r.accuracy << "\n";
    }
    if (opt.pointing) {
        for (std::size_t c = 0; c < r.pointing.hits.size(); ++c) {
            const auto n = r.pointing.hits[c] + r.pointing.misses[c];
            if (n == 0) continue;
            os << "pointing class=" << c << " name=" << name_of(c) << " hits=" << r.pointing.hits[c]
               << " misses=" << r.pointing.misses[c] << " acc=" << r.pointing.class_accuracy(c) << "\n";
        }
        os << "pointing mean acc=" << r.pointing.mean_accuracy() << "\n";
        os << "pointing_center mean acc=" << r.center.mean_accuracy() << "\n";
    }
    if (opt.corloc) {
        for (const auto& pc : r.corloc.per_class)
            os << "corloc class=" << pc.class_id << " name=" << name_of(static_cast<std::size_t>(pc.class_id))
               << " positives=" << pc.positives << " correct=" << pc.correct << " rate=" << pc.rate << "\n";
        os << "corloc mean rate=" << r.corloc.mean << "\n";
    }
    if (opt.energy) os << "energy mean value=" << r.mean_object_energy << "\n";
}

} // namespace spn
