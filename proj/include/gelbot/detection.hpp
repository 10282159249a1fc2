#pragma once

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gelbot/field.hpp"
#include "gelbot/geometry.hpp"

namespace gelbot {

/// Grayscale camera frame. Pixel (col, row) covers the skin-plane square
/// [origin_x + col*mm_per_px, +mm_per_px] x [origin_y + row*mm_per_px, +mm_per_px].
struct Frame {
    std::size_t width = 0;
    std::size_t height = 0;
    double mm_per_px = 1.0;
    double origin_x = 0.0;
    double origin_y = 0.0;
    std::vector<std::uint8_t> intensity;
    std::uint64_t frame_id = 0;
    double sim_time = 0.0;

    bool valid() const { return intensity.size() == width * height && mm_per_px > 0.0; }

    std::uint8_t at(std::size_t col, std::size_t row) const { return intensity[row * width + col]; }

    Rect extent() const {
        return {origin_x, origin_y, origin_x + width * mm_per_px, origin_y + height * mm_per_px};
    }

    /// Skin-plane rect of the pixel block [col0, col1] x [row0, row1], inclusive.
    Rect pixel_box(std::size_t col0, std::size_t row0, std::size_t col1, std::size_t row1) const {
        return {origin_x + col0 * mm_per_px, origin_y + row0 * mm_per_px, origin_x + (col1 + 1) * mm_per_px,
                origin_y + (row1 + 1) * mm_per_px};
    }
};

/// A gel region proposal. `sim_time` is the capture time of the source frame.
struct Detection {
    Rect rect;
    double confidence = 0.0;
    std::uint64_t frame_id = 0;
    double sim_time = 0.0;

    bool well_formed() const { return confidence >= 0.0 && confidence <= 1.0 && rect.valid() && rect.area() > 0.0; }

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Ground-truth gel RoI for one frame; `truth` is empty when the frame shows no gel.
struct FrameLabel {
    std::uint64_t frame_id = 0;
    MaybeRect truth;

    friend bool operator==(const FrameLabel&, const FrameLabel&) = default;
};

/// Highest-confidence detection; ties go to the earliest entry.
inline std::optional<Detection> select_top(std::span<const Detection> dets) {
    if (dets.empty()) return std::nullopt;
    const Detection* best = &dets.front();
    for (const auto& d : dets.subspan(1)) {
        if (d.confidence > best->confidence) best = &d;
    }
    return *best;
}

struct ThresholdParams {
    /// Pixels strictly brighter than this are foreground.
    int threshold = 128;
    /// Blobs with fewer pixels are dropped.
    std::size_t min_area = 6;
};

/// Classical gel detector: binarize, 4-connected components, bounding boxes in skin-plane mm.
/// Confidence is the normalized mean excess intensity of the blob. Output is sorted by
/// confidence, descending; equal confidences keep scan order.
inline std::vector<Detection> detect_threshold(const Frame& frame, const ThresholdParams& params) {
    if (!frame.valid()) throw std::invalid_argument("detect_threshold: malformed frame");
    if (params.threshold < 0 || params.threshold > 255)
        throw std::invalid_argument("detect_threshold: threshold outside [0, 255]");

    const std::size_t w = frame.width;
    const std::size_t h = frame.height;
    const auto theta = static_cast<std::uint8_t>(params.threshold);
    std::vector<std::uint8_t> visited(w * h, 0);
    std::vector<std::size_t> stack;
    std::vector<Detection> out;

    for (std::size_t start = 0; start < w * h; ++start) {
        if (visited[start] || frame.intensity[start] <= theta) continue;
        visited[start] = 1;
        stack.assign(1, start);
        std::size_t count = 0;
        std::uint64_t sum = 0;
        std::size_t c0 = w, r0 = h, c1 = 0, r1 = 0;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const std::size_t c = p % w;
            const std::size_t r = p / w;
            ++count;
            sum += frame.intensity[p];
            c0 = std::min(c0, c);
            c1 = std::max(c1, c);
            r0 = std::min(r0, r);
            r1 = std::max(r1, r);
            const auto push = [&](std::size_t q) {
                if (!visited[q] && frame.intensity[q] > theta) {
                    visited[q] = 1;
                    stack.push_back(q);
                }
            };
            if (c > 0) push(p - 1);
            if (c + 1 < w) push(p + 1);
            if (r > 0) push(p - w);
            if (r + 1 < h) push(p + w);
        }
        if (count < params.min_area) continue;
        const double mean = static_cast<double>(sum) / static_cast<double>(count);
        const double conf = std::clamp((mean - params.threshold) / (255.0 - params.threshold), 0.0, 1.0);
        out.push_back({frame.pixel_box(c0, r0, c1, r1), conf, frame.frame_id, frame.sim_time});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    return out;
}

/// Ground-truth detector: bounding box of the cells inside `view` (by cell center) whose
/// film is at least `t_min` thick, at confidence 1.
inline std::vector<Detection> detect_oracle(const SkinField& world, const Rect& view, double t_min,
                                            std::uint64_t frame_id = 0, double sim_time = 0.0) {
    const CellSpan cols = world.columns(view.x_min, view.x_max);
    const CellSpan rows = world.rows(view.y_min, view.y_max);
    std::size_t i0 = world.nx(), j0 = world.ny(), i1 = 0, j1 = 0;
    bool any = false;
    for (std::size_t j = rows.begin; j < rows.end; ++j) {
        for (std::size_t i = cols.begin; i < cols.end; ++i) {
            if (world.thickness(i, j) < t_min) continue;
            any = true;
            i0 = std::min(i0, i);
            i1 = std::max(i1, i);
            j0 = std::min(j0, j);
            j1 = std::max(j1, j);
        }
    }
    if (!any) return {};
    const double cs = world.cell_size();
    return {Detection{{i0 * cs, j0 * cs, (i1 + 1) * cs, (j1 + 1) * cs}, 1.0, frame_id, sim_time}};
}

/// Per-frame IoU scores of top predictions against labels.
struct IouScores {
    struct Entry {
        std::uint64_t frame_id = 0;
        double iou = 0.0;
        bool predicted = false;
    };
    double mean = 0.0;
    std::vector<Entry> frames;
};

/// Mean IoU over labeled frames that carry a truth box. A labeled frame with no
/// prediction scores 0; truth-empty frames are excluded. Predictions are matched to
/// labels by frame_id (first prediction per frame wins).
inline IouScores score_iou(std::span<const Detection> top_preds, std::span<const FrameLabel> labels) {
    if (labels.empty()) throw std::domain_error("mean_iou: empty label set");
    std::unordered_set<std::uint64_t> seen;
    for (const auto& l : labels) {
        if (!seen.insert(l.frame_id).second) throw std::invalid_argument("mean_iou: duplicate label frame_id");
    }

    std::unordered_map<std::uint64_t, const Detection*> by_frame;
    for (const auto& d : top_preds) by_frame.try_emplace(d.frame_id, &d);

    IouScores scores;
    double sum = 0.0;
    for (const auto& label : labels) {
        if (!label.truth) continue;
        const auto pred = by_frame.find(label.frame_id);
        IouScores::Entry e{label.frame_id, 0.0, pred != by_frame.end()};
        if (e.predicted) e.iou = iou(pred->second->rect, *label.truth);
        sum += e.iou;
        scores.frames.push_back(e);
    }
    if (scores.frames.empty()) throw std::domain_error("mean_iou: no label carries a truth box");
    scores.mean = sum / static_cast<double>(scores.frames.size());
    return scores;
}

inline double mean_iou(std::span<const Detection> top_preds, std::span<const FrameLabel> labels) {
    return score_iou(top_preds, labels).mean;
}

/// Detector verdict for one frame: its top detection, or none when no gel was found.
struct FrameResult {
    std::uint64_t frame_id = 0;
    double sim_time = 0.0;
    std::optional<Detection> top;
};

/// Latest-wins hand-off between a detector thread and the control loop. Only the newest
/// frame_id is kept; older arrivals are ignored.
class DetectionMailbox {
public:
    void post(const FrameResult& r) {
        std::lock_guard lock(mutex_);
        if (!slot_ || r.frame_id >= slot_->frame_id) slot_ = r;
    }

    /// The newest result, if any, leaving the slot empty.
    std::optional<FrameResult> take() {
        std::lock_guard lock(mutex_);
        return std::exchange(slot_, std::nullopt);
    }

private:
    std::mutex mutex_;
    std::optional<FrameResult> slot_;
};

}  // namespace gelbot
