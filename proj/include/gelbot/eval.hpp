#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <future>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gelbot/config.hpp"
#include "gelbot/detection.hpp"
#include "gelbot/field.hpp"
#include "gelbot/io.hpp"
#include "gelbot/sim.hpp"
#include "gelbot/world.hpp"

namespace gelbot {

// ---------------------------------------------------------------------------------------------
// Detector fixtures

struct FixtureParams {
    std::uint64_t seed = 42;
    std::size_t frames = 200;
    RenderParams render{};
    /// Truth boxes bound the cells at or above this film thickness, mm.
    double t_min = 0.8;
    double view_length = 40.0;
    double view_width = 30.0;
    double cell_size = 0.5;
    double albedo_mean = 0.35;
    double albedo_spread = 0.05;
    /// Share of frames showing bare skin.
    double empty_fraction = 0.1;
    /// Share of frames that also carry a thin smear below t_min.
    double smear_fraction = 0.5;
};

struct Dataset {
    std::vector<Frame> frames;
    std::vector<FrameLabel> labels;
};

namespace detail {

/// Plateau of height `peak` over `outer` shrunk by `ramp`, falling linearly to zero at the edge.
inline void add_patch(SkinField& world, const Rect& outer, double peak, double ramp) {
    for (std::size_t j = 0; j < world.ny(); ++j) {
        for (std::size_t i = 0; i < world.nx(); ++i) {
            const Rect c = world.cell_rect(i, j);
            const double x = (c.x_min + c.x_max) / 2.0;
            const double y = (c.y_min + c.y_max) / 2.0;
            const double inside = std::min({x - outer.x_min, outer.x_max - x, y - outer.y_min, outer.y_max - y});
            if (inside <= 0.0) continue;
            world.thickness(i, j) += peak * std::min(1.0, inside / ramp);
        }
    }
}

}  // namespace detail

/// Synthetic frames of skin with at most one gel patch each, plus labels from the cell-level truth.
inline Dataset make_fixture(const FixtureParams& p) {
    if (p.frames == 0) throw std::invalid_argument("make_fixture: need at least one frame");
    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const auto nx = static_cast<std::size_t>(std::lround(p.view_length / p.cell_size));
    const auto ny = static_cast<std::size_t>(std::lround(p.view_width / p.cell_size));

    Dataset ds;
    for (std::size_t k = 0; k < p.frames; ++k) {
        SkinField world(nx, ny, p.cell_size);
        for (double& a : world.albedo()) a = uniform(p.albedo_mean - p.albedo_spread, p.albedo_mean + p.albedo_spread);

        if (unit(rng) >= p.empty_fraction) {
            const double w = uniform(10.0, 28.0);
            const double h = uniform(8.0, 22.0);
            const double x0 = uniform(-2.0, p.view_length - w + 2.0);
            const double y0 = uniform(-2.0, p.view_width - h + 2.0);
            detail::add_patch(world, {x0, y0, x0 + w, y0 + h}, uniform(1.0, 2.5), uniform(0.5, 2.5));
        }
        if (unit(rng) < p.smear_fraction) {
            const double w = uniform(4.0, 12.0);
            const double h = uniform(4.0, 10.0);
            const double x0 = uniform(0.0, p.view_length - w);
            const double y0 = uniform(0.0, p.view_width - h);
            detail::add_patch(world, {x0, y0, x0 + w, y0 + h}, uniform(0.2, 0.5), 1.0);
        }

        const Rect view = world.bounds();
        ds.frames.push_back(render_frame(world, view, p.render, rng, k, 0.0));
        const auto truth = detect_oracle(world, view, p.t_min, k);
        ds.labels.push_back({k, truth.empty() ? MaybeRect{} : MaybeRect{truth.front().rect}});
    }
    return ds;
}

/// The same frames twice, the second copy renumbered after the first.
inline Dataset concat_self(const Dataset& ds) {
    std::uint64_t next = 0;
    for (const auto& l : ds.labels) next = std::max(next, l.frame_id + 1);
    for (const auto& f : ds.frames) next = std::max(next, f.frame_id + 1);
    Dataset out = ds;
    for (Frame f : ds.frames) {
        f.frame_id += next;
        out.frames.push_back(std::move(f));
    }
    for (FrameLabel l : ds.labels) {
        l.frame_id += next;
        out.labels.push_back(l);
    }
    return out;
}

inline constexpr std::string_view kManifestName = "dataset.json";
inline constexpr std::string_view kLabelsName = "labels.csv";

inline std::string frame_file_name(std::uint64_t frame_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04llu.pgm", static_cast<unsigned long long>(frame_id));
    return buf;
}

/// Writes numbered PGMs, labels.csv and a manifest with the pixel scale and origin that PGM cannot hold.
inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    nlohmann::ordered_json frames = nlohmann::ordered_json::array();
    for (const auto& f : ds.frames) {
        write_pgm(dir / frame_file_name(f.frame_id), f);
        frames.push_back({{"frame_id", f.frame_id},
                          {"file", frame_file_name(f.frame_id)},
                          {"mm_per_px", f.mm_per_px},
                          {"origin_x", f.origin_x},
                          {"origin_y", f.origin_y}});
    }
    manifest["labels"] = kLabelsName;
    manifest["frames"] = std::move(frames);
    detail::write_file(dir / kManifestName, manifest.dump(2) + "\n");
    write_labels(dir / kLabelsName, ds.labels);
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / kManifestName;
    const std::string text = detail::read_file(manifest_path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DatasetError(manifest_path, e.byte > 0 ? e.byte - 1 : 0, e.what());
    }

    Dataset ds;
    try {
        ds.labels = read_labels(dir / manifest.at("labels").get<std::string>());
        for (const auto& entry : manifest.at("frames")) {
            Frame f = read_pgm(dir / entry.at("file").get<std::string>());
            f.frame_id = entry.at("frame_id").get<std::uint64_t>();
            f.mm_per_px = entry.at("mm_per_px").get<double>();
            f.origin_x = entry.at("origin_x").get<double>();
            f.origin_y = entry.at("origin_y").get<double>();
            if (!(f.mm_per_px > 0.0)) throw DatasetError(manifest_path, 0, "mm_per_px must be positive");
            ds.frames.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(manifest_path, 0, e.what());
    }
    return ds;
}

// ---------------------------------------------------------------------------------------------
// Detector scoring

inline std::vector<Detection> top_detections(std::span<const Frame> frames, const ThresholdParams& params) {
    std::vector<Detection> preds;
    for (const auto& f : frames) {
        if (auto top = select_top(detect_threshold(f, params))) preds.push_back(*top);
    }
    return preds;
}

inline IouScores evaluate_detector(const Dataset& ds, const ThresholdParams& params) {
    return score_iou(top_detections(ds.frames, params), ds.labels);
}

/// Untuned cutoff: halfway between bare skin of mean albedo and a saturated gel film.
inline int midpoint_threshold(const RenderParams& render, double albedo_mean) {
    return static_cast<int>(std::lround(255.0 * (albedo_mean + render.gel_gain) / 2.0));
}

struct ThresholdSweep {
    int best = 0;
    double best_iou = 0.0;
    std::vector<std::pair<int, double>> curve;
};

/// Mean IoU for every cutoff in [lo, hi]; the best is the lowest cutoff reaching the maximum.
inline ThresholdSweep sweep_threshold(const Dataset& ds, ThresholdParams params, int lo = 0, int hi = 254) {
    if (lo < 0 || hi > 254 || lo > hi) throw std::invalid_argument("sweep_threshold: bad range");
    ThresholdSweep out;
    out.best_iou = -1.0;
    for (int t = lo; t <= hi; ++t) {
        params.threshold = t;
        const double m = evaluate_detector(ds, params).mean;
        out.curve.emplace_back(t, m);
        if (m > out.best_iou) {
            out.best_iou = m;
            out.best = t;
        }
    }
    return out;
}

struct TuningReport {
    int untuned_threshold = 0;
    double untuned_iou = 0.0;
    int tuned_threshold = 0;
    /// Score on the tuning split itself.
    double tuning_iou = 0.0;
    double tuned_iou = 0.0;
};

/// Picks the cutoff on `tuning` and scores both cutoffs on `held_out`.
inline TuningReport tune_threshold(const Dataset& tuning, const Dataset& held_out, const ThresholdParams& base,
                                   int untuned) {
    TuningReport r;
    ThresholdParams p = base;
    r.untuned_threshold = untuned;
    p.threshold = untuned;
    r.untuned_iou = evaluate_detector(held_out, p).mean;
    const ThresholdSweep sweep = sweep_threshold(tuning, base, 100, 254);
    r.tuned_threshold = sweep.best;
    r.tuning_iou = sweep.best_iou;
    p.threshold = sweep.best;
    r.tuned_iou = evaluate_detector(held_out, p).mean;
    return r;
}

// ---------------------------------------------------------------------------------------------
// Policy comparison

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
    friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

/// Mean and sample standard deviation.
inline Aggregate aggregate(std::span<const double> xs) {
    Aggregate a;
    if (xs.empty()) return a;
    double sum = 0.0;
    for (double x : xs) sum += x;
    a.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - a.mean) * (x - a.mean);
        a.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return a;
}

struct PolicySummary {
    Aggregate scan_time;
    Aggregate mean_quality;
};

struct SeedRow {
    std::uint64_t seed = 0;
    RunMetrics autonomous;
    RunMetrics manual;
};

struct ComparisonReport {
    std::vector<SeedRow> rows;
    PolicySummary autonomous;
    PolicySummary manual;
    /// (manual - autonomous) / manual, percent. Empty when the manual mean is zero.
    std::optional<double> time_change_pct;
    /// (autonomous - manual) / manual, percent. Empty when the manual mean is zero.
    std::optional<double> quality_change_pct;
};

inline std::optional<double> percent_change(double from, double to) {
    if (from == 0.0) return to == 0.0 ? std::optional(0.0) : std::nullopt;
    return 100.0 * (to - from) / from;
}

/// Folds per-seed rows into the report aggregates.
inline ComparisonReport summarize(std::vector<SeedRow> rows) {
    ComparisonReport r;
    r.rows = std::move(rows);
    std::vector<double> at, aq, mt, mq;
    for (const auto& row : r.rows) {
        at.push_back(row.autonomous.scan_time);
        aq.push_back(row.autonomous.mean_quality);
        mt.push_back(row.manual.scan_time);
        mq.push_back(row.manual.mean_quality);
    }
    r.autonomous = {aggregate(at), aggregate(aq)};
    r.manual = {aggregate(mt), aggregate(mq)};
    const auto t = percent_change(r.manual.scan_time.mean, r.autonomous.scan_time.mean);
    r.time_change_pct = t ? std::optional(-*t) : std::nullopt;
    r.quality_change_pct = percent_change(r.manual.mean_quality.mean, r.autonomous.mean_quality.mean);
    return r;
}

/// Runs both policies for every seed, in parallel; the result does not depend on scheduling.
inline ComparisonReport compare_policies(const SimConfig& cfg, std::span<const std::uint64_t> seeds) {
    if (seeds.size() < 2) throw std::invalid_argument("compare_policies: need at least two seeds");
    cfg.validate();
    const auto launch = [&](Policy policy, std::uint64_t seed) {
        return std::async(std::launch::async, [&cfg, policy, seed] {
            try {
                return run_scan(policy, seed, cfg).metrics;
            } catch (const std::exception& e) {
                throw SimError("seed " + std::to_string(seed) + " (" + std::string(to_string(policy)) + "): " + e.what());
            }
        });
    };
    std::vector<std::future<RunMetrics>> autonomous, manual;
    for (auto s : seeds) {
        autonomous.push_back(launch(Policy::Autonomous, s));
        manual.push_back(launch(Policy::ManualHalt, s));
    }
    std::vector<SeedRow> rows;
    for (std::size_t k = 0; k < seeds.size(); ++k) rows.push_back({seeds[k], autonomous[k].get(), manual[k].get()});
    return summarize(std::move(rows));
}

// ---------------------------------------------------------------------------------------------
// Serialization

namespace detail {
inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}
}  // namespace detail

inline nlohmann::ordered_json to_json(const RunMetrics& m) {
    return {{"scan_time_s", m.scan_time},
            {"mean_quality", m.mean_quality},
            {"halts", m.halts},
            {"bursts", m.bursts},
            {"dispensed_volume_mm3", m.dispensed_volume},
            {"mean_iou", detail::optional_json(m.mean_iou)},
            {"ticks", m.ticks}};
}

inline nlohmann::ordered_json to_json(const Aggregate& a) { return {{"mean", a.mean}, {"stddev", a.stddev}}; }

inline nlohmann::ordered_json to_json(const PolicySummary& s) {
    return {{"scan_time_s", to_json(s.scan_time)}, {"mean_quality", to_json(s.mean_quality)}};
}

inline nlohmann::ordered_json to_json(const ComparisonReport& r) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"seed", row.seed}, {"autonomous", to_json(row.autonomous)}, {"manual", to_json(row.manual)}});
    return {{"seeds", r.rows.size()},
            {"manual", to_json(r.manual)},
            {"autonomous", to_json(r.autonomous)},
            {"time_change_pct", detail::optional_json(r.time_change_pct)},
            {"quality_change_pct", detail::optional_json(r.quality_change_pct)},
            {"rows", std::move(rows)}};
}

inline nlohmann::ordered_json to_json(const VolumeLedger& l) {
    return {{"initial_mm3", l.initial},
            {"nozzle_deposited_mm3", l.nozzle_deposited},
            {"manual_deposited_mm3", l.manual_deposited},
            {"depleted_mm3", l.depleted},
            {"final_mm3", l.final_volume},
            {"reservoir_dispensed_mm3", l.reservoir_dispensed},
            {"reservoir_decrease_mm3", l.reservoir_decrease},
            {"residual_mm3", l.world_residual()}};
}

/// Table laid out as manual vs autonomous with the change column.
inline std::string format_table(const ComparisonReport& r) {
    const auto cell = [](const Aggregate& a, int prec) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f +/- %.*f", prec, a.mean, prec, a.stddev);
        return std::string(buf);
    };
    const auto change = [](const std::optional<double>& pct, bool lower_is_better) {
        if (!pct) return std::string("n/a");
        char buf[32];
        const char* arrow = (*pct == 0.0) ? "= " : ((*pct > 0.0) != lower_is_better ? "up " : "down ");
        std::snprintf(buf, sizeof buf, "%s%.1f%%", arrow, std::abs(*pct));
        return std::string(buf);
    };
    char line[160];
    std::string out;
    std::snprintf(line, sizeof line, "%-22s %-20s %-20s %s\n", "", "Manual", "Autonomous", "Change");
    out += line;
    std::snprintf(line, sizeof line, "%-22s %-20s %-20s %s\n", "Scan time (s)", cell(r.manual.scan_time, 2).c_str(),
                  cell(r.autonomous.scan_time, 2).c_str(), change(r.time_change_pct, true).c_str());
    out += line;
    std::snprintf(line, sizeof line, "%-22s %-20s %-20s %s\n", "Coupling quality", cell(r.manual.mean_quality, 3).c_str(),
                  cell(r.autonomous.mean_quality, 3).c_str(), change(r.quality_change_pct, false).c_str());
    out += line;
    std::snprintf(line, sizeof line, "(%zu seeds)\n", r.rows.size());
    out += line;
    return out;
}

/// One JSON object per line: controller decisions, then simulator events, each in tick order.
inline std::string event_log_jsonl(const RunResult& run) {
    std::string out;
    for (const auto& d : run.decisions) {
        nlohmann::ordered_json j{{"type", "decision"},
                                 {"tick", d.tick},
                                 {"sim_time", d.sim_time},
                                 {"probe_x", d.probe_x},
                                 {"decision", to_string(d.decision)},
                                 {"coverage", detail::optional_json(d.coverage)},
                                 {"confidence", detail::optional_json(d.confidence)},
                                 {"stroke", d.stroke},
                                 {"remaining_volume", d.remaining_volume},
                                 {"note", d.note}};
        out += j.dump() + "\n";
    }
    for (const auto& e : run.events) {
        nlohmann::ordered_json j{{"type", "event"},           {"tick", e.tick},         {"sim_time", e.sim_time},
                                 {"kind", to_string(e.kind)}, {"probe_x", e.probe_x}, {"value", e.value}};
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace gelbot
