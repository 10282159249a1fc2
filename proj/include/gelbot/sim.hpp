#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gelbot/config.hpp"
#include "gelbot/detection.hpp"
#include "gelbot/dispenser.hpp"
#include "gelbot/field.hpp"
#include "gelbot/geometry.hpp"
#include "gelbot/world.hpp"

namespace gelbot {

enum class Policy { Autonomous, ManualHalt };

constexpr std::string_view to_string(Policy p) { return p == Policy::Autonomous ? "autonomous" : "manual"; }

class SimError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunMetrics {
    double scan_time = 0.0;
    std::uint64_t halts = 0;
    /// Gel applied to the skin: nozzle output for Autonomous, manual blobs for ManualHalt.
    double dispensed_volume = 0.0;
    double mean_quality = 0.0;
    /// Mean IoU of the threshold detector against the oracle box, over frames with gel in view.
    std::optional<double> mean_iou;
    std::uint64_t ticks = 0;
    std::uint64_t bursts = 0;

    friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

/// Gel bookkeeping for one run, mm^3.
struct VolumeLedger {
    double initial = 0.0;
    double nozzle_deposited = 0.0;
    double manual_deposited = 0.0;
    double depleted = 0.0;
    double final_volume = 0.0;
    double reservoir_dispensed = 0.0;
    double reservoir_decrease = 0.0;

    double world_residual() const {
        return initial + nozzle_deposited + manual_deposited - depleted - final_volume;
    }
};

enum class SimEventKind { HaltStart, HaltEnd, ManualBlob, BurstStart, BurstEnd, RefillAlert, DepositSkipped };

constexpr std::string_view to_string(SimEventKind k) {
    switch (k) {
        case SimEventKind::HaltStart: return "halt_start";
        case SimEventKind::HaltEnd: return "halt_end";
        case SimEventKind::ManualBlob: return "manual_blob";
        case SimEventKind::BurstStart: return "burst_start";
        case SimEventKind::BurstEnd: return "burst_end";
        case SimEventKind::RefillAlert: return "refill_alert";
        case SimEventKind::DepositSkipped: return "deposit_skipped";
    }
    return "?";
}

struct SimEvent {
    std::uint64_t tick = 0;
    double sim_time = 0.0;
    SimEventKind kind = SimEventKind::HaltStart;
    double probe_x = 0.0;
    /// Quality at a halt, volume for deposits.
    double value = 0.0;

    friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

struct RunResult {
    RunMetrics metrics;
    VolumeLedger ledger;
    std::vector<DecisionRecord> decisions;
    std::vector<SimEvent> events;
    /// Per scanning tick coupling quality.
    std::vector<double> quality;
    ControllerState controller;
};

/// Trailing-edge position at the start of a scan: one camera view into the skin, so the first
/// frame already sees skin behind the probe.
inline double scan_origin(const SimConfig& cfg) { return cfg.camera.view_length; }

/// Skin patch sized for the scan: seeded albedo noise, film per the start condition.
inline SkinField make_world(std::uint64_t seed, const SimConfig& cfg) {
    const double cs = cfg.world.cell_size;
    const double length = scan_origin(cfg) + cfg.scan.length + cfg.probe.footprint_length + cfg.probe.nozzle_offset +
                          cfg.probe.nozzle_length + cfg.world.margin;
    SkinField world(static_cast<std::size_t>(std::ceil(length / cs - 1e-9)),
                    static_cast<std::size_t>(std::ceil(cfg.world.lateral / cs - 1e-9)), cs);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> albedo(cfg.world.albedo_mean - cfg.world.albedo_spread,
                                                  cfg.world.albedo_mean + cfg.world.albedo_spread);
    for (double& a : world.albedo()) a = albedo(rng);
    if (cfg.scan.start == StartCondition::Pregelled)
        std::fill(world.thickness().begin(), world.thickness().end(), cfg.scan.pregel_thickness);
    return world;
}

/// Probe footprint with its trailing edge at `x`, centered across the world.
inline Rect probe_footprint(const SimConfig& cfg, const SkinField& world, double x) {
    const double y0 = (world.bounds().y_max - cfg.probe.footprint_width) / 2.0;
    return {x, y0, x + cfg.probe.footprint_length, y0 + cfg.probe.footprint_width};
}

/// Strip the nozzle wets ahead of the footprint leading edge.
inline Rect nozzle_region(const SimConfig& cfg, const Rect& footprint) {
    const double x0 = footprint.x_max + cfg.probe.nozzle_offset;
    return {x0, footprint.y_min, x0 + cfg.probe.nozzle_length, footprint.y_max};
}

/// Camera view behind the footprint, across the full skin width, clipped to the world.
inline MaybeRect camera_view(const SimConfig& cfg, const SkinField& world, const Rect& footprint) {
    const Rect b = world.bounds();
    return intersect({footprint.x_min - cfg.camera.view_length, b.y_min, footprint.x_min, b.y_max}, b);
}

/// Optional per-frame observer: frame, the detector's top result, and the oracle truth box.
using FrameObserver = std::function<void(const Frame&, const std::optional<Detection>&, const MaybeRect&)>;

/// Runs one scan. Per tick: (1) probe advance unless halted, (2) smear under the footprint
/// when it moved, (3) nozzle deposit of gel pushed out in the previous tick, (4) render and
/// detect, (5) control tick or manual quality check, (6) actuator step, (7) quality sample
/// while scanning. Ends on the tick the probe reaches the scan end.
inline RunResult run_scan(Policy policy, std::uint64_t seed, const SimConfig& cfg,
                          const FrameObserver& observer = {}) {
    cfg.validate();
    ControllerConfig ctl = cfg.controller;
    ctl.control_period = cfg.scan.dt;

    RunResult out;
    SkinField world = make_world(seed, cfg);
    std::mt19937_64 camera_rng(seed ^ 0x9E3779B97F4A7C15ULL);
    DetectionMailbox mailbox;
    std::deque<FrameResult> in_flight;

    const double dt = cfg.scan.dt;
    const double step = cfg.scan.speed * dt;
    const auto moves_needed = static_cast<std::uint64_t>(std::ceil(cfg.scan.length / step - 1e-9));
    const auto halt_ticks = static_cast<std::uint64_t>(std::llround(cfg.manual.halt_duration / dt));
    const auto latency_ticks = static_cast<std::uint64_t>(std::llround(cfg.camera.latency / dt));
    const Rect bounds = world.bounds();
    const double x0 = scan_origin(cfg);

    ControllerState ctrl;
    ctrl.actuator = cfg.actuator.initial_state();
    out.ledger.initial = world.total_volume();

    double tube = 0.0;
    std::uint64_t moves = 0;
    std::uint64_t halt_left = 0;
    double iou_sum = 0.0;
    std::uint64_t iou_frames = 0;
    double quality_sum = 0.0;

    std::uint64_t tick = 0;
    for (;; ++tick) {
        if (tick >= cfg.scan.max_ticks)
            throw SimError("run did not terminate within " + std::to_string(cfg.scan.max_ticks) + " ticks (seed " +
                           std::to_string(seed) + ")");
        const double now = static_cast<double>(tick) * dt;

        // (1)
        const bool halted = halt_left > 0;
        if (halted) {
            if (--halt_left == 0) out.events.push_back({tick, now, SimEventKind::HaltEnd, x0 + moves * step, 0.0});
        } else {
            ++moves;
        }
        const double x = x0 + static_cast<double>(moves) * step;
        const Rect footprint = probe_footprint(cfg, world, x);
        const bool done = moves >= moves_needed;

        // (2)
        if (!halted) out.ledger.depleted += smear_deplete(world, footprint, Direction::Forward, cfg.gel.carry, cfg.gel.loss);

        // (3)
        if (tube > 0.0) {
            const auto res = deposit(world, nozzle_region(cfg, footprint), tube);
            if (res.cells == 0) {
                out.events.push_back({tick, now, SimEventKind::DepositSkipped, x, tube});
            } else {
                out.ledger.nozzle_deposited += res.volume;
                tube = 0.0;
            }
        }

        // (4)
        const MaybeRect view = camera_view(cfg, world, footprint);
        if (view) {
            std::optional<Detection> top;
            MaybeRect truth;
            const auto oracle = detect_oracle(world, *view, cfg.camera.oracle_t_min, tick, now);
            if (!oracle.empty()) truth = oracle.front().rect;
            if (cfg.camera.detector == DetectorKind::Oracle) {
                top = select_top(oracle);
                if (observer) observer(render_frame(world, *view, cfg.camera.render, camera_rng, tick, now), top, truth);
            } else {
                const Frame frame = render_frame(world, *view, cfg.camera.render, camera_rng, tick, now);
                top = select_top(detect_threshold(frame, cfg.camera.threshold));
                if (truth) {
                    iou_sum += top ? iou(top->rect, *truth) : 0.0;
                    ++iou_frames;
                }
                if (observer) observer(frame, top, truth);
            }
            in_flight.push_back({tick, now, top});
        }
        while (!in_flight.empty() && in_flight.front().frame_id + latency_ticks <= tick) {
            mailbox.post(in_flight.front());
            in_flight.pop_front();
        }

        // (5)
        if (policy == Policy::Autonomous) {
            const ControlInputs inputs{x, footprint, Direction::Forward, bounds, mailbox.take(), now};
            auto result = control_tick(inputs, std::move(ctrl), ctl);
            ctrl = std::move(result.state);
            if (result.record.decision == DecisionEvent::StartBurst) {
                ++out.metrics.bursts;
                out.events.push_back({tick, now, SimEventKind::BurstStart, x, ctl.burst_volume});
            } else if (result.record.decision == DecisionEvent::RefillAlert) {
                out.events.push_back({tick, now, SimEventKind::RefillAlert, x, ctrl.actuator.remaining_volume()});
            }
            out.decisions.push_back(std::move(result.record));
        } else if (!halted && !done) {
            const double q = coupling_quality(world, footprint, cfg.gel.t_couple);
            if (q < cfg.manual.quality_floor) {
                ++out.metrics.halts;
                out.events.push_back({tick, now, SimEventKind::HaltStart, x, q});
                const Rect blob{footprint.x_min, footprint.y_min, footprint.x_min + cfg.manual.blob_length,
                                footprint.y_max};
                const auto res = deposit(world, blob, cfg.manual.blob_volume);
                out.ledger.manual_deposited += res.volume;
                out.events.push_back({tick, now, SimEventKind::ManualBlob, x, res.volume});
                halt_left = halt_ticks;
            }
        }

        // (6)
        if (policy == Policy::Autonomous) {
            const bool was_dispensing = is_dispensing(ctrl.mode);
            const double pushed = advance_actuator(ctrl, now, dt);
            tube += pushed;
            out.ledger.reservoir_dispensed += pushed;
            if (was_dispensing && !is_dispensing(ctrl.mode))
                out.events.push_back({tick, now, SimEventKind::BurstEnd, x, 0.0});
        }

        // (7)
        if (!halted) {
            const double q = coupling_quality(world, footprint, cfg.gel.t_couple);
            out.quality.push_back(q);
            quality_sum += q;
        }

        if (done && halt_left == 0) break;
    }

    // Gel still in the tube lands at the final nozzle position.
    if (tube > 0.0) {
        const auto res = deposit(world, nozzle_region(cfg, probe_footprint(cfg, world, x0 + moves * step)), tube);
        out.ledger.nozzle_deposited += res.volume;
    }

    out.metrics.ticks = tick + 1;
    out.metrics.scan_time = static_cast<double>(out.metrics.ticks) * dt;
    out.metrics.mean_quality = out.quality.empty() ? 0.0 : quality_sum / static_cast<double>(out.quality.size());
    if (iou_frames > 0) out.metrics.mean_iou = iou_sum / static_cast<double>(iou_frames);
    out.metrics.dispensed_volume = out.ledger.nozzle_deposited + out.ledger.manual_deposited;
    out.ledger.final_volume = world.total_volume();
    out.ledger.reservoir_decrease = ctrl.actuator.reservoir_initial - ctrl.actuator.remaining_volume();
    out.controller = std::move(ctrl);
    return out;
}

}  // namespace gelbot
