#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gelbot/detection.hpp"
#include "gelbot/geometry.hpp"
#include "gelbot/protocol.hpp"

namespace gelbot {

/// Linear actuator driving the syringe piston. Volumes in mm^3, lengths in mm.
struct ActuatorState {
    double stroke = 0.0;
    double stroke_max = 100.0;
    double speed_cmd = 0.0;
    double v_max = 8.0;
    double piston_area = std::numbers::pi * 10.0 * 10.0;
    double reservoir_initial = 30000.0;

    static double piston_area_for(double diameter) { return std::numbers::pi * diameter * diameter / 4.0; }

    /// Stroke at which the reservoir is exhausted or the actuator hits its end stop.
    double stroke_limit() const { return std::min(stroke_max, reservoir_initial / piston_area); }
    double remaining_volume() const { return reservoir_initial - piston_area * stroke; }
    double flow_rate() const { return piston_area * speed_cmd; }
};

struct Idle {
    friend bool operator==(const Idle&, const Idle&) = default;
};
struct Dispensing {
    double remaining_burst = 0.0;
    friend bool operator==(const Dispensing&, const Dispensing&) = default;
};
/// Absorbing until a refill resets the stroke.
struct Empty {
    friend bool operator==(const Empty&, const Empty&) = default;
};

using DispenserMode = std::variant<Idle, Dispensing, Empty>;

inline bool is_dispensing(const DispenserMode& m) { return std::holds_alternative<Dispensing>(m); }

struct ActuatorStep {
    ActuatorState state;
    DispenserMode mode;
    double dispensed = 0.0;
};

/// Advances the piston for `dt` seconds. Only Dispensing moves it; the step is clamped at the
/// stroke limit, which puts the dispenser into Empty.
inline ActuatorStep actuator_step(ActuatorState a, DispenserMode mode, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("actuator_step: dt must be positive");
    auto* burst = std::get_if<Dispensing>(&mode);
    if (!burst) return {a, mode, 0.0};

    const double limit = a.stroke_limit();
    const double travel = std::clamp(a.speed_cmd, 0.0, a.v_max) * dt;
    double delta = 0.0;
    if (a.stroke + travel >= limit) {
        delta = std::max(0.0, limit - a.stroke);
        a.stroke = limit;
    } else {
        delta = travel;
        a.stroke += travel;
    }
    const double dispensed = a.piston_area * delta;
    burst->remaining_burst -= dispensed;

    if (a.stroke >= limit) {
        a.speed_cmd = 0.0;
        mode = Empty{};
    } else if (burst->remaining_burst <= 0.0) {
        a.speed_cmd = 0.0;
        mode = Idle{};
    }
    return {a, mode, dispensed};
}

/// Thresholds and timing for the dispense controller.
struct ControllerConfig {
    /// Minimum trail coverage for gel to count as present.
    double tau = 0.5;
    /// Detections below this confidence count as absent gel.
    double c_min = 0.05;
    /// Trail window length behind the probe, mm.
    double window_len = 15.0;
    double burst_volume = 500.0;
    double cooldown = 1.0;
    double stale_after = 0.2;
    double control_period = 0.05;
    /// Piston speed commanded for a burst, mm/s.
    double dispense_speed = 2.0;

    void validate() const {
        const auto check = [](bool ok, const char* what) {
            if (!ok) throw std::invalid_argument(std::string("ControllerConfig: ") + what);
        };
        check(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1]");
        check(c_min > 0.0 && c_min <= 1.0, "c_min must be in (0, 1]");
        check(window_len > 0.0, "window_len must be positive");
        check(burst_volume > 0.0, "burst_volume must be positive");
        check(cooldown > 0.0, "cooldown must be positive");
        check(stale_after > 0.0, "stale_after must be positive");
        check(control_period > 0.0, "control_period must be positive");
        check(dispense_speed > 0.0, "dispense_speed must be positive");
    }
};

enum class DecisionEvent { NoAction, StartBurst, RefillAlert };

constexpr std::string_view to_string(DecisionEvent e) {
    switch (e) {
        case DecisionEvent::NoAction: return "NoAction";
        case DecisionEvent::StartBurst: return "StartBurst";
        case DecisionEvent::RefillAlert: return "RefillAlert";
    }
    return "?";
}

struct Decision {
    DecisionEvent event = DecisionEvent::NoAction;
    /// Trail coverage by the top detection, when both exist.
    std::optional<double> coverage;
    bool gel_absent = false;
};

// Timestamps come from tick * dt, so comparisons get a small slack.
inline constexpr double kTimeSlack = 1e-9;

/// Dispense rule. Gel is absent in the trail when there is no usable detection, its confidence
/// is below c_min, or it covers less than tau of the trail. Absent gel starts a burst from Idle
/// once the cooldown has elapsed, or raises a refill alert when the reservoir cannot supply one.
inline Decision decide(const std::optional<Detection>& top, const MaybeRect& trail, const ControllerConfig& cfg,
                       const DispenserMode& mode, double remaining_volume, double now,
                       std::optional<double> last_dispense_end) {
    Decision d;
    if (top && trail) d.coverage = coverage(top->rect, *trail);
    if (!trail || is_dispensing(mode)) return d;

    d.gel_absent = !top || top->confidence < cfg.c_min || *d.coverage < cfg.tau;
    if (!d.gel_absent) return d;

    if (std::holds_alternative<Empty>(mode) || remaining_volume < cfg.burst_volume) {
        d.event = DecisionEvent::RefillAlert;
    } else if (!last_dispense_end || now - *last_dispense_end >= cfg.cooldown - kTimeSlack) {
        d.event = DecisionEvent::StartBurst;
    }
    return d;
}

struct ControllerState {
    ActuatorState actuator;
    DispenserMode mode = Idle{};
    std::optional<double> last_dispense_end;
    std::uint64_t tick = 0;
    /// A burst finished on the device and the host still owes it a stop command.
    bool stop_pending = false;
};

struct ControlInputs {
    double probe_x = 0.0;
    Rect footprint;
    Direction direction = Direction::Forward;
    Rect bounds;
    /// Newest detector verdict delivered through the hand-off, if any.
    std::optional<FrameResult> latest;
    double now = 0.0;
};

/// One line of the controller's replay log.
struct DecisionRecord {
    std::uint64_t tick = 0;
    double sim_time = 0.0;
    double probe_x = 0.0;
    DecisionEvent decision = DecisionEvent::NoAction;
    std::optional<double> coverage;
    std::optional<double> confidence;
    double stroke = 0.0;
    double remaining_volume = 0.0;
    /// "stale" or "malformed" when the delivered detection was discarded.
    std::string note;

    friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

struct TickOutput {
    ControllerState state;
    std::vector<proto::DeviceCommand> commands;
    DecisionRecord record;
};

inline std::uint8_t speed_to_wire(double mm_per_s) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(mm_per_s * 10.0), 0L, 255L));
}

/// One control period: trail window, staleness filter, decision, command emission.
/// Emits at most one command.
inline TickOutput control_tick(const ControlInputs& in, ControllerState state, const ControllerConfig& cfg) {
    TickOutput out;
    const MaybeRect trail = trail_region(in.footprint, in.direction, cfg.window_len, in.bounds);

    std::optional<Detection> top;
    std::string note;
    if (in.latest) {
        if (in.now - in.latest->sim_time > cfg.stale_after + kTimeSlack) {
            note = "stale";
        } else if (in.latest->top && !in.latest->top->well_formed()) {
            note = "malformed";
        } else {
            top = in.latest->top;
        }
    }

    const Decision d = decide(top, trail, cfg, state.mode, state.actuator.remaining_volume(), in.now,
                              state.last_dispense_end);

    if (d.event == DecisionEvent::StartBurst) {
        state.mode = Dispensing{cfg.burst_volume};
        state.actuator.speed_cmd = std::min(cfg.dispense_speed, state.actuator.v_max);
        state.stop_pending = false;
        out.commands.emplace_back(proto::DispenseStart{speed_to_wire(state.actuator.speed_cmd)});
    } else if (state.stop_pending) {
        state.stop_pending = false;
        out.commands.emplace_back(proto::DispenseStop{});
    }

    out.record = {state.tick,
                  in.now,
                  in.probe_x,
                  d.event,
                  d.coverage,
                  top ? std::optional(top->confidence) : std::nullopt,
                  state.actuator.stroke,
                  state.actuator.remaining_volume(),
                  std::move(note)};
    ++state.tick;
    out.state = std::move(state);
    return out;
}

/// Device-side actuator update over [now, now + dt]; records when a burst ends.
/// Returns the volume pushed out of the syringe.
inline double advance_actuator(ControllerState& state, double now, double dt) {
    const bool was_dispensing = is_dispensing(state.mode);
    auto step = actuator_step(state.actuator, state.mode, dt);
    state.actuator = step.state;
    state.mode = step.mode;
    if (was_dispensing && !is_dispensing(state.mode)) {
        state.last_dispense_end = now + dt;
        state.stop_pending = true;
    }
    return step.dispensed;
}

/// Operator swapped in a full syringe.
inline proto::DeviceCommand refill(ControllerState& state) {
    state.actuator.stroke = 0.0;
    state.actuator.speed_cmd = 0.0;
    state.mode = Idle{};
    state.stop_pending = false;
    return proto::RefillReset{};
}

}  // namespace gelbot
