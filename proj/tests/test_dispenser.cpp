#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gelbot/dispenser.hpp"

using namespace gelbot;

namespace {

ActuatorState actuator(double diameter = 20.0) {
    ActuatorState a;
    a.piston_area = ActuatorState::piston_area_for(diameter);
    a.reservoir_initial = 1e9;  // end stop is the only limit unless a test says otherwise
    return a;
}

Detection covering(const Rect& r, double conf) { return {r, conf, 0, 0.0}; }

const Rect kTrail{30, 0, 45, 20};

}  // namespace

TEST(Actuator, PistonDispenseExample) {
    ActuatorState a = actuator(20.0);
    a.speed_cmd = 4.0;
    const auto s = actuator_step(a, Dispensing{1e6}, 0.5);
    const double area = 3.14159265358979323846 * 20.0 * 20.0 / 4.0;
    EXPECT_NEAR(s.state.stroke, 2.0, 1e-12);
    EXPECT_NEAR(s.dispensed, area * 2.0, 1e-9);
    EXPECT_NEAR(s.dispensed, 628.319, 1e-3);
    EXPECT_TRUE(is_dispensing(s.mode));
}

TEST(Actuator, IdleAndEmptyDoNotMove) {
    ActuatorState a = actuator();
    a.speed_cmd = 4.0;
    for (DispenserMode m : {DispenserMode{Idle{}}, DispenserMode{Empty{}}}) {
        const auto s = actuator_step(a, m, 3.0);
        EXPECT_EQ(s.state.stroke, a.stroke);
        EXPECT_EQ(s.dispensed, 0.0);
        EXPECT_EQ(s.mode, m);
    }
}

TEST(Actuator, ClampsAtEndStop) {
    ActuatorState a = actuator();
    a.stroke = a.stroke_max - 0.1;
    a.speed_cmd = 4.0;
    const auto s = actuator_step(a, Dispensing{1e6}, 1.0);
    EXPECT_EQ(s.state.stroke, a.stroke_max);
    EXPECT_NEAR(s.dispensed, 0.1 * a.piston_area, 1e-9);
    EXPECT_TRUE(std::holds_alternative<Empty>(s.mode));
    EXPECT_EQ(s.state.speed_cmd, 0.0);
}

TEST(Actuator, ReservoirLimitsStroke) {
    ActuatorState a;  // defaults: 30,000 mm^3 reservoir, area ~314 mm^2
    EXPECT_NEAR(a.stroke_limit(), 30000.0 / a.piston_area, 1e-12);
    EXPECT_LT(a.stroke_limit(), a.stroke_max);
    a.stroke = a.stroke_limit() - 0.01;
    a.speed_cmd = 8.0;
    const auto s = actuator_step(a, Dispensing{1e6}, 0.05);
    EXPECT_TRUE(std::holds_alternative<Empty>(s.mode));
    EXPECT_NEAR(s.state.remaining_volume(), 0.0, 1e-9);
}

TEST(Actuator, SpeedCappedAtVmax) {
    ActuatorState a = actuator();
    a.speed_cmd = 50.0;
    const auto s = actuator_step(a, Dispensing{1e6}, 1.0);
    EXPECT_NEAR(s.state.stroke, a.v_max, 1e-12);
}

TEST(Actuator, BurstCompletesToIdle) {
    ActuatorState a = actuator();
    a.speed_cmd = 8.0;
    DispenserMode m = Dispensing{500.0};
    double total = 0.0;
    int steps = 0;
    while (is_dispensing(m)) {
        auto s = actuator_step(a, m, 0.05);
        a = s.state;
        m = s.mode;
        total += s.dispensed;
        ++steps;
    }
    EXPECT_TRUE(std::holds_alternative<Idle>(m));
    EXPECT_EQ(steps, static_cast<int>(std::ceil(500.0 / (a.piston_area * 8.0 * 0.05))));
    EXPECT_GE(total, 500.0);
    EXPECT_EQ(a.speed_cmd, 0.0);
}

TEST(Actuator, NonPositiveDtRejected) {
    EXPECT_THROW(actuator_step(actuator(), Idle{}, 0.0), std::invalid_argument);
}

TEST(ActuatorProperties, StrokeMonotoneAndVolumeAccounted) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> speed(0.0, 12.0), dt(0.01, 0.3), burst(50, 3000);
    ActuatorState a;
    DispenserMode m = Idle{};
    double dispensed = 0.0;
    for (int k = 0; k < 5000; ++k) {
        if (!is_dispensing(m) && !std::holds_alternative<Empty>(m)) {
            m = Dispensing{burst(rng)};
            a.speed_cmd = speed(rng);
        }
        const double before = a.stroke;
        const auto s = actuator_step(a, m, dt(rng));
        ASSERT_GE(s.state.stroke, before);
        ASSERT_LE(s.state.stroke, a.stroke_limit());
        a = s.state;
        m = s.mode;
        dispensed += s.dispensed;
    }
    EXPECT_TRUE(std::holds_alternative<Empty>(m));
    EXPECT_NEAR(a.reservoir_initial - a.remaining_volume(), dispensed, 1e-6);
}

TEST(Decide, GelPresentIsNoAction) {
    const auto d = decide(covering({0, 0, 100, 20}, 0.95), kTrail, {}, Idle{}, 1e5, 10.0, std::nullopt);
    EXPECT_EQ(d.event, DecisionEvent::NoAction);
    EXPECT_FALSE(d.gel_absent);
    EXPECT_DOUBLE_EQ(*d.coverage, 1.0);
}

TEST(Decide, NoDetectionStartsBurst) {
    EXPECT_EQ(decide(std::nullopt, kTrail, {}, Idle{}, 1e5, 10.0, 5.0).event, DecisionEvent::StartBurst);
    EXPECT_EQ(decide(std::nullopt, kTrail, {}, Idle{}, 1e5, 0.0, std::nullopt).event, DecisionEvent::StartBurst);
}

TEST(Decide, EmptyReservoirRaisesRefill) {
    EXPECT_EQ(decide(std::nullopt, kTrail, {}, Idle{}, 0.0, 10.0, std::nullopt).event, DecisionEvent::RefillAlert);
    EXPECT_EQ(decide(std::nullopt, kTrail, {}, Empty{}, 1e5, 10.0, std::nullopt).event, DecisionEvent::RefillAlert);
    EXPECT_EQ(decide(std::nullopt, kTrail, {}, Idle{}, 499.0, 10.0, std::nullopt).event, DecisionEvent::RefillAlert);
}

TEST(Decide, LowConfidenceOrCoverageCountsAsAbsent) {
    ControllerConfig cfg;
    EXPECT_EQ(decide(covering({0, 0, 100, 20}, 0.01), kTrail, cfg, Idle{}, 1e5, 10, std::nullopt).event,
              DecisionEvent::StartBurst);
    // covers 7 of 15 mm of the trail
    EXPECT_EQ(decide(covering({0, 0, 37, 20}, 1.0), kTrail, cfg, Idle{}, 1e5, 10, std::nullopt).event,
              DecisionEvent::StartBurst);
    // covers 8 of 15
    EXPECT_EQ(decide(covering({0, 0, 38, 20}, 1.0), kTrail, cfg, Idle{}, 1e5, 10, std::nullopt).event,
              DecisionEvent::NoAction);
}

TEST(Decide, CooldownRespected) {
    ControllerConfig cfg;
    EXPECT_EQ(decide(std::nullopt, kTrail, cfg, Idle{}, 1e5, 10.5, 10.0).event, DecisionEvent::NoAction);
    EXPECT_EQ(decide(std::nullopt, kTrail, cfg, Idle{}, 1e5, 11.0, 10.0).event, DecisionEvent::StartBurst);
    // tick-derived times: 43 * 0.05 - 23 * 0.05 falls just short of 1.0 in binary
    ASSERT_LT(43 * 0.05 - 23 * 0.05, 1.0);
    EXPECT_EQ(decide(std::nullopt, kTrail, cfg, Idle{}, 1e5, 43 * 0.05, 23 * 0.05).event, DecisionEvent::StartBurst);
}

TEST(Decide, NoTrailOrBusyIsNoAction) {
    EXPECT_EQ(decide(std::nullopt, std::nullopt, {}, Idle{}, 1e5, 10, std::nullopt).event, DecisionEvent::NoAction);
    EXPECT_EQ(decide(std::nullopt, kTrail, {}, Dispensing{100}, 1e5, 10, std::nullopt).event, DecisionEvent::NoAction);
}

TEST(ControllerConfig, Validation) {
    EXPECT_NO_THROW(ControllerConfig{}.validate());
    ControllerConfig c;
    c.tau = 1.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.cooldown = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.c_min = -0.1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

namespace {

ControlInputs inputs(double now, std::optional<FrameResult> latest = std::nullopt) {
    const Rect fp{50, 5, 58, 35};
    return {50, fp, Direction::Forward, {0, 0, 200, 40}, std::move(latest), now};
}

}  // namespace

TEST(ControlTick, StartBurstEmitsDispenseStart) {
    ControllerState st;
    const ControllerConfig cfg;
    const auto out = control_tick(inputs(0.0), st, cfg);
    ASSERT_EQ(out.commands.size(), 1u);
    EXPECT_EQ(out.commands[0], proto::DeviceCommand{proto::DispenseStart{speed_to_wire(cfg.dispense_speed)}});
    EXPECT_TRUE(is_dispensing(out.state.mode));
    EXPECT_EQ(out.record.decision, DecisionEvent::StartBurst);
    EXPECT_EQ(out.state.tick, 1u);
}

TEST(ControlTick, StaleDetectionIgnored) {
    const ControllerConfig cfg;
    const FrameResult fresh{1, 0.0, Detection{{0, 0, 200, 40}, 1.0, 1, 0.0}};
    ControllerState st;
    auto out = control_tick(inputs(0.1, fresh), st, cfg);
    EXPECT_EQ(out.record.decision, DecisionEvent::NoAction);
    EXPECT_TRUE(out.record.note.empty());

    out = control_tick(inputs(0.3, fresh), st, cfg);
    EXPECT_EQ(out.record.note, "stale");
    EXPECT_EQ(out.record.decision, DecisionEvent::StartBurst);
}

TEST(ControlTick, MalformedDetectionIgnored) {
    const FrameResult bad{1, 0.0, Detection{{0, 0, 200, 40}, 1.5, 1, 0.0}};
    const auto out = control_tick(inputs(0.0, bad), ControllerState{}, ControllerConfig{});
    EXPECT_EQ(out.record.note, "malformed");
    EXPECT_EQ(out.record.decision, DecisionEvent::StartBurst);
}

TEST(ControlTick, StopSentAfterBurstEnds) {
    ControllerConfig cfg;
    ControllerState st;
    double now = 0.0;
    const double dt = 0.05;
    auto out = control_tick(inputs(now), st, cfg);
    st = out.state;
    int ticks = 0;
    while (is_dispensing(st.mode)) {
        advance_actuator(st, now, dt);
        now += dt;
        ++ticks;
    }
    EXPECT_TRUE(st.stop_pending);
    ASSERT_TRUE(st.last_dispense_end);
    EXPECT_NEAR(*st.last_dispense_end, now, 1e-12);
    const FrameResult wet{9, now, Detection{{0, 0, 200, 40}, 1.0, 9, now}};
    out = control_tick(inputs(now, wet), st, cfg);
    ASSERT_EQ(out.commands.size(), 1u);
    EXPECT_EQ(out.commands[0], proto::DeviceCommand{proto::DispenseStop{}});
    EXPECT_FALSE(out.state.stop_pending);
}

TEST(ControlTick, RefillResetsStroke) {
    ControllerState st;
    st.actuator.stroke = st.actuator.stroke_limit();
    st.mode = Empty{};
    const auto out = control_tick(inputs(0.0), st, ControllerConfig{});
    EXPECT_EQ(out.record.decision, DecisionEvent::RefillAlert);
    EXPECT_TRUE(out.commands.empty());
    st = out.state;
    EXPECT_EQ(refill(st), proto::DeviceCommand{proto::RefillReset{}});
    EXPECT_EQ(st.actuator.stroke, 0.0);
    EXPECT_TRUE(std::holds_alternative<Idle>(st.mode));
}

TEST(SpeedToWire, RoundsAndSaturates) {
    EXPECT_EQ(speed_to_wire(2.0), 20);
    EXPECT_EQ(speed_to_wire(0.04), 0);
    EXPECT_EQ(speed_to_wire(0.06), 1);
    EXPECT_EQ(speed_to_wire(1000), 255);
    EXPECT_EQ(speed_to_wire(-3), 0);
}
