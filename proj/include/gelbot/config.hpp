#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gelbot/detection.hpp"
#include "gelbot/dispenser.hpp"
#include "gelbot/io.hpp"
#include "gelbot/world.hpp"

namespace gelbot {

enum class StartCondition { Dry, Pregelled };
enum class DetectorKind { Threshold, Oracle };

struct ScanParams {
    double length = 120.0;
    double speed = 10.0;
    double dt = 0.05;
    std::uint64_t max_ticks = 100000;
    StartCondition start = StartCondition::Dry;
    /// Uniform film thickness of a pre-gelled world, mm.
    double pregel_thickness = 3.0;
};

struct WorldParams {
    double cell_size = 1.0;
    /// World extent across the scan axis, mm.
    double lateral = 40.0;
    /// Extra skin beyond the scan end, mm.
    double margin = 20.0;
    double albedo_mean = 0.35;
    double albedo_spread = 0.05;
};

struct ProbeParams {
    /// Footprint extent along the scan axis, mm.
    double footprint_length = 8.0;
    /// Footprint extent across the scan axis, mm.
    double footprint_width = 30.0;
    double nozzle_offset = 5.0;
    /// Strip ahead of the nozzle over which dispensed gel spreads, mm.
    double nozzle_length = 20.0;
};

struct GelParams {
    double carry = 0.3;
    double loss = 0.1;
    double t_couple = 0.2;
};

struct CameraParams {
    RenderParams render;
    /// Camera view length behind the footprint, mm.
    double view_length = 30.0;
    DetectorKind detector = DetectorKind::Threshold;
    ThresholdParams threshold{228, 6};
    /// Film thickness the camera resolves as gel; also the truth threshold for detector scoring, mm.
    double oracle_t_min = 0.8;
    /// Delay between frame capture and delivery of its detection, s.
    double latency = 0.0;
};

struct ActuatorParams {
    double stroke_max = 100.0;
    double v_max = 8.0;
    double piston_diameter = 20.0;
    double reservoir = 30000.0;

    ActuatorState initial_state() const {
        ActuatorState a;
        a.stroke_max = stroke_max;
        a.v_max = v_max;
        a.piston_area = ActuatorState::piston_area_for(piston_diameter);
        a.reservoir_initial = reservoir;
        return a;
    }
};

struct ManualParams {
    double quality_floor = 0.6;
    double halt_duration = 3.0;
    double blob_volume = 1000.0;
    /// Length of skin ahead of the footprint trailing edge that a manual blob covers, mm.
    double blob_length = 45.0;
};

struct SimConfig {
    ScanParams scan;
    WorldParams world;
    ProbeParams probe;
    GelParams gel;
    CameraParams camera;
    ControllerConfig controller;
    ActuatorParams actuator;
    ManualParams manual;

    void validate() const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline double parse_number(std::string_view key, std::string_view v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError("'" + std::string(key) + "': expected a number, got '" + std::string(v) + "'");
    return out;
}

inline std::uint64_t parse_count(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError("'" + std::string(key) + "': expected a non-negative integer, got '" + std::string(v) +
                          "'");
    return out;
}

}  // namespace detail

/// One overridable configuration key.
struct ConfigKey {
    std::string name;
    std::string help;
    std::function<void(SimConfig&, std::string_view)> set;
    std::function<std::string(const SimConfig&)> get;
};

/// Registry of every key accepted in config files and overrides, in file order.
inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        const auto num = [&k](std::string name, std::string help, auto field) {
            k.push_back({name, std::move(help),
                         [field, name](SimConfig& c, std::string_view v) { field(c) = detail::parse_number(name, v); },
                         [field](const SimConfig& c) {
                             return detail::format_double(field(c));
                         }});
        };
        const auto count = [&k](std::string name, std::string help, auto field) {
            k.push_back({name, std::move(help),
                         [field, name](SimConfig& c, std::string_view v) {
                             field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(
                                 detail::parse_count(name, v));
                         },
                         [field](const SimConfig& c) { return std::to_string(field(c)); }});
        };

        num("scan.length_mm", "scan length along the probe axis", [](auto& c) -> auto& { return c.scan.length; });
        num("scan.speed_mm_s", "probe speed", [](auto& c) -> auto& { return c.scan.speed; });
        num("scan.dt_s", "tick length (also the control period)", [](auto& c) -> auto& { return c.scan.dt; });
        count("scan.max_ticks", "tick budget before a run is declared non-terminating",
              [](auto& c) -> auto& { return c.scan.max_ticks; });
        k.push_back({"scan.start", "initial skin state: dry | pregelled",
                     [](SimConfig& c, std::string_view v) {
                         if (v == "dry") c.scan.start = StartCondition::Dry;
                         else if (v == "pregelled") c.scan.start = StartCondition::Pregelled;
                         else throw ConfigError("'scan.start': expected dry or pregelled, got '" + std::string(v) + "'");
                     },
                     [](const SimConfig& c) {
                         return std::string(c.scan.start == StartCondition::Dry ? "dry" : "pregelled");
                     }});
        num("scan.pregel_thickness_mm", "film thickness of a pre-gelled world",
            [](auto& c) -> auto& { return c.scan.pregel_thickness; });

        num("world.cell_size_mm", "grid cell size", [](auto& c) -> auto& { return c.world.cell_size; });
        num("world.lateral_mm", "skin extent across the scan axis",
            [](auto& c) -> auto& { return c.world.lateral; });
        num("world.margin_mm", "skin beyond the scan end", [](auto& c) -> auto& { return c.world.margin; });
        num("world.albedo_mean", "mean skin reflectance", [](auto& c) -> auto& { return c.world.albedo_mean; });
        num("world.albedo_spread", "half-width of the seeded uniform reflectance noise",
            [](auto& c) -> auto& { return c.world.albedo_spread; });

        num("probe.footprint_length_mm", "footprint extent along the scan axis",
            [](auto& c) -> auto& { return c.probe.footprint_length; });
        num("probe.footprint_width_mm", "footprint extent across the scan axis",
            [](auto& c) -> auto& { return c.probe.footprint_width; });
        num("probe.nozzle_offset_mm", "nozzle distance ahead of the footprint leading edge",
            [](auto& c) -> auto& { return c.probe.nozzle_offset; });
        num("probe.nozzle_length_mm", "nozzle deposit strip length",
            [](auto& c) -> auto& { return c.probe.nozzle_length; });

        num("gel.carry_fraction", "film share dragged one cell back per tick under the probe",
            [](auto& c) -> auto& { return c.gel.carry; });
        num("gel.loss_fraction", "film share removed per tick under the probe",
            [](auto& c) -> auto& { return c.gel.loss; });
        num("gel.t_couple_mm", "film thickness needed for acoustic coupling",
            [](auto& c) -> auto& { return c.gel.t_couple; });

        num("camera.mm_per_px", "camera scale", [](auto& c) -> auto& { return c.camera.render.mm_per_px; });
        num("camera.noise_sigma", "pixel noise standard deviation",
            [](auto& c) -> auto& { return c.camera.render.noise_sigma; });
        num("camera.t_sat_mm", "film thickness of saturated gel appearance",
            [](auto& c) -> auto& { return c.camera.render.t_sat; });
        num("camera.gel_gain", "reflectance of saturated gel", [](auto& c) -> auto& {
            return c.camera.render.gel_gain;
        });
        num("camera.view_length_mm", "camera view length behind the footprint",
            [](auto& c) -> auto& { return c.camera.view_length; });
        k.push_back({"camera.detector", "detector: threshold | oracle",
                     [](SimConfig& c, std::string_view v) {
                         if (v == "threshold") c.camera.detector = DetectorKind::Threshold;
                         else if (v == "oracle") c.camera.detector = DetectorKind::Oracle;
                         else throw ConfigError("'camera.detector': expected threshold or oracle, got '" +
                                                std::string(v) + "'");
                     },
                     [](const SimConfig& c) {
                         return std::string(c.camera.detector == DetectorKind::Threshold ? "threshold" : "oracle");
                     }});
        k.push_back({"camera.threshold", "threshold detector intensity cutoff (0..255)",
                     [](SimConfig& c, std::string_view v) {
                         const auto t = detail::parse_count("camera.threshold", v);
                         if (t > 255) throw ConfigError("'camera.threshold': must be <= 255");
                         c.camera.threshold.threshold = static_cast<int>(t);
                     },
                     [](const SimConfig& c) { return std::to_string(c.camera.threshold.threshold); }});
        count("camera.min_blob_px", "smallest blob kept by the threshold detector",
              [](auto& c) -> auto& { return c.camera.threshold.min_area; });
        num("camera.oracle_t_min_mm", "film thickness the oracle detector reports",
            [](auto& c) -> auto& { return c.camera.oracle_t_min; });
        num("camera.latency_s", "delay before a detection reaches the controller",
            [](auto& c) -> auto& { return c.camera.latency; });

        num("controller.tau", "trail coverage needed to count gel as present",
            [](auto& c) -> auto& { return c.controller.tau; });
        num("controller.c_min", "detection confidence floor", [](auto& c) -> auto& { return c.controller.c_min; });
        num("controller.window_len_mm", "trail window length",
            [](auto& c) -> auto& { return c.controller.window_len; });
        num("controller.burst_volume_mm3", "gel volume per dispense burst",
            [](auto& c) -> auto& { return c.controller.burst_volume; });
        num("controller.cooldown_s", "minimum gap between bursts",
            [](auto& c) -> auto& { return c.controller.cooldown; });
        num("controller.stale_after_s", "age beyond which detections are ignored",
            [](auto& c) -> auto& { return c.controller.stale_after; });
        num("controller.dispense_speed_mm_s", "piston speed during a burst",
            [](auto& c) -> auto& { return c.controller.dispense_speed; });

        num("actuator.stroke_max_mm", "actuator travel", [](auto& c) -> auto& { return c.actuator.stroke_max; });
        num("actuator.v_max_mm_s", "actuator top speed", [](auto& c) -> auto& { return c.actuator.v_max; });
        num("actuator.piston_diameter_mm", "syringe piston diameter",
            [](auto& c) -> auto& { return c.actuator.piston_diameter; });
        num("actuator.reservoir_mm3", "syringe fill volume",
            [](auto& c) -> auto& { return c.actuator.reservoir; });

        num("manual.quality_floor", "coupling quality below which the attendant halts",
            [](auto& c) -> auto& { return c.manual.quality_floor; });
        num("manual.halt_duration_s", "duration of a manual halt",
            [](auto& c) -> auto& { return c.manual.halt_duration; });
        num("manual.blob_volume_mm3", "gel volume applied per halt",
            [](auto& c) -> auto& { return c.manual.blob_volume; });
        num("manual.blob_length_mm", "skin length covered by a manual blob",
            [](auto& c) -> auto& { return c.manual.blob_length; });
        return k;
    }();
    return keys;
}

inline const ConfigKey* find_config_key(std::string_view name) {
    for (const auto& k : config_keys())
        if (k.name == name) return &k;
    return nullptr;
}

/// Applies `key=value`; unknown keys are rejected.
inline void apply_override(SimConfig& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' lacks '='");
    const auto key = detail::trim(assignment.substr(0, eq));
    auto value = detail::trim(assignment.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const ConfigKey* k = find_config_key(key);
    if (!k) throw ConfigError("unknown config key '" + std::string(key) + "'");
    k->set(cfg, value);
}

/// Parses the TOML subset used for configs: `[section]` headers, `key = value` lines with
/// numbers, bare words or double-quoted strings, and `#` comments.
inline SimConfig parse_config(std::string_view text, const std::string& origin = "<config>") {
    SimConfig cfg;
    std::string section;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        const auto where = [&] { return origin + ":" + std::to_string(line_no) + ": "; };

        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line = line.substr(0, i);
                break;
            }
        }
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where() + "expected key = value");
        const std::string key = (section.empty() ? "" : section + ".") + std::string(detail::trim(line.substr(0, eq)));
        if (!seen.insert(key).second) throw ConfigError(where() + "duplicate key '" + key + "'");
        try {
            apply_override(cfg, key + "=" + std::string(detail::trim(line.substr(eq + 1))));
        } catch (const ConfigError& e) {
            throw ConfigError(where() + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

inline SimConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse_config(text, path.string());
}

/// Serializes every key, grouped by section, in a form parse_config reads back.
inline std::string to_config_text(const SimConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& k : config_keys()) {
        const auto dot = k.name.find('.');
        const std::string sec = k.name.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out += '\n';
            out += "[" + sec + "]\n";
            section = sec;
        }
        std::string value = k.get(cfg);
        if (k.name == "scan.start" || k.name == "camera.detector") value = "\"" + value + "\"";
        out += k.name.substr(dot + 1) + " = " + value + "  # " + k.help + "\n";
    }
    return out;
}

inline void SimConfig::validate() const {
    const auto check = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("invalid config: " + what);
    };
    check(scan.length > 0.0, "scan.length_mm must be positive");
    check(scan.speed > 0.0, "scan.speed_mm_s must be positive");
    check(scan.dt > 0.0, "scan.dt_s must be positive");
    check(scan.max_ticks > 0, "scan.max_ticks must be positive");
    check(scan.pregel_thickness >= 0.0, "scan.pregel_thickness_mm must be >= 0");
    check(world.cell_size > 0.0, "world.cell_size_mm must be positive");
    check(world.lateral >= probe.footprint_width, "world.lateral_mm must fit the footprint width");
    check(world.margin >= 0.0, "world.margin_mm must be >= 0");
    check(world.albedo_spread >= 0.0 && world.albedo_mean - world.albedo_spread >= 0.0 &&
              world.albedo_mean + world.albedo_spread <= 1.0,
          "albedo range must stay within [0, 1]");
    check(probe.footprint_length > 0.0 && probe.footprint_width > 0.0, "footprint must have positive size");
    check(probe.nozzle_offset >= 0.0 && probe.nozzle_length > 0.0, "nozzle geometry must be non-negative");
    check(gel.carry >= 0.0 && gel.loss >= 0.0 && gel.carry + gel.loss <= 1.0,
          "gel carry and loss fractions must be >= 0 and sum to <= 1");
    check(gel.t_couple > 0.0, "gel.t_couple_mm must be positive");
    check(camera.render.mm_per_px > 0.0, "camera.mm_per_px must be positive");
    check(camera.render.noise_sigma >= 0.0, "camera.noise_sigma must be >= 0");
    check(camera.render.t_sat > 0.0, "camera.t_sat_mm must be positive");
    check(camera.render.gel_gain >= 0.0 && camera.render.gel_gain <= 1.0, "camera.gel_gain must be in [0, 1]");
    check(camera.view_length > 0.0, "camera.view_length_mm must be positive");
    check(camera.latency >= 0.0, "camera.latency_s must be >= 0");
    check(actuator.stroke_max > 0.0 && actuator.v_max > 0.0 && actuator.piston_diameter > 0.0 &&
              actuator.reservoir > 0.0,
          "actuator parameters must be positive");
    check(manual.quality_floor >= 0.0 && manual.quality_floor <= 1.0, "manual.quality_floor must be in [0, 1]");
    check(manual.halt_duration > 0.0, "manual.halt_duration_s must be positive");
    check(manual.blob_volume >= 0.0 && manual.blob_length > 0.0, "manual blob must be non-negative");
    try {
        controller.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace gelbot
