// gelbot: simulation, evaluation, dataset and serial-protocol tools.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gelbot/config.hpp"
#include "gelbot/eval.hpp"
#include "gelbot/io.hpp"
#include "gelbot/protocol.hpp"
#include "gelbot/sim.hpp"

namespace fs = std::filesystem;
using namespace gelbot;

namespace {

/// Bad invocation or configuration: exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigArgs {
    std::string path;
    std::vector<std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("--config", path, "TOML config file; defaults apply to keys it omits");
        app->add_option("--set", overrides, "Override one config key, key=value (repeatable)")->take_all();
    }

    SimConfig load() const {
        SimConfig cfg = path.empty() ? SimConfig{} : load_config(path);
        for (const auto& o : overrides) apply_override(cfg, o);
        cfg.validate();
        return cfg;
    }
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    const auto num = [&](const std::string& s) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || s.empty() || s[0] == '-') throw UsageError("bad seed '" + s + "' in '" + text + "'");
        return static_cast<std::uint64_t>(v);
    };
    const auto range = text.find("..");
    if (range != std::string::npos) {
        const auto lo = num(text.substr(0, range));
        const auto hi = num(text.substr(range + 2));
        if (lo > hi) throw UsageError("empty seed range '" + text + "'");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
        return seeds;
    }
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        seeds.push_back(num(text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return seeds;
}

void write_text(const fs::path& path, const std::string& text) {
    detail::write_file(path, text);
    spdlog::info("wrote {}", path.string());
}

nlohmann::ordered_json run_json(const RunResult& r) {
    return {{"metrics", to_json(r.metrics)}, {"volume", to_json(r.ledger)}};
}

std::string describe(const proto::Message& m) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, proto::DispenseStart>)
                return "DispenseStart speed_decimm_s=" + std::to_string(v.speed_decimm_s);
            else if constexpr (std::is_same_v<T, proto::DispenseStop>)
                return "DispenseStop";
            else if constexpr (std::is_same_v<T, proto::StatusRequest>)
                return "StatusRequest";
            else if constexpr (std::is_same_v<T, proto::RefillReset>)
                return "RefillReset";
            else
                return "Telemetry stroke_centimm=" + std::to_string(v.stroke_centimm) +
                       " flags=" + std::to_string(v.flags);
        },
        m);
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("gelbot");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("GELBOT_LOG")) {
        const auto level = spdlog::level::from_str(env);
        if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
    }
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"Gel-dispensing controller simulator and tools. Log level from GELBOT_LOG "
                 "(trace, debug, info, warn, error, off)."};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run one scan per policy and write metrics and event logs");
    ConfigArgs sim_cfg;
    sim_cfg.attach(sim);
    std::uint64_t sim_seed = 1;
    std::string sim_policy = "both";
    std::string sim_out;
    sim->add_option("--seed", sim_seed, "World seed")->capture_default_str();
    sim->add_option("--policy", sim_policy, "autonomous, manual or both")
        ->check(CLI::IsMember({"autonomous", "manual", "both"}))
        ->capture_default_str();
    sim->add_option("--out", sim_out, "Output directory")->required();

    // compare
    auto* cmp = app.add_subcommand("compare", "Compare both policies across seeds; writes report.json and table.txt");
    ConfigArgs cmp_cfg;
    cmp_cfg.attach(cmp);
    std::string cmp_seeds = "1..10";
    std::string cmp_out;
    cmp->add_option("--seeds", cmp_seeds, "Seed range a..b or list a,b,c (at least two)")->capture_default_str();
    cmp->add_option("--out", cmp_out, "Output directory")->required();

    // gen-dataset
    auto* gen = app.add_subcommand("gen-dataset", "Write a synthetic detector fixture (PGM frames, labels.csv, dataset.json)");
    FixtureParams fixture;
    std::string gen_out;
    gen->add_option("--seed", fixture.seed, "Fixture seed")->capture_default_str();
    gen->add_option("--frames", fixture.frames, "Number of frames")->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--noise", fixture.render.noise_sigma, "Pixel noise sigma")->check(CLI::NonNegativeNumber)->capture_default_str();
    gen->add_option("--t-min", fixture.t_min, "Film thickness that counts as gel in the labels, mm")->capture_default_str();
    gen->add_option("--out", gen_out, "Output directory")->required();

    // eval-detector
    auto* evd = app.add_subcommand("eval-detector", "Score the threshold detector on a fixture directory");
    ConfigArgs evd_cfg;
    evd_cfg.attach(evd);
    std::string evd_dataset, evd_tune, evd_out;
    std::optional<int> evd_threshold;
    evd->add_option("--dataset", evd_dataset, "Fixture directory to score")->required();
    evd->add_option("--threshold", evd_threshold, "Intensity cutoff; default camera.threshold from the config")
        ->check(CLI::Range(0, 255));
    evd->add_option("--tune-on", evd_tune,
                    "Held-out fixture directory: pick the cutoff there, report untuned and tuned scores");
    evd->add_option("--out", evd_out, "Output directory for scores.json");

    // proto-encode
    auto* enc = app.add_subcommand("proto-encode", "Print the hex frame of one message");
    ConfigArgs enc_cfg;
    enc_cfg.attach(enc);
    std::string enc_kind;
    double enc_speed = 0.0, enc_stroke = 0.0;
    unsigned enc_flags = 0;
    enc->add_option("message", enc_kind, "dispense-start, dispense-stop, status-request, refill-reset or telemetry")
        ->required()
        ->check(CLI::IsMember({"dispense-start", "dispense-stop", "status-request", "refill-reset", "telemetry"}));
    enc->add_option("--speed", enc_speed, "dispense-start piston speed, mm/s")->check(CLI::NonNegativeNumber);
    enc->add_option("--stroke", enc_stroke, "telemetry stroke, mm")->check(CLI::NonNegativeNumber);
    enc->add_option("--flags", enc_flags, "telemetry flags: 1 dispensing, 2 end stop, 4 fault")->check(CLI::Range(0, 255));

    // proto-decode
    auto* dec = app.add_subcommand("proto-decode", "Decode a hex byte stream");
    std::string dec_hex;
    dec->add_option("hex", dec_hex, "Bytes as hex, separators and 0x prefixes allowed")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*sim) {
            const SimConfig cfg = sim_cfg.load();
            fs::create_directories(sim_out);
            nlohmann::ordered_json out{{"seed", sim_seed}};
            for (Policy p : {Policy::Autonomous, Policy::ManualHalt}) {
                if (sim_policy != "both" && sim_policy != to_string(p)) continue;
                const RunResult r = run_scan(p, sim_seed, cfg);
                for (const auto& e : r.events)
                    if (e.kind == SimEventKind::DepositSkipped)
                        spdlog::warn("tick {}: nozzle deposit covered no cell, {} mm^3 held", e.tick, e.value);
                out[std::string(to_string(p))] = run_json(r);
                write_text(fs::path(sim_out) / ("events_" + std::string(to_string(p)) + ".jsonl"), event_log_jsonl(r));
                std::cout << to_string(p) << ": scan_time " << r.metrics.scan_time << " s, mean_quality "
                          << r.metrics.mean_quality << ", halts " << r.metrics.halts << ", bursts " << r.metrics.bursts
                          << "\n";
            }
            write_text(fs::path(sim_out) / "metrics.json", out.dump(2) + "\n");
        } else if (*cmp) {
            const SimConfig cfg = cmp_cfg.load();
            const auto seeds = parse_seeds(cmp_seeds);
            if (seeds.size() < 2) throw UsageError("compare needs at least two seeds");
            const ComparisonReport report = compare_policies(cfg, seeds);
            fs::create_directories(cmp_out);
            const std::string table = format_table(report);
            write_text(fs::path(cmp_out) / "report.json", to_json(report).dump(2) + "\n");
            write_text(fs::path(cmp_out) / "table.txt", table);
            std::cout << table;
        } else if (*gen) {
            write_dataset(gen_out, make_fixture(fixture));
            std::cout << "wrote " << fixture.frames << " frames to " << gen_out << "\n";
        } else if (*evd) {
            const SimConfig cfg = evd_cfg.load();
            ThresholdParams params = cfg.camera.threshold;
            if (evd_threshold) params.threshold = *evd_threshold;
            const Dataset ds = read_dataset(evd_dataset);
            nlohmann::ordered_json out;
            if (!evd_tune.empty()) {
                const TuningReport t =
                    tune_threshold(read_dataset(evd_tune), ds, params, midpoint_threshold(cfg.camera.render, cfg.world.albedo_mean));
                out["tuning"] = {{"untuned_threshold", t.untuned_threshold},
                                 {"untuned_mean_iou", t.untuned_iou},
                                 {"tuned_threshold", t.tuned_threshold},
                                 {"tuning_split_mean_iou", t.tuning_iou},
                                 {"tuned_mean_iou", t.tuned_iou}};
                std::cout << "untuned threshold " << t.untuned_threshold << ": mean IoU " << t.untuned_iou << "\n"
                          << "tuned threshold " << t.tuned_threshold << ": mean IoU " << t.tuned_iou << "\n";
                params.threshold = t.tuned_threshold;
            }
            const IouScores s = evaluate_detector(ds, params);
            nlohmann::ordered_json frames = nlohmann::ordered_json::array();
            for (const auto& f : s.frames) frames.push_back({{"frame_id", f.frame_id}, {"iou", f.iou}, {"predicted", f.predicted}});
            out["threshold"] = params.threshold;
            out["min_area"] = params.min_area;
            out["mean_iou"] = s.mean;
            out["frames"] = std::move(frames);
            std::cout << "threshold " << params.threshold << ": mean IoU " << s.mean << " over " << s.frames.size()
                      << " labeled frames\n";
            if (!evd_out.empty()) {
                fs::create_directories(evd_out);
                write_text(fs::path(evd_out) / "scores.json", out.dump(2) + "\n");
            }
        } else if (*enc) {
            const SimConfig cfg = enc_cfg.load();
            const proto::LinkLimits limits{cfg.actuator.v_max, cfg.actuator.stroke_max};
            proto::Message m;
            if (enc_kind == "dispense-start") {
                const double wire = std::round(enc_speed * 10.0);
                if (wire > 255) throw proto::EncodeError("speed does not fit the 8-bit field");
                m = proto::DispenseStart{static_cast<std::uint8_t>(wire)};
            } else if (enc_kind == "dispense-stop") {
                m = proto::DispenseStop{};
            } else if (enc_kind == "status-request") {
                m = proto::StatusRequest{};
            } else if (enc_kind == "refill-reset") {
                m = proto::RefillReset{};
            } else {
                const double wire = std::round(enc_stroke * 100.0);
                if (wire > 65535) throw proto::EncodeError("stroke does not fit the 16-bit field");
                m = proto::Telemetry{static_cast<std::uint16_t>(wire), static_cast<std::uint8_t>(enc_flags)};
            }
            std::cout << proto::to_hex(proto::encode(m, limits)) << "\n";
        } else if (*dec) {
            std::vector<std::uint8_t> bytes;
            try {
                bytes = proto::from_hex(dec_hex);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            const auto r = proto::decode(bytes);
            for (const auto& m : r.messages) std::cout << "@" << m.offset << " " << describe(m.message) << "\n";
            for (const auto& e : r.errors) std::cout << "@" << e.offset << " error " << proto::to_string(e.kind) << "\n";
            if (!r.remainder.empty()) std::cout << "remainder " << proto::to_hex(r.remainder) << "\n";
        }
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const proto::EncodeError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
