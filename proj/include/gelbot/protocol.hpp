#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

namespace gelbot::proto {

// Frame layout: [0xA5][type][len][payload...][crc8], crc over type..payload.

inline constexpr std::uint8_t kStartOfFrame = 0xA5;

struct DispenseStart {
    /// Piston speed in 0.1 mm/s.
    std::uint8_t speed_decimm_s = 0;
    friend bool operator==(const DispenseStart&, const DispenseStart&) = default;
};
struct DispenseStop {
    friend bool operator==(const DispenseStop&, const DispenseStop&) = default;
};
struct StatusRequest {
    friend bool operator==(const StatusRequest&, const StatusRequest&) = default;
};
struct RefillReset {
    friend bool operator==(const RefillReset&, const RefillReset&) = default;
};

namespace flags {
inline constexpr std::uint8_t kDispensing = 0x01;
inline constexpr std::uint8_t kEndStop = 0x02;
inline constexpr std::uint8_t kFault = 0x04;
inline constexpr std::uint8_t kDefined = kDispensing | kEndStop | kFault;
}  // namespace flags

struct Telemetry {
    /// Piston stroke in 0.01 mm.
    std::uint16_t stroke_centimm = 0;
    std::uint8_t flags = 0;
    friend bool operator==(const Telemetry&, const Telemetry&) = default;
};

using DeviceCommand = std::variant<DispenseStart, DispenseStop, StatusRequest, RefillReset>;
using Message = std::variant<DispenseStart, DispenseStop, StatusRequest, RefillReset, Telemetry>;

enum class MessageType : std::uint8_t {
    DispenseStart = 0x01,
    DispenseStop = 0x02,
    StatusRequest = 0x03,
    RefillReset = 0x04,
    Telemetry = 0x81,
};

/// Payload length for a known type byte.
constexpr std::optional<std::uint8_t> payload_length(std::uint8_t type) {
    switch (static_cast<MessageType>(type)) {
        case MessageType::DispenseStart: return 1;
        case MessageType::DispenseStop:
        case MessageType::StatusRequest:
        case MessageType::RefillReset: return 0;
        case MessageType::Telemetry: return 3;
    }
    return std::nullopt;
}

namespace detail {
constexpr std::array<std::uint8_t, 256> make_crc8_table() {
    std::array<std::uint8_t, 256> table{};
    for (int i = 0; i < 256; ++i) {
        auto c = static_cast<std::uint8_t>(i);
        for (int b = 0; b < 8; ++b) c = static_cast<std::uint8_t>((c & 0x80) ? (c << 1) ^ 0x31 : c << 1);
        table[static_cast<std::size_t>(i)] = c;
    }
    return table;
}
inline constexpr auto kCrc8Table = make_crc8_table();
}  // namespace detail

/// CRC-8, polynomial 0x31, init 0x00, no reflection, no final xor.
constexpr std::uint8_t crc8(std::span<const std::uint8_t> bytes) {
    std::uint8_t crc = 0;
    for (auto b : bytes) crc = detail::kCrc8Table[crc ^ b];
    return crc;
}

/// Device limits that bound encodable field values.
struct LinkLimits {
    double v_max = 8.0;
    double stroke_max = 100.0;
};

class EncodeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::vector<std::uint8_t> encode(const Message& msg, const LinkLimits& limits = {}) {
    std::vector<std::uint8_t> frame{kStartOfFrame, 0, 0};
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DispenseStart>) {
                if (m.speed_decimm_s > 10.0 * limits.v_max)
                    throw EncodeError("DispenseStart speed " + std::to_string(m.speed_decimm_s) +
                                      " exceeds 10*v_max");
                frame[1] = static_cast<std::uint8_t>(MessageType::DispenseStart);
                frame.push_back(m.speed_decimm_s);
            } else if constexpr (std::is_same_v<T, DispenseStop>) {
                frame[1] = static_cast<std::uint8_t>(MessageType::DispenseStop);
            } else if constexpr (std::is_same_v<T, StatusRequest>) {
                frame[1] = static_cast<std::uint8_t>(MessageType::StatusRequest);
            } else if constexpr (std::is_same_v<T, RefillReset>) {
                frame[1] = static_cast<std::uint8_t>(MessageType::RefillReset);
            } else {
                if (m.stroke_centimm > 100.0 * limits.stroke_max)
                    throw EncodeError("Telemetry stroke " + std::to_string(m.stroke_centimm) +
                                      " exceeds 100*stroke_max");
                if (m.flags & ~flags::kDefined) throw EncodeError("Telemetry flags use reserved bits");
                frame[1] = static_cast<std::uint8_t>(MessageType::Telemetry);
                frame.push_back(static_cast<std::uint8_t>(m.stroke_centimm & 0xFF));
                frame.push_back(static_cast<std::uint8_t>(m.stroke_centimm >> 8));
                frame.push_back(m.flags);
            }
        },
        msg);
    frame[2] = static_cast<std::uint8_t>(frame.size() - 3);
    frame.push_back(crc8(std::span(frame).subspan(1)));
    return frame;
}

enum class DecodeError { CrcMismatch, UnknownType, BadLength };

constexpr std::string_view to_string(DecodeError e) {
    switch (e) {
        case DecodeError::CrcMismatch: return "CrcMismatch";
        case DecodeError::UnknownType: return "UnknownType";
        case DecodeError::BadLength: return "BadLength";
    }
    return "?";
}

struct DecodeIssue {
    DecodeError kind;
    /// Offset of the rejected start-of-frame byte.
    std::size_t offset = 0;
    friend bool operator==(const DecodeIssue&, const DecodeIssue&) = default;
};

struct DecodedMessage {
    Message message;
    /// Offset of the frame's start-of-frame byte.
    std::size_t offset = 0;
    friend bool operator==(const DecodedMessage&, const DecodedMessage&) = default;
};

struct DecodeResult {
    std::vector<DecodedMessage> messages;
    std::vector<std::uint8_t> remainder;
    std::vector<DecodeIssue> errors;
};

namespace detail {
inline Message parse_payload(std::uint8_t type, std::span<const std::uint8_t> p) {
    switch (static_cast<MessageType>(type)) {
        case MessageType::DispenseStart: return DispenseStart{p[0]};
        case MessageType::DispenseStop: return DispenseStop{};
        case MessageType::StatusRequest: return StatusRequest{};
        case MessageType::RefillReset: return RefillReset{};
        case MessageType::Telemetry:
            return Telemetry{static_cast<std::uint16_t>(p[0] | (p[1] << 8)), p[2]};
    }
    throw std::logic_error("parse_payload: unknown type");
}
}  // namespace detail

/// Resynchronizing parser. Bytes before a start-of-frame marker are skipped; a rejected
/// frame consumes only its marker byte and records an error. A trailing incomplete frame
/// is returned as the remainder.
inline DecodeResult decode(std::span<const std::uint8_t> stream) {
    DecodeResult out;
    const std::size_t n = stream.size();
    std::size_t i = 0;
    while (i < n) {
        if (stream[i] != kStartOfFrame) {
            ++i;
            continue;
        }
        if (n - i < 3) break;
        const std::uint8_t type = stream[i + 1];
        const std::uint8_t len = stream[i + 2];
        const auto expected = payload_length(type);
        if (!expected) {
            out.errors.push_back({DecodeError::UnknownType, i});
            ++i;
            continue;
        }
        if (len != *expected) {
            out.errors.push_back({DecodeError::BadLength, i});
            ++i;
            continue;
        }
        if (n - i < 4u + len) break;
        if (crc8(stream.subspan(i + 1, 2u + len)) != stream[i + 3 + len]) {
            out.errors.push_back({DecodeError::CrcMismatch, i});
            ++i;
            continue;
        }
        out.messages.push_back({detail::parse_payload(type, stream.subspan(i + 3, len)), i});
        i += 4u + len;
    }
    out.remainder.assign(stream.begin() + static_cast<std::ptrdiff_t>(i), stream.end());
    return out;
}

/// Incremental decoder that carries the partial-frame remainder between feeds.
/// Offsets in results are relative to the start of everything fed so far.
class StreamDecoder {
public:
    DecodeResult feed(std::span<const std::uint8_t> chunk) {
        buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
        DecodeResult r = decode(buffer_);
        for (auto& m : r.messages) m.offset += base_;
        for (auto& e : r.errors) e.offset += base_;
        base_ += buffer_.size() - r.remainder.size();
        buffer_ = std::move(r.remainder);
        r.remainder.clear();
        return r;
    }

    std::span<const std::uint8_t> pending() const { return buffer_; }

private:
    std::vector<std::uint8_t> buffer_;
    std::size_t base_ = 0;
};

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (std::size_t k = 0; k < bytes.size(); ++k) {
        if (k) s += ' ';
        s += digits[bytes[k] >> 4];
        s += digits[bytes[k] & 0xF];
    }
    return s;
}

/// Accepts hex pairs optionally separated by spaces, commas or colons, with optional 0x prefixes.
inline std::vector<std::uint8_t> from_hex(std::string_view text) {
    std::vector<std::uint8_t> out;
    const auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == ' ' || c == ',' || c == ':' || c == '\t' || c == '\n') {
            ++i;
            continue;
        }
        if (c == '0' && i + 1 < text.size() && (text[i + 1] == 'x' || text[i + 1] == 'X')) {
            i += 2;
            continue;
        }
        if (i + 1 >= text.size()) throw std::invalid_argument("from_hex: odd number of digits");
        const int hi = nibble(text[i]);
        const int lo = nibble(text[i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("from_hex: bad digit at " + std::to_string(i));
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
        i += 2;
    }
    return out;
}

}  // namespace gelbot::proto
