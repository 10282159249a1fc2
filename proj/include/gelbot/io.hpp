#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gelbot/detection.hpp"

namespace gelbot {

/// Malformed or unreadable dataset file; carries the path and the byte offset of the problem.
class DatasetError : public std::runtime_error {
public:
    DatasetError(const std::filesystem::path& path, std::size_t offset, const std::string& what)
        : std::runtime_error(path.string() + " @" + std::to_string(offset) + ": " + what),
          path_(path),
          offset_(offset) {}

    const std::filesystem::path& path() const { return path_; }
    std::size_t offset() const { return offset_; }

private:
    std::filesystem::path path_;
    std::size_t offset_;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError(path, 0, "cannot open file");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

}  // namespace detail

/// Binary PGM: "P5\n<width> <height>\n255\n" followed by width*height bytes.
inline std::string encode_pgm(const Frame& frame) {
    if (!frame.valid()) throw std::invalid_argument("encode_pgm: malformed frame");
    std::string out = "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
    out.append(frame.intensity.begin(), frame.intensity.end());
    return out;
}

/// Parses the exact header layout written by encode_pgm. Geometry fields of the returned
/// frame (scale, origin, id, time) are left at defaults for the caller to fill.
inline Frame decode_pgm(std::string_view bytes, const std::filesystem::path& path = "<memory>") {
    std::size_t pos = 0;
    const auto expect = [&](std::string_view lit) {
        if (bytes.substr(pos, lit.size()) != lit)
            throw DatasetError(path, pos, "expected '" + std::string(lit == "\n" ? "\\n" : lit) + "'");
        pos += lit.size();
    };
    const auto number = [&]() {
        std::size_t v = 0;
        const auto* first = bytes.data() + pos;
        const auto res = std::from_chars(first, bytes.data() + bytes.size(), v);
        if (res.ec != std::errc{} || res.ptr == first) throw DatasetError(path, pos, "expected unsigned integer");
        pos += static_cast<std::size_t>(res.ptr - first);
        return v;
    };

    expect("P5");
    expect("\n");
    Frame f;
    f.width = number();
    expect(" ");
    f.height = number();
    expect("\n");
    const std::size_t header_maxval = pos;
    if (number() != 255) throw DatasetError(path, header_maxval, "maxval must be 255");
    expect("\n");
    if (f.height != 0 && f.width > (std::size_t{1} << 32) / f.height)
        throw DatasetError(path, 3, "image dimensions too large");
    const std::size_t need = f.width * f.height;
    if (bytes.size() - pos < need)
        throw DatasetError(path, bytes.size(), "truncated pixel data: need " + std::to_string(need) + " bytes");
    if (bytes.size() - pos > need) throw DatasetError(path, pos + need, "trailing bytes after pixel data");
    f.intensity.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return f;
}

inline void write_pgm(const std::filesystem::path& path, const Frame& frame) {
    detail::write_file(path, encode_pgm(frame));
}

inline Frame read_pgm(const std::filesystem::path& path) { return decode_pgm(detail::read_file(path), path); }

inline constexpr std::string_view kLabelHeader = "frame_id,x_min,y_min,x_max,y_max";

/// Label CSV; truth-empty frames have empty coordinate fields.
inline std::string encode_labels(std::span<const FrameLabel> labels) {
    std::string out(kLabelHeader);
    out += '\n';
    for (const auto& l : labels) {
        out += std::to_string(l.frame_id);
        if (l.truth) {
            for (double v : {l.truth->x_min, l.truth->y_min, l.truth->x_max, l.truth->y_max}) {
                out += ',';
                out += detail::format_double(v);
            }
        } else {
            out += ",,,,";
        }
        out += '\n';
    }
    return out;
}

inline std::vector<FrameLabel> decode_labels(std::string_view text, const std::filesystem::path& path = "<memory>") {
    std::size_t pos = 0;
    const auto next_line = [&]() {
        const std::size_t eol = text.find('\n', pos);
        const std::size_t end = eol == std::string_view::npos ? text.size() : eol;
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const std::size_t start = pos;
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        return std::pair{line, start};
    };

    const auto [header, header_at] = next_line();
    if (header != kLabelHeader) throw DatasetError(path, header_at, "bad label header");

    std::vector<FrameLabel> labels;
    while (pos < text.size()) {
        const auto [line, line_at] = next_line();
        if (line.empty()) continue;
        std::vector<std::pair<std::string_view, std::size_t>> fields;
        std::size_t f = 0;
        while (true) {
            const std::size_t comma = line.find(',', f);
            fields.emplace_back(line.substr(f, comma == std::string_view::npos ? line.size() - f : comma - f),
                                line_at + f);
            if (comma == std::string_view::npos) break;
            f = comma + 1;
        }
        if (fields.size() != 5) throw DatasetError(path, line_at, "expected 5 fields");

        FrameLabel label;
        {
            const auto [s, at] = fields[0];
            const auto res = std::from_chars(s.data(), s.data() + s.size(), label.frame_id);
            if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
                throw DatasetError(path, at, "bad frame_id");
        }
        const bool empty = fields[1].first.empty() && fields[2].first.empty() && fields[3].first.empty() &&
                           fields[4].first.empty();
        if (!empty) {
            double v[4];
            for (int k = 0; k < 4; ++k) {
                const auto [s, at] = fields[k + 1];
                const auto res = std::from_chars(s.data(), s.data() + s.size(), v[k]);
                if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
                    throw DatasetError(path, at, "bad coordinate");
            }
            const Rect r{v[0], v[1], v[2], v[3]};
            if (!r.valid()) throw DatasetError(path, line_at, "inverted rect");
            label.truth = r;
        }
        labels.push_back(label);
    }
    return labels;
}

inline void write_labels(const std::filesystem::path& path, std::span<const FrameLabel> labels) {
    detail::write_file(path, encode_labels(labels));
}

inline std::vector<FrameLabel> read_labels(const std::filesystem::path& path) {
    return decode_labels(detail::read_file(path), path);
}

}  // namespace gelbot
