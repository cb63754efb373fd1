#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spinecurve/grid.hpp"

namespace spinecurve {

enum class ScanFormat { pgm, smask, csv };

inline ScanFormat scan_format_from_name(std::string_view name) {
    if (name == "pgm") return ScanFormat::pgm;
    if (name == "smask") return ScanFormat::smask;
    if (name == "csv") return ScanFormat::csv;
    throw std::invalid_argument("unknown scan format: " + std::string(name));
}

/// Picks the format from the file extension; defaults to csv.
inline ScanFormat scan_format_from_path(std::string_view path) {
    const auto dot = path.rfind('.');
    const std::string_view ext = dot == std::string_view::npos ? "" : path.substr(dot + 1);
    if (ext == "pgm") return ScanFormat::pgm;
    if (ext == "smask") return ScanFormat::smask;
    return ScanFormat::csv;
}

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

inline void write_file(const std::string& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open file for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

[[noreturn]] inline void parse_fail(const std::string& path, std::size_t byte, const std::string& what) {
    throw std::runtime_error(path + ": parse error at byte " + std::to_string(byte) + ": " + what);
}

/// Whitespace/comment-aware token scanner for PGM/PPM headers.
struct PnmScanner {
    const std::string& path;
    std::string_view data;
    std::size_t pos = 0;

    void skip_space_and_comments() {
        while (pos < data.size()) {
            const char c = data[pos];
            if (c == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
    }

    std::string_view token() {
        skip_space_and_comments();
        if (pos >= data.size()) parse_fail(path, pos, "unexpected end of header");
        const std::size_t start = pos;
        while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos])) && data[pos] != '#') ++pos;
        return data.substr(start, pos - start);
    }

    long integer(const char* what) {
        const std::size_t at = (skip_space_and_comments(), pos);
        const std::string_view t = token();
        long v = 0;
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc{} || p != t.data() + t.size()) parse_fail(path, at, std::string("expected integer for ") + what);
        return v;
    }
};

inline void append_f32_le(std::string& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

inline float read_f32_le(const unsigned char* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return std::string(buf, end);
}

inline std::string format_fixed(double v, int places) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", places, v);
    return buf;
}

/// Writes the container: one JSON header line, then one row-major
/// little-endian float32 plane per channel, in header order.
inline void write_smask_container(const std::string& path, int rows, int cols,
                                  const std::vector<std::string>& names,
                                  const std::vector<const std::vector<float>*>& planes) {
    nlohmann::json header;
    header["magic"] = "SMASK1";
    header["rows"] = rows;
    header["cols"] = cols;
    header["channels"] = names;
    header["dtype"] = "float32";

    std::string out = header.dump();
    out.push_back('\n');
    for (const auto* plane : planes)
        for (const float v : *plane) append_f32_le(out, v);
    write_file(path, out);
}

struct SmaskContainer {
    int rows = 0;
    int cols = 0;
    std::vector<std::string> names;
    std::vector<std::vector<float>> planes;
};

inline SmaskContainer read_smask_container(const std::string& path) {
    const std::string data = read_file(path);
    const std::size_t nl = data.find('\n');
    if (nl == std::string::npos) parse_fail(path, data.size(), "missing header line terminator");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(data.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        parse_fail(path, 0, std::string("bad JSON header: ") + e.what());
    }
    if (!header.is_object() || header.value("magic", "") != "SMASK1")
        parse_fail(path, 0, "bad magic, expected SMASK1");
    if (header.value("dtype", "") != "float32") parse_fail(path, 0, "unsupported dtype, expected float32");

    SmaskContainer c;
    c.rows = header.value("rows", 0);
    c.cols = header.value("cols", 0);
    if (c.rows < 1 || c.cols < 1) parse_fail(path, 0, "bad dims in header");
    if (!header.contains("channels") || !header["channels"].is_array())
        parse_fail(path, 0, "missing channels list");
    for (const auto& n : header["channels"]) c.names.push_back(n.get<std::string>());
    if (c.names.empty()) parse_fail(path, 0, "empty channels list");

    const std::size_t plane = static_cast<std::size_t>(c.rows) * c.cols;
    const std::size_t expect = nl + 1 + plane * 4 * c.names.size();
    if (data.size() != expect)
        throw std::runtime_error(path + ": structural error: payload size " + std::to_string(data.size() - nl - 1) +
                                 " bytes, expected " + std::to_string(plane * 4 * c.names.size()));

    const auto* p = reinterpret_cast<const unsigned char*>(data.data()) + nl + 1;
    for (std::size_t ch = 0; ch < c.names.size(); ++ch) {
        std::vector<float> v(plane);
        for (std::size_t i = 0; i < plane; ++i, p += 4) v[i] = read_f32_le(p);
        c.planes.push_back(std::move(v));
    }
    return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PGM

/// Parses P2 (ASCII) and P5 (binary) with maxval up to 65535; P5 samples are
/// big-endian when maxval > 255.
inline ScanGrid load_pgm(const std::string& path) {
    const std::string data = detail::read_file(path);
    detail::PnmScanner sc{path, data};
    const std::string_view magic = sc.token();
    if (magic != "P2" && magic != "P5") detail::parse_fail(path, 0, "expected PGM magic P2 or P5");
    const long cols = sc.integer("width");
    const long rows = sc.integer("height");
    const long maxval = sc.integer("maxval");
    if (cols < 1 || rows < 1) detail::parse_fail(path, sc.pos, "non-positive dimensions");
    if (maxval < 1 || maxval > 65535) detail::parse_fail(path, sc.pos, "maxval out of range [1, 65535]");

    ScanGrid grid(static_cast<int>(rows), static_cast<int>(cols));
    const std::size_t n = grid.values.size();
    if (magic == "P2") {
        for (std::size_t i = 0; i < n; ++i) {
            const long v = sc.integer("sample");
            if (v < 0 || v > maxval) detail::parse_fail(path, sc.pos, "sample out of range");
            grid.values[i] = static_cast<double>(v);
        }
    } else {
        if (sc.pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[sc.pos])))
            detail::parse_fail(path, sc.pos, "expected single whitespace before P5 payload");
        std::size_t pos = sc.pos + 1;
        const int bytes = maxval > 255 ? 2 : 1;
        if (data.size() - pos < n * bytes)
            detail::parse_fail(path, data.size(), "truncated P5 payload");
        const auto* p = reinterpret_cast<const unsigned char*>(data.data()) + pos;
        for (std::size_t i = 0; i < n; ++i) {
            long v;
            if (bytes == 1) {
                v = p[i];
            } else {
                v = (static_cast<long>(p[2 * i]) << 8) | p[2 * i + 1];
            }
            if (v > maxval) detail::parse_fail(path, pos + i * bytes, "sample out of range");
            grid.values[i] = static_cast<double>(v);
        }
    }
    return grid;
}

/// Samples are rounded to nearest and clamped into [0, maxval].
inline void save_pgm(const std::string& path, const ScanGrid& grid, long maxval = 255, bool binary = true) {
    if (maxval < 1 || maxval > 65535) throw std::invalid_argument("save_pgm: maxval out of range [1, 65535]");
    auto quantize = [&](double v) {
        const long q = std::lround(v);
        return std::clamp(q, 0L, maxval);
    };
    std::string out = binary ? "P5\n" : "P2\n";
    out += std::to_string(grid.cols) + " " + std::to_string(grid.rows) + "\n" + std::to_string(maxval) + "\n";
    if (binary) {
        for (const double v : grid.values) {
            const long q = quantize(v);
            if (maxval > 255) out.push_back(static_cast<char>((q >> 8) & 0xff));
            out.push_back(static_cast<char>(q & 0xff));
        }
    } else {
        for (int r = 0; r < grid.rows; ++r) {
            for (int c = 0; c < grid.cols; ++c) {
                if (c) out.push_back(' ');
                out += std::to_string(quantize(grid.at(r, c)));
            }
            out.push_back('\n');
        }
    }
    detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// CSV

/// Comma separators, LF rows.  Numbers printed in shortest round-trip form.
inline void save_csv(const std::string& path, const ScanGrid& grid) {
    std::string out;
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            if (c) out.push_back(',');
            out += detail::format_double(grid.at(r, c));
        }
        out.push_back('\n');
    }
    detail::write_file(path, out);
}

inline ScanGrid load_csv(const std::string& path) {
    const std::string data = detail::read_file(path);
    std::vector<std::vector<double>> rows;
    std::size_t pos = 0;
    while (pos < data.size()) {
        std::size_t eol = data.find('\n', pos);
        if (eol == std::string::npos) eol = data.size();
        std::string_view line(data.data() + pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) {
            std::vector<double> vals;
            std::size_t fp = 0;
            while (true) {
                std::size_t comma = line.find(',', fp);
                const std::string_view field = line.substr(fp, comma == std::string_view::npos ? comma : comma - fp);
                double v = 0.0;
                const auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
                if (ec != std::errc{} || p != field.data() + field.size())
                    detail::parse_fail(path, pos + fp, "expected number");
                vals.push_back(v);
                if (comma == std::string_view::npos) break;
                fp = comma + 1;
            }
            if (!rows.empty() && vals.size() != rows.front().size())
                throw std::runtime_error(path + ": structural error: row " + std::to_string(rows.size() + 1) +
                                         " has " + std::to_string(vals.size()) + " fields, expected " +
                                         std::to_string(rows.front().size()));
            rows.push_back(std::move(vals));
        }
        pos = eol + 1;
    }
    if (rows.empty()) throw std::runtime_error(path + ": structural error: no data rows");

    ScanGrid grid(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) grid.at(r, c) = rows[r][c];
    return grid;
}

// ---------------------------------------------------------------------------
// .smask container

inline void save_softmask(const std::string& path, const SoftMask& mask) {
    std::vector<std::string> names;
    std::vector<const std::vector<float>*> planes;
    for (int ch = 0; ch < kChannelCount; ++ch) {
        names.emplace_back(kChannelNames[ch]);
        planes.push_back(&mask.channels[ch]);
    }
    detail::write_smask_container(path, mask.rows, mask.cols, names, planes);
}

/// Values drifting past [0,1] by at most 1e-6 are clamped; anything further is
/// an error rather than a silent clamp.
inline SoftMask load_softmask(const std::string& path) {
    auto c = detail::read_smask_container(path);
    if (c.names.size() != kChannelCount)
        throw std::runtime_error(path + ": expected 6 channels, got " + std::to_string(c.names.size()));
    for (int ch = 0; ch < kChannelCount; ++ch)
        if (c.names[ch] != kChannelNames[ch])
            throw std::runtime_error(path + ": channel " + std::to_string(ch) + " named '" + c.names[ch] +
                                     "', expected '" + std::string(kChannelNames[ch]) + "'");

    SoftMask mask(c.rows, c.cols);
    for (int ch = 0; ch < kChannelCount; ++ch) {
        auto& plane = c.planes[ch];
        for (std::size_t i = 0; i < plane.size(); ++i) {
            const float v = plane[i];
            if (!(v >= -1e-6f && v <= 1.0f + 1e-6f))
                throw std::runtime_error(path + ": channel '" + c.names[ch] + "' value " + std::to_string(v) +
                                         " at index " + std::to_string(i) + " out of [0,1]");
            plane[i] = std::clamp(v, 0.0f, 1.0f);
        }
        mask.channels[ch] = std::move(plane);
    }
    return mask;
}

/// Single-channel scan in the same container (channel name "intensity").
inline void save_scan_smask(const std::string& path, const ScanGrid& grid) {
    std::vector<float> plane(grid.values.size());
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = static_cast<float>(grid.values[i]);
    detail::write_smask_container(path, grid.rows, grid.cols, {"intensity"}, {&plane});
}

inline ScanGrid load_scan_smask(const std::string& path) {
    auto c = detail::read_smask_container(path);
    if (c.names.size() != 1)
        throw std::runtime_error(path + ": structural error: expected 1 channel for a scan, got " +
                                 std::to_string(c.names.size()));
    ScanGrid grid(c.rows, c.cols);
    for (std::size_t i = 0; i < grid.values.size(); ++i) grid.values[i] = c.planes[0][i];
    return grid;
}

inline ScanGrid load_scan(const std::string& path, ScanFormat format) {
    switch (format) {
        case ScanFormat::pgm: return load_pgm(path);
        case ScanFormat::smask: return load_scan_smask(path);
        case ScanFormat::csv: return load_csv(path);
    }
    throw std::logic_error("load_scan: bad format enum");
}

inline void save_scan(const std::string& path, const ScanGrid& grid, ScanFormat format) {
    switch (format) {
        case ScanFormat::pgm: save_pgm(path, grid); return;
        case ScanFormat::smask: save_scan_smask(path, grid); return;
        case ScanFormat::csv: save_csv(path, grid); return;
    }
    throw std::logic_error("save_scan: bad format enum");
}

// ---------------------------------------------------------------------------
// Curve and profile CSV

/// Rows "row,col"; col printed with 6 decimal places (sub-pixel precision).
inline void save_curve_csv(const std::string& path, const std::vector<Point>& points) {
    std::string out = "row,col\n";
    for (const auto& p : points) {
        const double ri = std::round(p.row);
        out += (ri == p.row) ? detail::format_double(ri) : detail::format_fixed(p.row, 6);
        out.push_back(',');
        out += detail::format_fixed(p.col, 6);
        out.push_back('\n');
    }
    detail::write_file(path, out);
}

inline std::vector<std::pair<double, double>> load_pairs_csv(const std::string& path) {
    std::string data = detail::read_file(path);
    std::vector<std::pair<double, double>> out;
    std::size_t pos = 0;
    bool first = true;
    while (pos < data.size()) {
        std::size_t eol = data.find('\n', pos);
        if (eol == std::string::npos) eol = data.size();
        std::string_view line(data.data() + pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) {
            const std::size_t comma = line.find(',');
            if (comma == std::string_view::npos)
                detail::parse_fail(path, pos, "expected two comma-separated fields");
            double a = 0.0, b = 0.0;
            const auto fa = line.substr(0, comma);
            const auto fb = line.substr(comma + 1);
            const auto [pa, ea] = std::from_chars(fa.data(), fa.data() + fa.size(), a);
            const auto [pb, eb] = std::from_chars(fb.data(), fb.data() + fb.size(), b);
            const bool numeric = ea == std::errc{} && pa == fa.data() + fa.size() && eb == std::errc{} &&
                                 pb == fb.data() + fb.size();
            if (!numeric) {
                if (first) {
                    first = false;  // header line
                    pos = eol + 1;
                    continue;
                }
                detail::parse_fail(path, pos, "expected two numbers");
            }
            out.emplace_back(a, b);
        }
        first = false;
        pos = eol + 1;
    }
    return out;
}

inline std::vector<Point> load_curve_csv(const std::string& path) {
    std::vector<Point> pts;
    for (const auto& [r, c] : load_pairs_csv(path)) pts.push_back({r, c});
    return pts;
}

// ---------------------------------------------------------------------------
// PPM heat rendering

/// Fixed ramp black -> red -> yellow -> white for t in [0, 1].
inline std::array<unsigned char, 3> heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    double r, g, b;
    if (t < 1.0 / 3.0) {
        r = 3.0 * t;
        g = 0.0;
        b = 0.0;
    } else if (t < 2.0 / 3.0) {
        r = 1.0;
        g = 3.0 * t - 1.0;
        b = 0.0;
    } else {
        r = 1.0;
        g = 1.0;
        b = 3.0 * t - 2.0;
    }
    auto q = [](double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    return {q(r), q(g), q(b)};
}

/// Binary PPM of the heat values, optionally alpha-composited over a
/// grayscale underlay (underlay normalized by its own maximum).
inline void save_heat_ppm(const std::string& path, const ScanGrid& heat, const ScanGrid* underlay = nullptr) {
    if (underlay && (underlay->rows != heat.rows || underlay->cols != heat.cols))
        throw std::invalid_argument("save_heat_ppm: underlay dims must match heat dims");
    double umax = 0.0;
    if (underlay)
        for (const double v : underlay->values) umax = std::max(umax, v);

    std::string out = "P6\n" + std::to_string(heat.cols) + " " + std::to_string(heat.rows) + "\n255\n";
    for (int r = 0; r < heat.rows; ++r) {
        for (int c = 0; c < heat.cols; ++c) {
            const double t = std::clamp(heat.at(r, c), 0.0, 1.0);
            const auto [cr, cg, cb] = heat_color(t);
            double pr = cr, pg = cg, pb = cb;
            if (underlay) {
                const double gray = umax > 0.0 ? 255.0 * underlay->at(r, c) / umax : 0.0;
                pr = (1.0 - t) * gray + t * cr;
                pg = (1.0 - t) * gray + t * cg;
                pb = (1.0 - t) * gray + t * cb;
            }
            auto q = [](double v) { return static_cast<char>(std::lround(std::clamp(v, 0.0, 255.0))); };
            out.push_back(q(pr));
            out.push_back(q(pg));
            out.push_back(q(pb));
        }
    }
    detail::write_file(path, out);
}

}  // namespace spinecurve
