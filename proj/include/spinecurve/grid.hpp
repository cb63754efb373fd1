#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spinecurve {

struct Point {
    double row = 0.0;
    double col = 0.0;
};

/// Row-major grid of non-negative intensities (arbitrary units).
struct ScanGrid {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    ScanGrid() = default;
    ScanGrid(int r, int c, double fill = 0.0)
        : rows(r), cols(c), values(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
        if (r < 1 || c < 1) throw std::invalid_argument("ScanGrid: rows and cols must be >= 1");
    }

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

inline constexpr int kChannelCount = 6;

enum class BodyPart : int {
    head = 0,
    spine = 1,
    pelvic_cavity = 2,
    pelvis = 3,
    right_leg = 4,
    left_leg = 5,
};

inline constexpr std::array<std::string_view, kChannelCount> kChannelNames = {
    "head", "spine", "pelvic_cavity", "pelvis", "right_leg", "left_leg"};

inline BodyPart body_part_from_name(std::string_view name) {
    for (int i = 0; i < kChannelCount; ++i)
        if (kChannelNames[i] == name) return static_cast<BodyPart>(i);
    throw std::invalid_argument("unknown channel name: " + std::string(name));
}

/// Per-scanline probability mask, one channel per body part, values in [0, 1].
/// Channels are stored as float32 so the on-disk container round-trips exactly.
struct SoftMask {
    int rows = 0;
    int cols = 0;
    std::array<std::vector<float>, kChannelCount> channels;

    SoftMask() = default;
    SoftMask(int r, int c) : rows(r), cols(c) {
        if (r < 1 || c < 1) throw std::invalid_argument("SoftMask: rows and cols must be >= 1");
        for (auto& ch : channels) ch.assign(static_cast<std::size_t>(r) * c, 0.0f);
    }

    float& at(BodyPart ch, int r, int c) {
        return channels[static_cast<int>(ch)][static_cast<std::size_t>(r) * cols + c];
    }
    float at(BodyPart ch, int r, int c) const {
        return channels[static_cast<int>(ch)][static_cast<std::size_t>(r) * cols + c];
    }
};

struct CropOffsets {
    int top = 0;
    int bottom = 0;
    int left = 0;   // negative means columns were zero-padded instead of cropped
    int right = 0;
};

/// Transform from original scan coordinates to the canonical 416x128 frame.
/// Rows top/bottom are removed before scaling (empty-row trim, original
/// coordinates); columns left/right are removed after scaling (centering,
/// canonical coordinates, negative = padding).  Point maps use the
/// pixel-center convention so forward followed by inverse is exact.
struct CanonicalFrame {
    static constexpr int kRows = 416;
    static constexpr int kCols = 128;

    double scale_factor = 1.0;
    CropOffsets crop;

    Point to_canonical(const Point& p) const {
        return {(p.row - crop.top + 0.5) * scale_factor - 0.5,
                (p.col + 0.5) * scale_factor - 0.5 - crop.left};
    }

    Point to_original(const Point& p) const {
        return {(p.row + 0.5) / scale_factor - 0.5 + crop.top,
                (p.col + crop.left + 0.5) / scale_factor - 0.5};
    }
};

/// Strips leading/trailing rows whose maximum intensity is <= threshold.
inline std::pair<ScanGrid, CropOffsets> trim_empty_rows(const ScanGrid& scan, double threshold = 0.0) {
    if (threshold < 0.0) throw std::invalid_argument("trim_empty_rows: threshold must be >= 0");
    auto row_max = [&](int r) {
        double m = 0.0;
        for (int c = 0; c < scan.cols; ++c) m = std::max(m, scan.at(r, c));
        return m;
    };
    int top = 0;
    while (top < scan.rows && row_max(top) <= threshold) ++top;
    if (top == scan.rows) throw std::runtime_error("trim_empty_rows: empty scan (all rows below threshold)");
    int bottom = 0;
    while (bottom < scan.rows - top && row_max(scan.rows - 1 - bottom) <= threshold) ++bottom;

    ScanGrid out(scan.rows - top - bottom, scan.cols);
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) = scan.at(r + top, c);
    return {std::move(out), CropOffsets{top, bottom, 0, 0}};
}

/// Bilinear sample with border clamp, pixel-center convention.
inline double bilinear_at(const ScanGrid& g, double row, double col) {
    const double r = std::clamp(row, 0.0, static_cast<double>(g.rows - 1));
    const double c = std::clamp(col, 0.0, static_cast<double>(g.cols - 1));
    const int r0 = std::min(static_cast<int>(r), g.rows - 2 >= 0 ? g.rows - 2 : 0);
    const int c0 = std::min(static_cast<int>(c), g.cols - 2 >= 0 ? g.cols - 2 : 0);
    const int r1 = std::min(r0 + 1, g.rows - 1);
    const int c1 = std::min(c0 + 1, g.cols - 1);
    const double tr = r - r0;
    const double tc = c - c0;
    return (1.0 - tr) * ((1.0 - tc) * g.at(r0, c0) + tc * g.at(r0, c1)) +
           tr * ((1.0 - tc) * g.at(r1, c0) + tc * g.at(r1, c1));
}

/// Isotropic rescale of a trimmed scan to 416 rows (bilinear), then symmetric
/// center-crop or zero-pad of the columns to 128.  The returned frame maps
/// points of the *input* scan into the canonical frame.
inline std::pair<ScanGrid, CanonicalFrame> normalize_height(const ScanGrid& scan) {
    if (scan.rows < 2 || scan.cols < 2)
        throw std::invalid_argument("normalize_height: degenerate input dims");

    const double scale = static_cast<double>(CanonicalFrame::kRows) / scan.rows;
    const int scaled_cols = static_cast<int>(std::lround(scan.cols * scale));

    ScanGrid scaled(CanonicalFrame::kRows, std::max(scaled_cols, 1));
    for (int r = 0; r < scaled.rows; ++r) {
        const double src_r = (r + 0.5) / scale - 0.5;
        for (int c = 0; c < scaled.cols; ++c) {
            const double src_c = (c + 0.5) / scale - 0.5;
            scaled.at(r, c) = bilinear_at(scan, src_r, src_c);
        }
    }

    const int excess = scaled.cols - CanonicalFrame::kCols;
    const int left = excess >= 0 ? excess / 2 : -((-excess) / 2);
    const int right = excess - left;

    ScanGrid out(CanonicalFrame::kRows, CanonicalFrame::kCols);
    for (int r = 0; r < out.rows; ++r) {
        for (int c = 0; c < out.cols; ++c) {
            const int src = c + left;
            out.at(r, c) = (src >= 0 && src < scaled.cols) ? scaled.at(r, src) : 0.0;
        }
    }

    CanonicalFrame frame;
    frame.scale_factor = scale;
    frame.crop = CropOffsets{0, 0, left, right};
    return {std::move(out), frame};
}

/// Trim plus height normalization; the frame carries both transforms.
inline std::pair<ScanGrid, CanonicalFrame> canonicalize(const ScanGrid& scan, double trim_threshold = 0.0) {
    auto [trimmed, offsets] = trim_empty_rows(scan, trim_threshold);
    auto [canonical, frame] = normalize_height(trimmed);
    frame.crop.top = offsets.top;
    frame.crop.bottom = offsets.bottom;
    return {std::move(canonical), frame};
}

}  // namespace spinecurve
