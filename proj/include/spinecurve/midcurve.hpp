#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinecurve/grid.hpp"

namespace spinecurve {

/// One sub-pixel column per supported scanline; rows ascend by exactly 1.
struct MidCurve {
    std::vector<Point> samples;
    std::vector<std::string> warnings;

    int row_start() const { return static_cast<int>(samples.front().row); }
    int row_end() const { return static_cast<int>(samples.back().row); }
    std::size_t size() const { return samples.size(); }
};

/// Chord of the midcurve between the percentile scanlines; p_top.row < p_bottom.row.
struct BaselineSegment {
    Point p_top;
    Point p_bottom;
};

enum class RefineMode { argmax, parabolic, soft_argmax };

inline RefineMode refine_mode_from_name(std::string_view name) {
    if (name == "argmax") return RefineMode::argmax;
    if (name == "parabolic") return RefineMode::parabolic;
    if (name == "soft_argmax") return RefineMode::soft_argmax;
    throw std::invalid_argument("unknown refinement mode: " + std::string(name));
}

namespace detail {

/// Vertex offset of the parabola through (-1,vm),(0,v0),(1,vp), clamped to
/// [-0.5, 0.5]; 0 when the three points are collinear.  The symmetric forms
/// keep the result exactly mirror-antisymmetric.
inline double parabolic_offset(double vm, double v0, double vp) {
    const double denom = (vm + vp) - 2.0 * v0;
    if (denom == 0.0) return 0.0;
    return std::clamp(0.5 * (vm - vp) / denom, -0.5, 0.5);
}

}  // namespace detail

/// One column per row whose channel maximum reaches support_threshold; the
/// largest contiguous supported block is kept when support is fragmented.
inline MidCurve extract_midcurve(const SoftMask& mask, BodyPart channel, double support_threshold = 0.1,
                                 RefineMode refine = RefineMode::parabolic) {
    if (!(support_threshold >= 0.0 && support_threshold < 1.0))
        throw std::invalid_argument("extract_midcurve: support_threshold must be in [0, 1)");

    const auto& plane = mask.channels[static_cast<int>(channel)];
    const int cols = mask.cols;

    struct RowInfo {
        bool supported = false;
        int argmax = 0;
        int tie_width = 1;
    };
    std::vector<RowInfo> info(mask.rows);
    for (int r = 0; r < mask.rows; ++r) {
        const float* row = plane.data() + static_cast<std::size_t>(r) * cols;
        int best = 0;
        for (int c = 1; c < cols; ++c)
            if (row[c] > row[best]) best = c;  // strict: ties keep the lowest column
        int ties = 0;
        for (int c = 0; c < cols; ++c)
            if (row[c] == row[best]) ++ties;
        info[r] = {row[best] >= support_threshold, best, ties};
    }

    // Largest contiguous supported block; first wins on equal length.
    int best_start = -1, best_len = 0;
    for (int r = 0; r < mask.rows;) {
        if (!info[r].supported) {
            ++r;
            continue;
        }
        int s = r;
        while (r < mask.rows && info[r].supported) ++r;
        if (r - s > best_len) {
            best_len = r - s;
            best_start = s;
        }
    }
    if (best_len == 0) throw std::runtime_error("extract_midcurve: no spine support");

    MidCurve curve;
    curve.samples.reserve(best_len);
    bool wide_tie = false;
    for (int r = best_start; r < best_start + best_len; ++r) {
        const float* row = plane.data() + static_cast<std::size_t>(r) * cols;
        const int am = info[r].argmax;
        if (info[r].tie_width > 3) wide_tie = true;
        double col = am;
        switch (refine) {
            case RefineMode::argmax:
                break;
            case RefineMode::parabolic:
                if (am > 0 && am < cols - 1)
                    col += detail::parabolic_offset(row[am - 1], row[am], row[am + 1]);
                break;
            case RefineMode::soft_argmax: {
                double num = 0.0, den = 0.0;
                for (int c = 0; c < cols; ++c) {
                    num += static_cast<double>(row[c]) * c;
                    den += row[c];
                }
                if (den > 0.0) col = num / den;
                break;
            }
        }
        curve.samples.push_back({static_cast<double>(r), col});
    }
    if (wide_tie) curve.warnings.push_back("argmax tie wider than 3 px");
    return curve;
}

/// Linear interpolation between scanline samples; exact at integer nodes.
inline double eval_curve_at(const MidCurve& curve, double row) {
    if (curve.samples.empty()) throw std::invalid_argument("eval_curve_at: empty curve");
    const double r0 = curve.samples.front().row;
    const double r1 = curve.samples.back().row;
    if (!(row >= r0 && row <= r1))
        throw std::out_of_range("eval_curve_at: row " + std::to_string(row) + " outside [" + std::to_string(r0) +
                                ", " + std::to_string(r1) + "]");
    const double off = row - r0;
    const std::size_t i = std::min(static_cast<std::size_t>(off), curve.samples.size() - 1);
    const double t = off - static_cast<double>(i);
    if (t == 0.0) return curve.samples[i].col;
    return (1.0 - t) * curve.samples[i].col + t * curve.samples[i + 1].col;
}

namespace detail {

/// Nearest-rank percentile over n contiguous rows, as a 0-based offset.
inline int percentile_offset(double pct, int n) {
    const int k = static_cast<int>(std::ceil(pct * n / 100.0 - 1e-12));
    return std::clamp(k, 0, n - 1);
}

}  // namespace detail

inline BaselineSegment build_baseline(const MidCurve& curve, double lo_pct = 3.0, double hi_pct = 97.0) {
    if (curve.samples.size() < 4) throw std::invalid_argument("build_baseline: need at least 4 curve samples");
    if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
        throw std::invalid_argument("build_baseline: need 0 <= lo < hi <= 100");

    const int n = static_cast<int>(curve.samples.size());
    const int lo = detail::percentile_offset(lo_pct, n);
    const int hi = detail::percentile_offset(hi_pct, n);
    if (lo == hi) throw std::runtime_error("build_baseline: degenerate baseline (percentile rows coincide)");
    return {curve.samples[lo], curve.samples[hi]};
}

/// Moving average of the columns; the window is truncated at the ends so the
/// supported row range is preserved.  window 1 is the identity.
inline MidCurve smooth_midcurve(const MidCurve& curve, int window) {
    if (window < 1) throw std::invalid_argument("smooth_midcurve: window must be >= 1");
    MidCurve out = curve;
    const int n = static_cast<int>(curve.samples.size());
    const int half = window / 2;
    for (int i = 0; i < n; ++i) {
        const int a = std::max(0, i - half);
        const int b = std::min(n - 1, i + half);
        double sum = 0.0;
        for (int j = a; j <= b; ++j) sum += curve.samples[j].col;
        out.samples[i].col = sum / (b - a + 1);
    }
    return out;
}

}  // namespace spinecurve
