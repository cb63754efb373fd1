#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinecurve/midcurve.hpp"

namespace spinecurve {

inline constexpr double kScoliosisThresholdDeg = 6.0;
inline constexpr double kTouchEps = 1e-9;

enum class Side { left, right };

inline const char* side_name(Side s) { return s == Side::left ? "left" : "right"; }

struct CurveSegment {
    double row_a = 0.0;
    double row_b = 0.0;
    Point apex;
    double max_deviation = 0.0;  // perpendicular distance from apex to the baseline line
    double angle_deg = 0.0;
    Side side = Side::right;
};

struct GeometryReport {
    std::vector<CurveSegment> segments;
    double max_angle_deg = 0.0;
    std::string noc_class = "0";
    bool scoliosis_flag = false;
    double max_curvature = 1.0;  // filled by the curvature pass
    std::vector<std::string> quality_warnings;
};

namespace detail {

/// Column of the infinite line through the baseline at the given row.
inline double baseline_col_at(const BaselineSegment& b, double row) {
    const double dr = b.p_bottom.row - b.p_top.row;
    const double dc = b.p_bottom.col - b.p_top.col;
    return b.p_top.col + (row - b.p_top.row) * dc / dr;
}

/// Perpendicular distance scale: column offset times cos(baseline tilt).
inline double perp_per_column(const BaselineSegment& b) {
    const double dr = b.p_bottom.row - b.p_top.row;
    const double dc = b.p_bottom.col - b.p_top.col;
    return dr / std::hypot(dr, dc);
}

}  // namespace detail

/// Rows where the curve meets the line through the baseline, restricted to the
/// baseline's row span.  Sign changes of d(y) = curve_col(y) - baseline_col(y)
/// between integer rows are located by linear interpolation; |d| < 1e-9 counts
/// as touching, one row per touching run; the span boundaries are always
/// reported (virtual intersections when d is nonzero there).
inline std::vector<double> find_intersections(const MidCurve& curve, const BaselineSegment& baseline) {
    const double r_a = baseline.p_top.row;
    const double r_b = baseline.p_bottom.row;
    if (!(r_a < r_b)) throw std::invalid_argument("find_intersections: baseline rows must ascend");
    if (r_a < curve.samples.front().row || r_b > curve.samples.back().row)
        throw std::invalid_argument("find_intersections: baseline outside curve support");

    std::vector<double> ys;
    ys.push_back(r_a);
    for (double y = std::floor(r_a) + 1.0; y < r_b; y += 1.0)
        if (y > r_a) ys.push_back(y);
    ys.push_back(r_b);

    const int n = static_cast<int>(ys.size());
    std::vector<double> d(n);
    std::vector<int> sgn(n);
    for (int i = 0; i < n; ++i) {
        d[i] = eval_curve_at(curve, ys[i]) - detail::baseline_col_at(baseline, ys[i]);
        sgn[i] = std::abs(d[i]) < kTouchEps ? 0 : (d[i] > 0.0 ? 1 : -1);
    }

    std::vector<double> out;
    for (int i = 0; i < n;) {
        if (sgn[i] == 0) {
            int j = i;
            while (j + 1 < n && sgn[j + 1] == 0) ++j;
            if (i == 0) out.push_back(r_a);
            if (j == n - 1) out.push_back(r_b);
            if (i != 0 && j != n - 1) out.push_back(0.5 * (ys[i] + ys[j]));
            i = j + 1;
        } else {
            if (i + 1 < n && sgn[i + 1] == -sgn[i])
                out.push_back(ys[i] + d[i] * (ys[i + 1] - ys[i]) / (d[i] - d[i + 1]));
            ++i;
        }
    }

    if (out.empty() || out.front() != r_a) out.insert(out.begin(), r_a);
    if (out.back() != r_b) out.push_back(r_b);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// |180 deg - inner angle at the apex|, in [0, 180).
inline double measure_angle(const Point& p_a, const Point& p_b, const Point& apex) {
    const double ur = p_a.row - apex.row, uc = p_a.col - apex.col;
    const double vr = p_b.row - apex.row, vc = p_b.col - apex.col;
    if ((ur == 0.0 && uc == 0.0) || (vr == 0.0 && vc == 0.0))
        throw std::invalid_argument("measure_angle: apex coincides with an endpoint");
    const double cross = ur * vc - uc * vr;
    const double dot = ur * vr + uc * vc;
    const double inner = std::atan2(std::abs(cross), dot) * 180.0 / std::numbers::pi;
    return std::abs(180.0 - inner);
}

/// One candidate segment per consecutive intersection pair; the apex is the
/// curve point strictly inside the pair that is furthest (perpendicular) from
/// the baseline line.  Segments below min_deviation are dropped as noise.
inline std::vector<CurveSegment> segment_curves(const MidCurve& curve, const BaselineSegment& baseline,
                                                const std::vector<double>& intersections, double min_deviation = 0.5,
                                                std::vector<std::string>* warnings = nullptr) {
    std::vector<CurveSegment> out;
    const double scale = detail::perp_per_column(baseline);

    for (std::size_t k = 0; k + 1 < intersections.size(); ++k) {
        const double y0 = intersections[k];
        const double y1 = intersections[k + 1];

        // Candidate apexes are the curve's own scanline samples; the distance
        // is affine between samples, so interior maxima occur at samples.
        int best_row = 0;
        double best_dev = -1.0;
        double best_d = 0.0;
        bool tie = false;
        for (double y = std::floor(y0) + 1.0; y < y1; y += 1.0) {
            if (y <= y0) continue;
            const double d = eval_curve_at(curve, y) - detail::baseline_col_at(baseline, y);
            const double dev = std::abs(d) * scale;
            if (dev > best_dev) {
                best_dev = dev;
                best_row = static_cast<int>(y);
                best_d = d;
                tie = false;
            } else if (dev == best_dev) {
                tie = true;  // keep the smaller row
            }
        }
        if (best_dev < 0.0) continue;  // no interior scanline
        if (tie && warnings) warnings->push_back("apex tie between rows, kept the smaller row");
        if (best_dev < min_deviation) continue;

        CurveSegment seg;
        seg.row_a = y0;
        seg.row_b = y1;
        seg.apex = {static_cast<double>(best_row), eval_curve_at(curve, best_row)};
        seg.max_deviation = best_dev;
        seg.side = best_d > 0.0 ? Side::right : Side::left;
        const Point pa{y0, eval_curve_at(curve, y0)};
        const Point pb{y1, eval_curve_at(curve, y1)};
        seg.angle_deg = measure_angle(pa, pb, seg.apex);
        out.push_back(seg);
    }
    return out;
}

/// Derived fields from the segment list; also the entry point for reports
/// assembled from externally constructed segments.
inline GeometryReport finalize_report(std::vector<CurveSegment> segments, std::vector<std::string> warnings = {}) {
    GeometryReport rep;
    rep.segments = std::move(segments);
    rep.quality_warnings = std::move(warnings);
    for (const auto& s : rep.segments) rep.max_angle_deg = std::max(rep.max_angle_deg, s.angle_deg);
    rep.noc_class = rep.segments.empty() ? "0" : (rep.segments.size() == 1 ? "1" : ">1");
    rep.scoliosis_flag = rep.max_angle_deg >= kScoliosisThresholdDeg;
    return rep;
}

inline GeometryReport analyze_dsm(const MidCurve& curve, const BaselineSegment& baseline, double min_deviation = 0.5) {
    std::vector<std::string> warnings = curve.warnings;
    const auto xs = find_intersections(curve, baseline);
    auto segments = segment_curves(curve, baseline, xs, min_deviation, &warnings);
    return finalize_report(std::move(segments), std::move(warnings));
}

/// Convenience form: build the percentile baseline from the curve itself.
inline GeometryReport analyze_dsm(const MidCurve& curve, double lo_pct = 3.0, double hi_pct = 97.0,
                                  double min_deviation = 0.5) {
    return analyze_dsm(curve, build_baseline(curve, lo_pct, hi_pct), min_deviation);
}

}  // namespace spinecurve
