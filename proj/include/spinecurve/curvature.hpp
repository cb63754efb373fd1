#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spinecurve/midcurve.hpp"

namespace spinecurve {

struct DiskSplit {
    Point center;
    double radius = 0.0;
    double area_a = 0.0;  // samples with col < curve col at their row
    double area_b = 0.0;
};

struct ProfileEntry {
    int row = 0;
    double kappa = 1.0;
};

struct CurvatureProfile {
    double probe_radius = 0.0;
    std::vector<ProfileEntry> entries;  // rows strictly increasing
    int valid_row_lo = 0;
    int valid_row_hi = -1;
};

/// Midpoint quadrature of the two disk halves cut by the curve graph.  The
/// sample grid is anchored to the disk center (translation invariance); a
/// sample (r, c) is side A iff c < curve_col(r), side B otherwise.  Each row
/// of samples is counted through index bounds on the two monotone predicates,
/// which reproduces the per-sample double loop exactly.
inline DiskSplit split_disk(const MidCurve& curve, double center_row, double radius, double grid_step = 0.25) {
    if (!(radius > 0.0)) throw std::invalid_argument("split_disk: radius must be > 0");
    if (!(grid_step > 0.0)) throw std::invalid_argument("split_disk: grid_step must be > 0");
    if (center_row - radius < curve.samples.front().row || center_row + radius > curve.samples.back().row)
        throw std::runtime_error("split_disk: insufficient support (disk exceeds curve rows)");

    const double cc = eval_curve_at(curve, center_row);
    const double r2 = radius * radius;
    const double s = grid_step;
    const int m = static_cast<int>(std::ceil(2.0 * radius / s - 1e-9));
    auto offset = [&](int k) { return -radius + (k + 0.5) * s; };

    long long count_a = 0, count_b = 0;
    for (int i = 0; i < m; ++i) {
        const double oi = offset(i);
        if (oi * oi > r2) continue;
        const double x = eval_curve_at(curve, center_row + oi);

        // Inside-disk column range [j0, j1]; the set is contiguous, the
        // estimates land within a couple of indices of the true boundary.
        const double half = std::sqrt(std::max(r2 - oi * oi, 0.0));
        auto inside = [&](int j) {
            const double oj = offset(j);
            return oi * oi + oj * oj <= r2;
        };
        int j0 = std::clamp(static_cast<int>(std::floor((radius - half) / s - 0.5)), 0, m - 1);
        while (j0 > 0 && inside(j0 - 1)) --j0;
        while (j0 < m && !inside(j0)) ++j0;
        if (j0 == m) continue;
        int j1 = std::clamp(static_cast<int>(std::ceil((radius + half) / s - 0.5)), 0, m - 1);
        while (j1 < m - 1 && inside(j1 + 1)) ++j1;
        while (j1 > j0 && !inside(j1)) --j1;

        // First index whose sample column is not left of the curve.
        int jt = std::clamp(static_cast<int>(std::floor((x - cc + radius) / s - 0.5)), 0, m);
        while (jt > 0 && cc + offset(jt - 1) >= x) --jt;
        while (jt < m && cc + offset(jt) < x) ++jt;

        const long long total = j1 - j0 + 1;
        const long long a = std::clamp(static_cast<long long>(jt) - j0, 0LL, total);
        count_a += a;
        count_b += total - a;
    }

    DiskSplit split;
    split.center = {center_row, cc};
    split.radius = radius;
    split.area_a = static_cast<double>(count_a) * (s * s);
    split.area_b = static_cast<double>(count_b) * (s * s);
    return split;
}

/// Ratio of the larger to the smaller side area; always >= 1.
inline double kappa_at(const DiskSplit& split) {
    const double lo = std::min(split.area_a, split.area_b);
    const double hi = std::max(split.area_a, split.area_b);
    if (!(lo > 0.0)) throw std::runtime_error("kappa_at: degenerate split (zero side area)");
    return hi / lo;
}

namespace detail {

/// Median over a window clipped to the sequence; even windows average the two
/// central values.
inline std::vector<double> median_filter(const std::vector<double>& v, int window) {
    const int n = static_cast<int>(v.size());
    const int half = window / 2;
    std::vector<double> out(n);
    std::vector<double> buf;
    for (int i = 0; i < n; ++i) {
        const int a = std::max(0, i - half);
        const int b = std::min(n - 1, i + half);
        buf.assign(v.begin() + a, v.begin() + b + 1);
        std::sort(buf.begin(), buf.end());
        const std::size_t k = buf.size();
        out[i] = (k % 2 == 1) ? buf[k / 2] : 0.5 * (buf[k / 2 - 1] + buf[k / 2]);
    }
    return out;
}

}  // namespace detail

/// Kappa at every integer row at least `radius` away from the curve ends,
/// median-filtered; rows outside the valid range are omitted, never
/// extrapolated.
inline CurvatureProfile curvature_profile(const MidCurve& curve, double radius = 20.0, double grid_step = 0.25,
                                          int smooth_window = 5) {
    if (smooth_window < 1 || smooth_window % 2 == 0)
        throw std::invalid_argument("curvature_profile: smooth_window must be odd and >= 1");
    const int lo = static_cast<int>(std::ceil(curve.samples.front().row + radius));
    const int hi = static_cast<int>(std::floor(curve.samples.back().row - radius));
    if (lo > hi) throw std::runtime_error("curvature_profile: curve too short for radius");

    std::vector<double> raw(hi - lo + 1);
    for (int r = lo; r <= hi; ++r) raw[r - lo] = kappa_at(split_disk(curve, r, radius, grid_step));
    const auto smoothed = detail::median_filter(raw, smooth_window);

    CurvatureProfile profile;
    profile.probe_radius = radius;
    profile.valid_row_lo = lo;
    profile.valid_row_hi = hi;
    profile.entries.reserve(smoothed.size());
    for (int r = lo; r <= hi; ++r) profile.entries.push_back({r, smoothed[r - lo]});
    return profile;
}

inline double max_curvature_score(const CurvatureProfile& profile) {
    if (profile.entries.empty()) throw std::invalid_argument("max_curvature_score: empty profile");
    double best = profile.entries.front().kappa;
    for (const auto& e : profile.entries) best = std::max(best, e.kappa);
    return best;
}

inline int max_curvature_row(const CurvatureProfile& profile) {
    if (profile.entries.empty()) throw std::invalid_argument("max_curvature_row: empty profile");
    const ProfileEntry* best = &profile.entries.front();
    for (const auto& e : profile.entries)
        if (e.kappa > best->kappa) best = &e;
    return best->row;
}

/// Per-scanline heat: spine-supported pixels on row r get the row's kappa
/// mapped linearly to [0, 255].  Relative mode scales by the profile's own
/// (kappa_max - 1); the absolute range serves longitudinal comparison.
inline ScanGrid heatmap_values(const CurvatureProfile& profile, const SoftMask& mask, BodyPart spine_channel,
                               double support_threshold = 0.1,
                               std::optional<std::pair<double, double>> absolute = std::nullopt) {
    ScanGrid heat(mask.rows, mask.cols, 0.0);

    double lo = 1.0, span = 0.0;
    if (absolute) {
        lo = absolute->first;
        span = absolute->second - absolute->first;
        if (!(span > 0.0)) throw std::invalid_argument("heatmap_values: absolute range must have hi > lo");
    } else {
        span = max_curvature_score(profile) - 1.0;
        if (span <= 0.0) return heat;  // flat curve, all-zero map
    }

    const auto& plane = mask.channels[static_cast<int>(spine_channel)];
    for (const auto& e : profile.entries) {
        if (e.row < 0 || e.row >= mask.rows) continue;
        const double v = std::clamp((e.kappa - lo) / span, 0.0, 1.0) * 255.0;
        const float* row = plane.data() + static_cast<std::size_t>(e.row) * mask.cols;
        for (int c = 0; c < mask.cols; ++c)
            if (row[c] >= support_threshold) heat.at(e.row, c) = v;
    }
    return heat;
}

inline void save_profile_csv(const std::string& path, const CurvatureProfile& profile) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open file for writing");
    out << "row,kappa\n";
    char buf[64];
    for (const auto& e : profile.entries) {
        std::snprintf(buf, sizeof buf, "%d,%.6f\n", e.row, e.kappa);
        out << buf;
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace spinecurve
