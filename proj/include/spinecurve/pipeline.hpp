#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

#include "spinecurve/curvature.hpp"
#include "spinecurve/dsm.hpp"
#include "spinecurve/grid.hpp"
#include "spinecurve/midcurve.hpp"

namespace spinecurve {

inline constexpr int kReportSchemaVersion = 1;

/// Mask-to-report settings.  The two smoothing windows are deliberately
/// separate: angle measurement wants a light touch so apex geometry
/// survives, while the curvature probe is anchored to single-row curve
/// columns and needs residual extraction noise well below the probe scale.
struct AnalyzeConfig {
    BodyPart channel = BodyPart::spine;
    double support_threshold = 0.1;
    RefineMode refine = RefineMode::parabolic;
    int smooth_window = 11;
    int kappa_smooth_window = 31;
    double lo_pct = 3.0;
    double hi_pct = 97.0;
    double min_deviation = 0.5;
    double probe_radius = 20.0;
    double grid_step = 0.25;
    int profile_median_window = 5;
};

struct AnalysisResult {
    GeometryReport report;     // max_curvature filled from the profile
    MidCurve curve;            // the angle-path curve (smoothed)
    CurvatureProfile profile;  // trimmed of end-window artifacts
    int max_curvature_row = 0;
};

inline AnalysisResult analyze_mask(const SoftMask& mask, const AnalyzeConfig& cfg = {}) {
    if (cfg.smooth_window < 1 || cfg.smooth_window % 2 == 0 || cfg.kappa_smooth_window < 1 ||
        cfg.kappa_smooth_window % 2 == 0)
        throw std::invalid_argument("analyze_mask: smoothing windows must be odd and >= 1");

    const MidCurve raw = extract_midcurve(mask, cfg.channel, cfg.support_threshold, cfg.refine);

    AnalysisResult out;
    out.curve = smooth_midcurve(raw, cfg.smooth_window);
    out.report = analyze_dsm(out.curve, cfg.lo_pct, cfg.hi_pct, cfg.min_deviation);

    // Truncated moving-average windows bend the curve within half a window
    // of each end; drop profile rows whose probe disk reaches into them.
    const MidCurve kappa_curve = smooth_midcurve(raw, cfg.kappa_smooth_window);
    CurvatureProfile profile =
        curvature_profile(kappa_curve, cfg.probe_radius, cfg.grid_step, cfg.profile_median_window);
    const int guard = cfg.kappa_smooth_window / 2;
    const int keep_lo = profile.valid_row_lo + guard;
    const int keep_hi = profile.valid_row_hi - guard;
    if (keep_lo > keep_hi)
        throw std::runtime_error("analyze_mask: curve too short for the curvature probe and smoothing");
    std::erase_if(profile.entries, [&](const ProfileEntry& e) { return e.row < keep_lo || e.row > keep_hi; });
    profile.valid_row_lo = keep_lo;
    profile.valid_row_hi = keep_hi;

    out.report.max_curvature = max_curvature_score(profile);
    out.max_curvature_row = max_curvature_row(profile);
    out.profile = std::move(profile);
    return out;
}

namespace detail {

inline nlohmann::json segment_to_json(const CurveSegment& s) {
    return {{"row_a", s.row_a},
            {"row_b", s.row_b},
            {"apex", {{"row", s.apex.row}, {"col", s.apex.col}}},
            {"max_deviation_px", s.max_deviation},
            {"angle_deg", s.angle_deg},
            {"side", side_name(s.side)}};
}

}  // namespace detail

inline nlohmann::json report_to_json(const std::string& scan_id, const AnalysisResult& r) {
    nlohmann::json segments = nlohmann::json::array();
    for (const auto& s : r.report.segments) segments.push_back(detail::segment_to_json(s));
    return {{"schema_version", kReportSchemaVersion},
            {"scan_id", scan_id},
            {"segments", std::move(segments)},
            {"max_angle_deg", r.report.max_angle_deg},
            {"noc_class", r.report.noc_class},
            {"scoliosis_flag", r.report.scoliosis_flag},
            {"max_curvature", r.report.max_curvature},
            {"max_curvature_row", r.max_curvature_row},
            {"curvature",
             {{"probe_radius", r.profile.probe_radius},
              {"row_lo", r.profile.valid_row_lo},
              {"row_hi", r.profile.valid_row_hi}}},
            {"quality_warnings", r.report.quality_warnings}};
}

}  // namespace spinecurve
