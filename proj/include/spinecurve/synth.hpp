#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spinecurve/dsm.hpp"
#include "spinecurve/grid.hpp"
#include "spinecurve/midcurve.hpp"
#include "spinecurve/rng.hpp"

namespace spinecurve {

enum class ShapeKind { straight, arc, s_curve, vshape, sinusoid, bump };

inline ShapeKind shape_from_name(std::string_view name) {
    if (name == "straight") return ShapeKind::straight;
    if (name == "arc") return ShapeKind::arc;
    if (name == "s_curve") return ShapeKind::s_curve;
    if (name == "vshape") return ShapeKind::vshape;
    if (name == "sinusoid") return ShapeKind::sinusoid;
    if (name == "bump") return ShapeKind::bump;
    throw std::invalid_argument("unknown shape: " + std::string(name));
}

inline const char* shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::straight: return "straight";
        case ShapeKind::arc: return "arc";
        case ShapeKind::s_curve: return "s_curve";
        case ShapeKind::vshape: return "vshape";
        case ShapeKind::sinusoid: return "sinusoid";
        case ShapeKind::bump: return "bump";
    }
    return "?";
}

/// Closed-form spine shapes.  `bump` is a single lobe with independent upper
/// and lower Gaussian widths, which keeps the curve inside the column budget
/// while the apex sits close to one end of the frame.
struct SynthSpec {
    ShapeKind shape = ShapeKind::straight;
    int rows = 416;
    int cols = 128;
    double base_col = 64.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    double arc_radius = 300.0;  // arc
    double apex_offset = 20.0;  // vshape: column offset of the tip
    int apex_row = -1;          // vshape tip / bump center; -1 means rows/2
    double amplitude = 10.0;    // s_curve, sinusoid, bump; sign picks the side
    double wavelength = 0.0;    // sinusoid; 0 means rows-1
    double phase = 0.0;         // sinusoid
    double width_up = 28.0;     // bump: Gaussian width toward smaller rows
    double width_dn = 80.0;     // bump: Gaussian width toward larger rows
};

struct GroundTruth {
    ShapeKind shape = ShapeKind::straight;
    std::function<double(double)> col_at;        // noiseless closed form
    std::function<double(double)> curvature_at;  // geometric curvature, 1/px
    std::vector<double> apex_rows;
    std::vector<double> apex_angles_deg;
    double apex_angle_deg = 0.0;  // max over apexes, 0 if none
    std::string noc_class = "0";
};

namespace detail {

inline int resolved_apex_row(const SynthSpec& spec) {
    return spec.apex_row >= 0 ? spec.apex_row : spec.rows / 2;
}

inline void validate_spec(const SynthSpec& spec) {
    if (spec.rows < 2 || spec.cols < 2) throw std::invalid_argument("synth: rows and cols must be >= 2");
    if (spec.noise_sigma < 0.0) throw std::invalid_argument("synth: noise_sigma must be >= 0");
    const double m = (spec.rows - 1) / 2.0;
    switch (spec.shape) {
        case ShapeKind::arc:
            if (spec.arc_radius < m)
                throw std::invalid_argument("synth: arc would subtend more than 180 degrees (radius < half-span)");
            break;
        case ShapeKind::vshape: {
            const int a = resolved_apex_row(spec);
            if (a <= 0 || a >= spec.rows - 1) throw std::invalid_argument("synth: vshape apex must be interior");
            break;
        }
        case ShapeKind::sinusoid:
            if (spec.wavelength < 0.0) throw std::invalid_argument("synth: wavelength must be >= 0");
            break;
        case ShapeKind::bump:
            if (!(spec.width_up > 0.0) || !(spec.width_dn > 0.0))
                throw std::invalid_argument("synth: bump widths must be > 0");
            break;
        default:
            break;
    }
}

}  // namespace detail

/// Noiseless column of the shape at a (possibly fractional) row.
inline double synth_col(const SynthSpec& spec, double r) {
    const double span = spec.rows - 1;
    switch (spec.shape) {
        case ShapeKind::straight:
            return spec.base_col;
        case ShapeKind::arc: {
            const double m = span / 2.0;
            const double ra = spec.arc_radius;
            return spec.base_col + std::sqrt(ra * ra - (r - m) * (r - m)) - std::sqrt(ra * ra - m * m);
        }
        case ShapeKind::s_curve:
            return spec.base_col + spec.amplitude * std::sin(2.0 * std::numbers::pi * r / span);
        case ShapeKind::vshape: {
            const double a = detail::resolved_apex_row(spec);
            const double t = r <= a ? r / a : (span - r) / (span - a);
            return spec.base_col + spec.apex_offset * t;
        }
        case ShapeKind::sinusoid: {
            const double wl = spec.wavelength > 0.0 ? spec.wavelength : span;
            return spec.base_col + spec.amplitude * std::sin(2.0 * std::numbers::pi * r / wl + spec.phase);
        }
        case ShapeKind::bump: {
            const double u = r - detail::resolved_apex_row(spec);
            const double w = u < 0.0 ? spec.width_up : spec.width_dn;
            return spec.base_col + spec.amplitude * std::exp(-u * u / (2.0 * w * w));
        }
    }
    return spec.base_col;
}

namespace detail {

/// Geometric curvature |x''| / (1 + x'^2)^(3/2) by central differences.
inline double numeric_curvature(const std::function<double(double)>& col, double r, double h = 0.25) {
    const double xm = col(r - h), x0 = col(r), xp = col(r + h);
    const double d1 = (xp - xm) / (2.0 * h);
    const double d2 = (xp - 2.0 * x0 + xm) / (h * h);
    return std::abs(d2) / std::pow(1.0 + d1 * d1, 1.5);
}

/// The DSM construction evaluated on the continuous closed form: percentile
/// baseline over the integer row set, intersections by bisection on a dense
/// grid, apex by dense scan with parabolic refinement.  This defines the
/// ground-truth angle the mask pipeline is asked to reproduce.
struct DenseDsm {
    std::vector<double> apex_rows;
    std::vector<double> angles_deg;
    std::vector<double> deviations;
    double max_angle_deg = 0.0;
    int num_segments = 0;
};

inline DenseDsm dense_dsm_oracle(const std::function<double(double)>& col, int rows, double lo_pct = 3.0,
                                 double hi_pct = 97.0, double min_deviation = 0.5, double step = 1.0 / 16.0) {
    DenseDsm out;
    const double r_lo = percentile_offset(lo_pct, rows);
    const double r_hi = percentile_offset(hi_pct, rows);
    const double c_lo = col(r_lo), c_hi = col(r_hi);
    const double dr = r_hi - r_lo, dc = c_hi - c_lo;
    const double perp = dr / std::hypot(dr, dc);
    auto d = [&](double y) { return col(y) - (c_lo + (y - r_lo) * dc / dr); };

    constexpr double eps = 1e-12;
    std::vector<double> cuts{r_lo};
    double prev_y = r_lo;
    double prev_d = 0.0;  // endpoints lie on the baseline by construction
    for (double y = r_lo + step; y < r_hi - step / 2; y += step) {
        const double dy = d(y);
        if ((prev_d > eps && dy < -eps) || (prev_d < -eps && dy > eps)) {
            double a = prev_y, b = y, da = prev_d;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (a + b);
                const double dm = d(mid);
                if ((da > 0.0) == (dm > 0.0)) {
                    a = mid;
                    da = dm;
                } else {
                    b = mid;
                }
            }
            cuts.push_back(0.5 * (a + b));
        }
        prev_y = y;
        prev_d = dy;
    }
    cuts.push_back(r_hi);

    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double y0 = cuts[k], y1 = cuts[k + 1];
        double best_y = 0.0, best_ad = -1.0;
        for (double y = y0 + step; y < y1; y += step) {
            const double ad = std::abs(d(y));
            if (ad > best_ad) {
                best_ad = ad;
                best_y = y;
            }
        }
        if (best_ad < 0.0) continue;
        const double vm = std::abs(d(best_y - step)), vp = std::abs(d(best_y + step));
        const double denom = (vm + vp) - 2.0 * best_ad;
        if (denom != 0.0) best_y += std::clamp(0.5 * (vm - vp) / denom, -0.5, 0.5) * step;
        const double dev = std::abs(d(best_y)) * perp;
        if (dev < min_deviation) continue;
        out.apex_rows.push_back(best_y);
        out.deviations.push_back(dev);
        out.angles_deg.push_back(measure_angle({y0, col(y0)}, {y1, col(y1)}, {best_y, col(best_y)}));
    }
    out.num_segments = static_cast<int>(out.apex_rows.size());
    for (const double a : out.angles_deg) out.max_angle_deg = std::max(out.max_angle_deg, a);
    return out;
}

inline std::string noc_of(int segments) { return segments == 0 ? "0" : (segments == 1 ? "1" : ">1"); }

inline GroundTruth ground_truth_of_fn(std::function<double(double)> col, int rows, ShapeKind shape) {
    GroundTruth gt;
    gt.shape = shape;
    gt.col_at = col;
    gt.curvature_at = [col](double r) { return numeric_curvature(col, r); };
    const auto dsm = dense_dsm_oracle(col, rows);
    gt.apex_rows = dsm.apex_rows;
    gt.apex_angles_deg = dsm.angles_deg;
    gt.apex_angle_deg = dsm.max_angle_deg;
    gt.noc_class = noc_of(dsm.num_segments);
    return gt;
}

}  // namespace detail

/// Ground truth from the noiseless closed form.  Straight, arc, and vshape
/// use exact geometry; the other shapes use the dense DSM construction.
inline GroundTruth make_ground_truth(const SynthSpec& spec) {
    detail::validate_spec(spec);
    SynthSpec clean = spec;
    clean.noise_sigma = 0.0;
    auto col = [clean](double r) { return synth_col(clean, r); };

    switch (spec.shape) {
        case ShapeKind::straight: {
            GroundTruth gt;
            gt.shape = spec.shape;
            gt.col_at = col;
            gt.curvature_at = [](double) { return 0.0; };
            return gt;
        }
        case ShapeKind::arc: {
            GroundTruth gt;
            gt.shape = spec.shape;
            gt.col_at = col;
            const double ra = spec.arc_radius;
            gt.curvature_at = [ra](double) { return 1.0 / ra; };
            // Inscribed-angle geometry: the DSM angle of an arc is half the
            // central angle between the percentile endpoints, independent of
            // where the apex sits on the arc.
            const double m = (spec.rows - 1) / 2.0;
            const double r_lo = detail::percentile_offset(3.0, spec.rows);
            const double r_hi = detail::percentile_offset(97.0, spec.rows);
            const double theta = std::asin((r_hi - m) / ra) - std::asin((r_lo - m) / ra);
            gt.apex_rows = {m};
            gt.apex_angles_deg = {theta / 2.0 * 180.0 / std::numbers::pi};
            gt.apex_angle_deg = gt.apex_angles_deg[0];
            gt.noc_class = "1";
            return gt;
        }
        case ShapeKind::vshape: {
            GroundTruth gt;
            gt.shape = spec.shape;
            gt.col_at = col;
            gt.curvature_at = [](double) { return 0.0; };  // straight legs; the tip is singular
            const double a = detail::resolved_apex_row(spec);
            const double span = spec.rows - 1;
            const double s1 = std::abs(spec.apex_offset) / a;
            const double s2 = std::abs(spec.apex_offset) / (span - a);
            gt.apex_rows = {a};
            gt.apex_angles_deg = {(std::atan(s1) + std::atan(s2)) * 180.0 / std::numbers::pi};
            gt.apex_angle_deg = gt.apex_angles_deg[0];
            gt.noc_class = "1";
            return gt;
        }
        default:
            return detail::ground_truth_of_fn(col, spec.rows, spec.shape);
    }
}

/// Curve samples at every integer row: closed form plus seeded column noise.
inline std::pair<MidCurve, GroundTruth> generate_curve(const SynthSpec& spec) {
    GroundTruth gt = make_ground_truth(spec);
    Rng rng(spec.seed);
    MidCurve curve;
    curve.samples.reserve(spec.rows);
    for (int r = 0; r < spec.rows; ++r) {
        double c = synth_col(spec, r);
        if (spec.noise_sigma > 0.0) c += spec.noise_sigma * rng.gauss();
        curve.samples.push_back({static_cast<double>(r), c});
    }
    return {std::move(curve), std::move(gt)};
}

namespace detail {

/// Gaussian column profile of the spine channel, peak 1 at the (jittered)
/// curve column; the other channels carry fixed plausible blobs.
inline SoftMask render_mask(const std::function<double(double)>& center_col, int rows, int cols, double noise_sigma,
                            double profile_sigma, Rng& rng) {
    SoftMask mask(rows, cols);
    const double inv2s2 = 1.0 / (2.0 * profile_sigma * profile_sigma);
    for (int r = 0; r < rows; ++r) {
        double center = center_col(r);
        if (noise_sigma > 0.0) center += noise_sigma * rng.gauss();
        for (int c = 0; c < cols; ++c) {
            const double u = c - center;
            mask.at(BodyPart::spine, r, c) = static_cast<float>(std::exp(-u * u * inv2s2));
        }
    }

    // Static anatomy stand-ins; geometry never reads these.
    auto blob = [&](BodyPart part, double cr, double cc, double sr, double sc) {
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const double dr = (r - cr) / sr, dc = (c - cc) / sc;
                const double v = std::exp(-0.5 * (dr * dr + dc * dc));
                auto& cell = mask.channels[static_cast<int>(part)][static_cast<std::size_t>(r) * cols + c];
                cell = std::max(cell, static_cast<float>(v));
            }
    };
    blob(BodyPart::head, 0.04 * rows, 0.5 * cols, 0.03 * rows, 0.15 * cols);
    blob(BodyPart::pelvic_cavity, 0.62 * rows, 0.5 * cols, 0.02 * rows, 0.20 * cols);
    blob(BodyPart::pelvis, 0.66 * rows, 0.5 * cols, 0.02 * rows, 0.25 * cols);
    blob(BodyPart::right_leg, 0.85 * rows, 0.35 * cols, 0.10 * rows, 0.06 * cols);
    blob(BodyPart::left_leg, 0.85 * rows, 0.65 * cols, 0.10 * rows, 0.06 * cols);
    return mask;
}

}  // namespace detail

inline std::pair<SoftMask, GroundTruth> generate_softmask(const SynthSpec& spec, double profile_sigma = 2.0) {
    if (!(profile_sigma > 0.0)) throw std::invalid_argument("generate_softmask: profile_sigma must be > 0");
    GroundTruth gt = make_ground_truth(spec);
    Rng rng(spec.seed);
    SynthSpec clean = spec;
    clean.noise_sigma = 0.0;
    auto center = [clean](double r) { return synth_col(clean, r); };
    SoftMask mask = detail::render_mask(center, spec.rows, spec.cols, spec.noise_sigma, profile_sigma, rng);
    return {std::move(mask), std::move(gt)};
}

// ---------------------------------------------------------------------------
// Corpus generation

struct CorpusSample {
    std::string id;
    char family = 'c';  // 'c' single lobe, 's' two opposed lobes
    double target_angle_deg = 0.0;
    double amplitude = 0.0;
    SoftMask mask;
    GroundTruth gt;
};

namespace detail {

/// Corpus lobe geometry.  Both families share the same main lobe so the
/// curvature-vs-angle relation is one family-independent monotone map; the
/// "S" samples add a smaller opposed lobe mirrored about the frame center.
struct CorpusShape {
    double a1 = 0.0;     // main lobe amplitude (signed)
    double a2 = 0.0;     // counter lobe amplitude (0 for 'c'), opposite sign
    bool flipped = false;  // vertical flip (apex toward the feet)
    int rows = 416;
    double base = 64.0;

    static constexpr double kApexRow = 90.0;
    static constexpr double kWidthNear = 28.0;  // toward the close frame edge
    static constexpr double kWidthFar = 80.0;

    double lobe(double r, double center, double w_up, double w_dn) const {
        const double u = r - center;
        const double w = u < 0.0 ? w_up : w_dn;
        return std::exp(-u * u / (2.0 * w * w));
    }

    double operator()(double r) const {
        const double span = rows - 1;
        if (flipped) r = span - r;
        double c = a1 * lobe(r, kApexRow, kWidthNear, kWidthFar);
        if (a2 != 0.0) c -= a2 * lobe(r, span - kApexRow, kWidthFar, kWidthNear);
        return base + c;
    }
};

inline double corpus_counter_amplitude(double a1) { return std::clamp(0.18 * a1, 0.8, 28.0); }

/// Amplitude for a target dense-DSM angle, by bisection; the angle is
/// monotone in the main amplitude.
inline CorpusShape solve_corpus_shape(char family, double target_deg, bool flipped, double dir, int rows) {
    auto shape_of = [&](double a1) {
        CorpusShape s;
        s.a1 = a1;
        s.a2 = family == 's' ? corpus_counter_amplitude(a1) : 0.0;
        s.flipped = flipped;
        s.rows = rows;
        s.base = 64.0;
        return s;
    };
    auto angle_of = [&](double a1) {
        const CorpusShape s = shape_of(a1);
        return dense_dsm_oracle([&s](double r) { return s(r); }, rows, 3.0, 97.0, 0.5, 0.125).max_angle_deg;
    };

    double lo = 0.05, hi = 70.0;
    for (int it = 0; it < 48; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (angle_of(mid) < target_deg)
            lo = mid;
        else
            hi = mid;
    }
    CorpusShape s = shape_of(0.5 * (lo + hi));

    // Center the column range and apply the left/right coin.
    double cmin = 1e9, cmax = -1e9;
    for (int r = 0; r < rows; ++r) {
        const double c = s(r) - s.base;
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
    }
    if (dir < 0.0) {
        s.a1 = -s.a1;
        s.a2 = -s.a2;
        s.base = 64.0 + (cmin + cmax) / 2.0;
    } else {
        s.base = 64.0 - (cmin + cmax) / 2.0;
    }
    return s;
}

}  // namespace detail

/// n masks with dense-DSM ground-truth angles stratified-uniform over
/// [lo_deg, hi_deg], alternating single-lobe and opposed-lobe topologies,
/// with mirror and vertical-flip coins for diversity.
inline std::vector<CorpusSample> generate_corpus(int n, double lo_deg, double hi_deg, std::uint64_t seed,
                                                 double noise_sigma = 0.3, int rows = 416, int cols = 128,
                                                 double profile_sigma = 2.0) {
    if (n < 1) throw std::invalid_argument("generate_corpus: n must be >= 1");
    if (!(lo_deg <= hi_deg)) throw std::invalid_argument("generate_corpus: need lo <= hi");

    std::vector<CorpusSample> out;
    out.reserve(n);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        CorpusSample sample;
        sample.family = i % 2 == 0 ? 'c' : 's';
        sample.target_angle_deg = lo_deg + (hi_deg - lo_deg) * (i + rng.uniform01()) / n;
        const bool flipped = rng.uniform01() < 0.5;
        const double dir = rng.uniform01() < 0.5 ? 1.0 : -1.0;

        const auto shape = detail::solve_corpus_shape(sample.family, sample.target_angle_deg, flipped, dir, rows);
        sample.amplitude = std::abs(shape.a1);
        auto col = [shape](double r) { return shape(r); };
        sample.gt = detail::ground_truth_of_fn(col, rows, ShapeKind::bump);

        Rng mask_rng(rng.next_u64());
        sample.mask = detail::render_mask(col, rows, cols, noise_sigma, profile_sigma, mask_rng);

        char id[32];
        std::snprintf(id, sizeof id, "synth_%04d%c", i, sample.family);
        sample.id = id;
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace spinecurve
