#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "spinecurve/curvature.hpp"
#include "spinecurve/rng.hpp"
#include "spinecurve/synth.hpp"

using namespace spinecurve;

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Reference implementation: visit every sample of the bounding square and
/// classify it directly.  split_disk must reproduce these counts bit for bit.
DiskSplit naive_split(const MidCurve& curve, double center_row, double radius, double grid_step) {
    const double cc = eval_curve_at(curve, center_row);
    const double r2 = radius * radius;
    const double s = grid_step;
    const int m = static_cast<int>(std::ceil(2.0 * radius / s - 1e-9));
    long long count_a = 0, count_b = 0;
    for (int i = 0; i < m; ++i) {
        const double oi = -radius + (i + 0.5) * s;
        if (oi * oi > r2) continue;
        const double x = eval_curve_at(curve, center_row + oi);
        for (int j = 0; j < m; ++j) {
            const double oj = -radius + (j + 0.5) * s;
            if (!(oi * oi + oj * oj <= r2)) continue;
            if (cc + oj < x) ++count_a;
            else ++count_b;
        }
    }
    DiskSplit split;
    split.center = {center_row, cc};
    split.radius = radius;
    split.area_a = static_cast<double>(count_a) * (s * s);
    split.area_b = static_cast<double>(count_b) * (s * s);
    return split;
}

MidCurve straight_curve(int rows, double col) {
    MidCurve c;
    for (int r = 0; r < rows; ++r) c.samples.push_back({static_cast<double>(r), col});
    return c;
}

/// Area of a probe disk of radius r centered on a circle of radius R, on the
/// side interior to that circle (circle-circle intersection at distance R).
double lens_area(double R, double r) {
    const double d = R;
    return r * r * std::acos((d * d + r * r - R * R) / (2.0 * d * r)) +
           R * R * std::acos((d * d + R * R - r * r) / (2.0 * d * R)) -
           0.5 * std::sqrt((-d + r + R) * (d + r - R) * (d - r + R) * (d + r + R));
}

}  // namespace

TEST_CASE("a straight curve splits every disk into exact halves") {
    const MidCurve curve = straight_curve(200, 64.0);
    for (const double radius : {5.0, 10.0, 12.5, 20.0}) {
        const DiskSplit split = split_disk(curve, 100.0, radius);
        REQUIRE(split.area_a == split.area_b);  // the sample grid is mirror symmetric
        const double total = split.area_a + split.area_b;
        // Counting error shrinks with the lattice radius; small disks are coarser.
        REQUIRE_THAT(total, Catch::Matchers::WithinRel(kPi * radius * radius, radius < 10.0 ? 0.01 : 0.005));
        REQUIRE(kappa_at(split) == 1.0);
    }
}

TEST_CASE("index-bound counting equals the per-sample reference loop") {
    Rng rng(41);
    for (int iter = 0; iter < 60; ++iter) {
        MidCurve curve;
        double col = rng.uniform(40.0, 90.0);
        const double slope = rng.uniform(-0.8, 0.8);
        for (int r = 0; r < 120; ++r) {
            curve.samples.push_back({static_cast<double>(r), col});
            col += slope + rng.uniform(-1.5, 1.5);
        }
        const double radius = rng.uniform(3.0, 14.0);
        const double steps[] = {0.25, 0.2, 0.125, 0.37};
        const double s = steps[iter % 4];
        const double cr = rng.uniform(radius + 0.5, 119.0 - radius - 0.5);

        const DiskSplit fast = split_disk(curve, cr, radius, s);
        const DiskSplit ref = naive_split(curve, cr, radius, s);
        REQUIRE(fast.area_a == ref.area_a);
        REQUIRE(fast.area_b == ref.area_b);
    }
}

TEST_CASE("disk split on an arc matches the circle-intersection closed form") {
    SynthSpec spec;
    spec.shape = ShapeKind::arc;
    spec.arc_radius = 100.0;
    spec.rows = 161;
    auto [curve, gt] = generate_curve(spec);

    const DiskSplit split = split_disk(curve, 80.0, 20.0);
    const double inner = std::min(split.area_a, split.area_b);
    REQUIRE_THAT(inner, Catch::Matchers::WithinRel(lens_area(100.0, 20.0), 0.005));

    // First-order theory: kappa ~ 1 + 4 r / (3 pi R).
    const double kappa = kappa_at(split);
    REQUIRE_THAT(kappa, Catch::Matchers::WithinAbs(1.0 + 4.0 * 20.0 / (3.0 * kPi * 100.0), 0.01));

    // Tighter curves score higher at the same probe radius.
    SynthSpec wide = spec;
    wide.arc_radius = 200.0;
    auto [curve2, gt2] = generate_curve(wide);
    REQUIRE(kappa > kappa_at(split_disk(curve2, 80.0, 20.0)));
}

TEST_CASE("halving the quadrature step barely moves the areas") {
    SynthSpec spec;
    spec.shape = ShapeKind::arc;
    spec.arc_radius = 150.0;
    spec.rows = 161;
    auto [curve, gt] = generate_curve(spec);
    const DiskSplit coarse = split_disk(curve, 80.0, 20.0, 0.25);
    const DiskSplit fine = split_disk(curve, 80.0, 20.0, 0.125);
    REQUIRE_THAT(coarse.area_a, Catch::Matchers::WithinRel(fine.area_a, 0.002));
    REQUIRE_THAT(coarse.area_b, Catch::Matchers::WithinRel(fine.area_b, 0.002));
}

TEST_CASE("split rejects degenerate arguments and short curves") {
    const MidCurve curve = straight_curve(40, 10.0);
    REQUIRE_THROWS(split_disk(curve, 20.0, 0.0));
    REQUIRE_THROWS(split_disk(curve, 20.0, 5.0, 0.0));
    REQUIRE_THROWS(split_disk(curve, 2.0, 5.0));    // disk hangs over the top
    REQUIRE_THROWS(split_disk(curve, 38.0, 5.0));   // and over the bottom
}

TEST_CASE("kappa is the larger over the smaller side") {
    DiskSplit split;
    split.area_a = 200.0;
    split.area_b = 100.0;
    REQUIRE(kappa_at(split) == 2.0);
    std::swap(split.area_a, split.area_b);
    REQUIRE(kappa_at(split) == 2.0);
    split.area_a = 0.0;
    REQUIRE_THROWS(kappa_at(split));
}

TEST_CASE("median filter averages the two middle values on clipped windows") {
    const std::vector<double> v{5, 1, 9, 3, 7};
    const auto out = detail::median_filter(v, 3);
    REQUIRE(out == std::vector<double>{3, 5, 3, 7, 5});
    REQUIRE(detail::median_filter(v, 1) == v);
}

TEST_CASE("profile covers exactly the rows a full disk fits on") {
    const MidCurve curve = straight_curve(416, 64.0);
    const CurvatureProfile profile = curvature_profile(curve, 20.0);
    REQUIRE(profile.valid_row_lo == 20);
    REQUIRE(profile.valid_row_hi == 395);
    REQUIRE(profile.entries.size() == 376);
    REQUIRE(profile.entries.front().row == 20);
    REQUIRE(profile.entries.back().row == 395);
    for (const auto& e : profile.entries) REQUIRE_THAT(e.kappa, Catch::Matchers::WithinAbs(1.0, 1e-9));

    REQUIRE_THROWS(curvature_profile(curve, 20.0, 0.25, 4));  // even window
    REQUIRE_THROWS_WITH(curvature_profile(straight_curve(30, 64.0), 20.0),
                        Catch::Matchers::ContainsSubstring("too short"));
}

TEST_CASE("constant-curvature input yields a near-constant profile") {
    SynthSpec spec;
    spec.shape = ShapeKind::arc;
    spec.arc_radius = 300.0;
    spec.rows = 416;
    auto [curve, gt] = generate_curve(spec);
    const CurvatureProfile profile = curvature_profile(curve, 20.0);
    double lo = 1e9, hi = -1e9;
    for (const auto& e : profile.entries) {
        lo = std::min(lo, e.kappa);
        hi = std::max(hi, e.kappa);
    }
    REQUIRE(hi <= lo * 1.02);
    REQUIRE(lo > 1.01);  // visibly above the straight-line floor
}

TEST_CASE("an S curve shows one curvature peak per lobe at the analytic apex rows") {
    SynthSpec spec;
    spec.shape = ShapeKind::s_curve;
    spec.amplitude = 20.0;
    spec.rows = 416;
    auto [curve, gt] = generate_curve(spec);
    const CurvatureProfile profile = curvature_profile(curve, 20.0);

    // Lobe apexes of sin(2 pi r / 415) sit at r = 103.75 and 311.25.  The
    // kappa peak is quadratically flat there, so quadrature quantization can
    // move the argmax by a handful of rows.
    int best_top = 0, best_bot = 0;
    double top = -1.0, bot = -1.0;
    for (const auto& e : profile.entries) {
        if (e.row < 208 && e.kappa > top) { top = e.kappa; best_top = e.row; }
        if (e.row >= 208 && e.kappa > bot) { bot = e.kappa; best_bot = e.row; }
    }
    REQUIRE(std::abs(best_top - 103.75) <= 8.0);
    REQUIRE(std::abs(best_bot - 311.25) <= 8.0);
}

TEST_CASE("a tighter sinusoid localizes its curvature peaks sharply") {
    SynthSpec spec;
    spec.shape = ShapeKind::sinusoid;
    spec.amplitude = 20.0;
    spec.wavelength = 200.0;
    spec.rows = 416;
    auto [curve, gt] = generate_curve(spec);
    const CurvatureProfile profile = curvature_profile(curve, 20.0);

    // sin(2 pi r / 200) peaks at rows 50, 150, 250, 350.
    for (const double apex : {50.0, 150.0, 250.0, 350.0}) {
        int best = 0;
        double top = -1.0;
        for (const auto& e : profile.entries)
            if (std::abs(e.row - apex) <= 50.0 && e.kappa > top) { top = e.kappa; best = e.row; }
        REQUIRE(std::abs(best - apex) <= 3.0);
    }
}

TEST_CASE("integer row shifts leave disk splits bit identical") {
    Rng rng(42);
    MidCurve curve;
    for (int r = 0; r < 100; ++r) curve.samples.push_back({static_cast<double>(r), 50.0 + rng.uniform(-3.0, 3.0)});
    MidCurve shifted = curve;
    for (auto& p : shifted.samples) p.row += 17.0;

    for (const double cr : {25.0, 40.5, 61.25}) {
        const DiskSplit a = split_disk(curve, cr, 14.0);
        const DiskSplit b = split_disk(shifted, cr + 17.0, 14.0);
        REQUIRE(a.area_a == b.area_a);
        REQUIRE(a.area_b == b.area_b);
    }
}

TEST_CASE("column translation and mirroring act on splits as expected") {
    Rng rng(43);
    MidCurve curve;
    for (int r = 0; r < 100; ++r) curve.samples.push_back({static_cast<double>(r), 50.0 + rng.uniform(-3.0, 3.0)});

    MidCurve moved = curve;
    for (auto& p : moved.samples) p.col += 5.25;
    MidCurve mirrored = curve;
    for (auto& p : mirrored.samples) p.col = 127.0 - p.col;

    const DiskSplit a = split_disk(curve, 50.0, 14.0);
    const DiskSplit t = split_disk(moved, 50.0, 14.0);
    const DiskSplit m = split_disk(mirrored, 50.0, 14.0);
    REQUIRE_THAT(t.area_a, Catch::Matchers::WithinAbs(a.area_a, 1e-9));
    REQUIRE_THAT(t.area_b, Catch::Matchers::WithinAbs(a.area_b, 1e-9));
    REQUIRE_THAT(m.area_a, Catch::Matchers::WithinAbs(a.area_b, 1e-9));
    REQUIRE_THAT(m.area_b, Catch::Matchers::WithinAbs(a.area_a, 1e-9));
}

TEST_CASE("score helpers pick the profile maximum") {
    CurvatureProfile profile;
    profile.entries = {{20, 1.0}, {21, 1.3}, {22, 1.1}};
    REQUIRE(max_curvature_score(profile) == 1.3);
    REQUIRE(max_curvature_row(profile) == 21);
    profile.entries.push_back({23, 1.3});
    REQUIRE(max_curvature_row(profile) == 21);  // first of equals
    profile.entries.clear();
    REQUIRE_THROWS(max_curvature_score(profile));
    REQUIRE_THROWS(max_curvature_row(profile));
}

TEST_CASE("flat profiles map to an all-zero heat grid") {
    SynthSpec spec;
    spec.rows = 416;
    auto [mask, gt] = generate_softmask(spec);
    MidCurve curve = extract_midcurve(mask, BodyPart::spine, 0.1);
    const CurvatureProfile profile = curvature_profile(curve, 20.0);
    const ScanGrid heat = heatmap_values(profile, mask, BodyPart::spine);
    for (const double v : heat.values) REQUIRE(v == 0.0);
}

TEST_CASE("relative heat peaks at full brightness on the max-curvature row") {
    SynthSpec spec;
    spec.shape = ShapeKind::bump;
    spec.amplitude = 18.0;
    spec.rows = 416;
    auto [mask, gt] = generate_softmask(spec);
    MidCurve curve = extract_midcurve(mask, BodyPart::spine, 0.1, RefineMode::parabolic);
    const CurvatureProfile profile = curvature_profile(curve, 20.0);
    const ScanGrid heat = heatmap_values(profile, mask, BodyPart::spine);

    const int peak_row = max_curvature_row(profile);
    double peak = 0.0, overall = 0.0;
    for (int c = 0; c < heat.cols; ++c) peak = std::max(peak, heat.at(peak_row, c));
    for (const double v : heat.values) overall = std::max(overall, v);
    REQUIRE(peak == 255.0);
    REQUIRE(overall == 255.0);
}

TEST_CASE("absolute heat range is honored independent of the profile maximum") {
    CurvatureProfile profile;
    profile.probe_radius = 20.0;
    profile.valid_row_lo = 100;
    profile.valid_row_hi = 102;
    profile.entries = {{100, 1.25}, {101, 0.5}, {102, 2.0}};

    SoftMask mask(416, 16);
    for (int r = 100; r <= 102; ++r)
        for (int c = 4; c < 8; ++c) mask.at(BodyPart::spine, r, c) = 1.0f;

    const ScanGrid heat = heatmap_values(profile, mask, BodyPart::spine, 0.1, std::make_pair(1.0, 1.5));
    REQUIRE(heat.at(100, 4) == 0.5 * 255.0);  // midpoint of the range
    REQUIRE(heat.at(101, 4) == 0.0);          // clamped below
    REQUIRE(heat.at(102, 4) == 255.0);        // clamped above
    REQUIRE(heat.at(100, 3) == 0.0);          // unsupported pixel
    REQUIRE(heat.at(99, 4) == 0.0);           // row without profile entry

    REQUIRE_THROWS(heatmap_values(profile, mask, BodyPart::spine, 0.1, std::make_pair(1.5, 1.0)));
}

TEST_CASE("profile csv round trip") {
    testutil::TempDir tmp;
    CurvatureProfile profile;
    profile.entries = {{20, 1.0}, {21, 1.084875}};
    const std::string path = tmp.file("profile.csv");
    save_profile_csv(path, profile);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "row,kappa");
    std::getline(in, line);
    REQUIRE(line == "20,1.000000");
    std::getline(in, line);
    REQUIRE(line == "21,1.084875");
}
