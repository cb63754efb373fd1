#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "spinecurve/dsm.hpp"
#include "spinecurve/synth.hpp"

using namespace spinecurve;

TEST_CASE("shape names round trip") {
    for (const ShapeKind s : {ShapeKind::straight, ShapeKind::arc, ShapeKind::s_curve, ShapeKind::vshape,
                              ShapeKind::sinusoid, ShapeKind::bump})
        REQUIRE(shape_from_name(shape_name(s)) == s);
    REQUIRE_THROWS(shape_from_name("zigzag"));
}

TEST_CASE("spec validation rejects impossible geometry") {
    SynthSpec spec;
    spec.shape = ShapeKind::arc;
    spec.arc_radius = 100.0;  // less than half the 416-row span
    REQUIRE_THROWS(make_ground_truth(spec));

    spec = SynthSpec{};
    spec.shape = ShapeKind::vshape;
    spec.apex_row = 0;
    REQUIRE_THROWS(make_ground_truth(spec));

    spec = SynthSpec{};
    spec.shape = ShapeKind::bump;
    spec.width_up = 0.0;
    REQUIRE_THROWS(make_ground_truth(spec));

    spec = SynthSpec{};
    spec.noise_sigma = -0.5;
    REQUIRE_THROWS(make_ground_truth(spec));
}

TEST_CASE("straight ground truth is the null report") {
    SynthSpec spec;
    const GroundTruth gt = make_ground_truth(spec);
    REQUIRE(gt.col_at(100.0) == 64.0);
    REQUIRE(gt.curvature_at(100.0) == 0.0);
    REQUIRE(gt.apex_rows.empty());
    REQUIRE(gt.apex_angle_deg == 0.0);
    REQUIRE(gt.noc_class == "0");
}

TEST_CASE("arc ground truth carries the exact curvature") {
    SynthSpec spec;
    spec.shape = ShapeKind::arc;
    spec.arc_radius = 100.0;
    spec.rows = 161;
    const GroundTruth gt = make_ground_truth(spec);
    REQUIRE(gt.curvature_at(40.0) == 0.01);
    REQUIRE(gt.noc_class == "1");
    REQUIRE(gt.apex_rows.size() == 1);
    REQUIRE(gt.apex_rows[0] == 80.0);
}

TEST_CASE("arc angle agrees with the apex angle measured at analytic points") {
    SynthSpec spec;
    spec.shape = ShapeKind::arc;
    spec.arc_radius = 300.0;
    spec.rows = 416;
    const GroundTruth gt = make_ground_truth(spec);

    auto col = [&](double r) { return synth_col(spec, r); };
    const Point a{13.0, col(13.0)}, b{404.0, col(404.0)};
    // The inscribed angle over a fixed chord does not depend on where the
    // apex sits on the arc; both placements must agree with the closed form.
    const double at_center = measure_angle(a, b, {207.5, col(207.5)});
    const double off_center = measure_angle(a, b, {100.0, col(100.0)});
    REQUIRE_THAT(at_center, Catch::Matchers::WithinAbs(gt.apex_angle_deg, 1e-9));
    REQUIRE_THAT(off_center, Catch::Matchers::WithinAbs(gt.apex_angle_deg, 1e-9));
}

TEST_CASE("vshape ground truth matches the two-slope tip formula") {
    SynthSpec spec;
    spec.shape = ShapeKind::vshape;
    spec.apex_offset = 35.0;
    spec.apex_row = 200;
    spec.rows = 401;
    const GroundTruth gt = make_ground_truth(spec);
    REQUIRE_THAT(gt.apex_angle_deg, Catch::Matchers::WithinAbs(19.8525, 0.001));
    REQUIRE_THAT(gt.apex_angle_deg,
                 Catch::Matchers::WithinAbs(measure_angle({0, 64}, {400, 64}, {200, 99}), 1e-9));

    // The dense construction measures from percentile endpoints instead of
    // the frame ends; on this shape the two differ by well under 0.05 deg.
    auto col = [&](double r) { return synth_col(spec, r); };
    const auto dense = detail::dense_dsm_oracle(col, spec.rows);
    REQUIRE(dense.num_segments == 1);
    REQUIRE_THAT(dense.max_angle_deg, Catch::Matchers::WithinAbs(gt.apex_angle_deg, 0.05));
    REQUIRE_THAT(dense.apex_rows[0], Catch::Matchers::WithinAbs(200.0, 0.2));
}

TEST_CASE("dense oracle classifies lobe counts with the deviation floor") {
    SynthSpec spec;
    spec.shape = ShapeKind::s_curve;
    spec.rows = 416;

    spec.amplitude = 12.0;
    REQUIRE(make_ground_truth(spec).noc_class == ">1");

    spec.amplitude = 0.2;  // everything stays under the 0.5 px floor
    const GroundTruth flat = make_ground_truth(spec);
    REQUIRE(flat.noc_class == "0");
    REQUIRE(flat.apex_angle_deg == 0.0);

    SynthSpec lobe;
    lobe.shape = ShapeKind::bump;
    lobe.amplitude = 18.0;
    lobe.rows = 416;
    const GroundTruth one = make_ground_truth(lobe);
    REQUIRE(one.noc_class == "1");
    REQUIRE(one.apex_angle_deg > 1.0);
}

TEST_CASE("noiseless curves sample the closed form exactly") {
    for (const ShapeKind shape : {ShapeKind::arc, ShapeKind::s_curve, ShapeKind::sinusoid, ShapeKind::bump}) {
        SynthSpec spec;
        spec.shape = shape;
        spec.rows = 416;
        spec.amplitude = 15.0;
        auto [curve, gt] = generate_curve(spec);
        REQUIRE(curve.samples.size() == 416);
        for (const auto& p : curve.samples)
            REQUIRE_THAT(p.col, Catch::Matchers::WithinAbs(synth_col(spec, p.row), 1e-12));
    }
}

TEST_CASE("curve noise is seeded and reproducible") {
    SynthSpec spec;
    spec.shape = ShapeKind::arc;
    spec.arc_radius = 300.0;
    spec.noise_sigma = 0.3;
    spec.seed = 99;
    auto [a, gta] = generate_curve(spec);
    auto [b, gtb] = generate_curve(spec);
    spec.seed = 100;
    auto [c, gtc] = generate_curve(spec);

    bool differs = false;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        REQUIRE(a.samples[i].col == b.samples[i].col);
        differs = differs || a.samples[i].col != c.samples[i].col;
    }
    REQUIRE(differs);
}

TEST_CASE("soft masks stay in range and are seeded") {
    SynthSpec spec;
    spec.shape = ShapeKind::s_curve;
    spec.amplitude = 10.0;
    spec.noise_sigma = 0.3;
    spec.seed = 5;
    auto [a, gta] = generate_softmask(spec);
    auto [b, gtb] = generate_softmask(spec);
    for (int ch = 0; ch < kChannelCount; ++ch) {
        REQUIRE(a.channels[ch] == b.channels[ch]);
        for (const float v : a.channels[ch]) {
            REQUIRE(v >= 0.0f);
            REQUIRE(v <= 1.0f);
        }
    }
    REQUIRE_THROWS(generate_softmask(spec, 0.0));
}

TEST_CASE("masks carry all six body parts") {
    SynthSpec spec;
    auto [mask, gt] = generate_softmask(spec);
    for (int ch = 0; ch < kChannelCount; ++ch) {
        float peak = 0.0f;
        for (const float v : mask.channels[ch]) peak = std::max(peak, v);
        REQUIRE(peak > 0.5f);
    }
}

TEST_CASE("corpus samples hit their stratified target angles") {
    const auto corpus = generate_corpus(8, 1.0, 45.0, 7);
    REQUIRE(corpus.size() == 8);
    for (int i = 0; i < 8; ++i) {
        const auto& s = corpus[i];
        REQUIRE(s.family == (i % 2 == 0 ? 'c' : 's'));
        const double bin_lo = 1.0 + 44.0 * i / 8.0;
        const double bin_hi = 1.0 + 44.0 * (i + 1) / 8.0;
        REQUIRE(s.target_angle_deg >= bin_lo);
        REQUIRE(s.target_angle_deg <= bin_hi);
        REQUIRE_THAT(s.gt.apex_angle_deg, Catch::Matchers::WithinAbs(s.target_angle_deg, 0.05));
        REQUIRE(s.gt.noc_class == (s.family == 'c' ? "1" : ">1"));
        REQUIRE(s.mask.rows == 416);
        REQUIRE(s.mask.cols == 128);
    }
    REQUIRE(corpus[0].id == "synth_0000c");
    REQUIRE(corpus[1].id == "synth_0001s");
}

TEST_CASE("corpus generation is deterministic in the seed") {
    const auto a = generate_corpus(4, 2.0, 30.0, 11);
    const auto b = generate_corpus(4, 2.0, 30.0, 11);
    const auto c = generate_corpus(4, 2.0, 30.0, 12);
    for (int i = 0; i < 4; ++i) {
        REQUIRE(a[i].target_angle_deg == b[i].target_angle_deg);
        REQUIRE(a[i].amplitude == b[i].amplitude);
        REQUIRE(a[i].mask.channels[static_cast<int>(BodyPart::spine)] ==
                b[i].mask.channels[static_cast<int>(BodyPart::spine)]);
    }
    bool differs = false;
    for (int i = 0; i < 4; ++i) differs = differs || a[i].target_angle_deg != c[i].target_angle_deg;
    REQUIRE(differs);

    REQUIRE_THROWS(generate_corpus(0, 1.0, 45.0, 1));
    REQUIRE_THROWS(generate_corpus(4, 10.0, 5.0, 1));
}

TEST_CASE("corpus curves stay inside the frame") {
    const auto corpus = generate_corpus(6, 40.0, 45.0, 13);  // worst-case amplitudes
    for (const auto& s : corpus)
        for (int r = 0; r < 416; ++r) {
            const double c = s.gt.col_at(r);
            REQUIRE(c > 8.0);
            REQUIRE(c < 119.0);
        }
}
