#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "psmlab/synth.hpp"

using namespace psmlab;

TEST_SUITE("synth") {

TEST_CASE("generation is bit-identical under a fixed seed") {
    SynthConfig cfg;
    cfg.subjects = 2;
    cfg.frames_per_subject = 30;
    cfg.image_size = 32;
    cfg.seed = 7;
    Dataset a = synth_generate(cfg);
    Dataset b = synth_generate(cfg);
    REQUIRE(a.identities() == b.identities());
    for (const std::string& id : a.identities()) {
        const auto& fa = a.frames_of(id);
        const auto& fb = b.frames_of(id);
        REQUIRE(fa.size() == fb.size());
        for (size_t i = 0; i < fa.size(); ++i) {
            CHECK(fa[i].pixels.data == fb[i].pixels.data);
            CHECK(fa[i].labels.intensities == fb[i].labels.intensities);
            REQUIRE(fa[i].landmarks.has_value());
            REQUIRE(fb[i].landmarks.has_value());
            for (int p = 0; p < kNumLandmarks; ++p) {
                CHECK(fa[i].landmarks->points[static_cast<size_t>(p)].x ==
                      fb[i].landmarks->points[static_cast<size_t>(p)].x);
                CHECK(fa[i].landmarks->points[static_cast<size_t>(p)].y ==
                      fb[i].landmarks->points[static_cast<size_t>(p)].y);
            }
        }
    }

    SynthConfig other = cfg;
    other.seed = 8;
    Dataset c = synth_generate(other);
    CHECK(a.frames_of("SY001")[0].pixels.data != c.frames_of("SY001")[0].pixels.data);
}

TEST_CASE("unrotated frames put eye centers on the canonical geometry") {
    SynthConfig cfg = test::clean_synth_config(1, 12, 64);
    Dataset d = synth_generate(cfg);
    for (const FrameRef& f : d.frames_of("SY001")) {
        REQUIRE(f.landmarks.has_value());
        Vec2 left = f.landmarks->eye_center_a();
        Vec2 right = f.landmarks->eye_center_b();
        CHECK(left.y == doctest::Approx(right.y).epsilon(1e-9));
        CHECK(left.y == doctest::Approx(0.40 * 64).epsilon(0.02));
        CHECK(right.x > left.x);
        double gap = right.x - left.x;
        CHECK(gap == doctest::Approx(2 * 0.19 * 64).epsilon(0.2));  // trait-scaled
        CHECK(f.landmarks->within_bounds(64, 64));
    }
}

TEST_CASE("pose jitter moves pixels but not labels") {
    SynthConfig still = test::clean_synth_config(1, 20, 32);
    SynthConfig moving = still;
    moving.rotation_jitter_deg = 15.0;
    moving.offset_jitter = 0.05;
    Dataset a = synth_generate(still);
    Dataset b = synth_generate(moving);
    const auto& fa = a.frames_of("SY001");
    const auto& fb = b.frames_of("SY001");
    REQUIRE(fa.size() == fb.size());
    bool any_pixels_differ = false;
    for (size_t i = 0; i < fa.size(); ++i) {
        CHECK(fa[i].labels.intensities == fb[i].labels.intensities);
        any_pixels_differ = any_pixels_differ || fa[i].pixels.data != fb[i].pixels.data;
    }
    CHECK(any_pixels_differ);
}

TEST_CASE("pixels stay quantized in [0,1]") {
    Dataset d = synth_generate(test::clean_synth_config(1, 6, 16));
    for (const FrameRef& f : d.frames_of("SY001"))
        for (double v : f.pixels.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            CHECK(v * 255.0 == doctest::Approx(std::round(v * 255.0)).epsilon(1e-9));
        }
}

TEST_CASE("three-channel output carries the same face in every channel family") {
    SynthConfig cfg = test::clean_synth_config(1, 4, 24);
    cfg.channels = 3;
    Dataset d = synth_generate(cfg);
    const Image& img = d.frames_of("SY001")[0].pixels;
    REQUIRE(img.channels == 3);
    // Warm tint: red plane >= blue plane everywhere.
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            CHECK(img.at(0, y, x) >= img.at(2, y, x) - 1e-9);
}

TEST_CASE("person-specific patterns change the factor wiring across subjects") {
    SynthConfig with = test::clean_synth_config(4, 1, 16);
    with.person_specific_patterns = true;
    SynthConfig without = with;
    without.person_specific_patterns = false;
    // Traits differ in factor_source only when patterns are on.
    bool any_rotated = false;
    for (int s = 0; s < 4; ++s) {
        PersonTraits t_on = person_traits(with, s);
        PersonTraits t_off = person_traits(without, s);
        for (int g = 0; g < kMotionFactors; ++g) {
            if (t_on.factor_source[static_cast<size_t>(g)] != g) any_rotated = true;
            CHECK(t_off.factor_source[static_cast<size_t>(g)] == g);
        }
    }
    CHECK(any_rotated);
}

TEST_CASE("labels are recomputable from the trajectory") {
    SynthConfig cfg = test::clean_synth_config(1, 25, 16);
    Dataset d = synth_generate(cfg);
    PersonTraits traits = person_traits(cfg, 0);
    std::vector<FactorVec> traj = factor_trajectory(cfg, traits, 0);
    const auto& frames = d.frames_of("SY001");
    REQUIRE(traj.size() == frames.size());
    for (size_t i = 0; i < frames.size(); ++i) {
        AURecord expect = labels_from_factors(traits, traj[i]);
        CHECK(expect.intensities == frames[i].labels.intensities);
    }
}

TEST_CASE("invalid configs are rejected") {
    SynthConfig cfg;
    cfg.subjects = 0;
    CHECK_THROWS_AS(synth_generate(cfg), Error);
    cfg = SynthConfig{};
    cfg.frames_per_subject = 0;
    CHECK_THROWS_AS(synth_generate(cfg), Error);
    cfg = SynthConfig{};
    cfg.image_size = 7;
    CHECK_THROWS_AS(synth_generate(cfg), Error);
    cfg = SynthConfig{};
    cfg.channels = 2;
    CHECK_THROWS_AS(synth_generate(cfg), Error);
    cfg = SynthConfig{};
    cfg.image_size = 8;
    cfg.subjects = 1;
    cfg.frames_per_subject = 2;
    CHECK_NOTHROW(synth_generate(cfg));
}

}  // TEST_SUITE
