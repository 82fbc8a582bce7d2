#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "psmlab/report.hpp"
#include "psmlab/synth.hpp"

using namespace psmlab;
using psmlab::test::TempDir;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json fig2_payload() {
    json models = json::array();
    for (const char* name : {"psm", "gm"}) {
        json samples = json::array();
        double base = name[0] == 'p' ? 0.8 : 0.6;
        for (int i = 0; i < 20; ++i) samples.push_back(base + 0.001 * i);
        models.push_back({{"name", name}, {"f1_samples", samples}});
    }
    return {{"models", models}};
}

json fig3_payload() {
    json results = json::array();
    for (const char* label : {"trained", "random"}) {
        json per_au = json::array();
        for (int au : kAuIds)
            per_au.push_back({{"au", au}, {"mean", 0.7}, {"ci_low", 0.6}, {"ci_high", 0.8}});
        results.push_back({{"label", label}, {"per_au", per_au}});
    }
    return {{"results", results}};
}

json fig4_payload() {
    json matrix = json::array();
    for (int r = 0; r < 2; ++r) {
        json row = json::array();
        for (int c = 0; c < 2; ++c) row.push_back(r == c ? 1.0 : 0.3);
        matrix.push_back(row);
    }
    json freq = json::array();
    for (int i = 0; i < kNumAus; ++i) freq.push_back(i / 12.0);
    json psm = json::array();
    psm.push_back({{"cluster", 0}, {"au_frequency", freq}});
    psm.push_back({{"cluster", 1}, {"au_frequency", freq}});
    json gm = json::array();
    gm.push_back({{"cluster", 0}, {"au_frequency", freq}});
    gm.push_back({{"cluster", 1}, {"au_frequency", freq}});
    return {{"normalized_matrix", matrix},
            {"psm_profiles", psm},
            {"gm_profiles", gm},
            {"novel_psm", json::array({1})},
            {"novel_gm", json::array()}};
}

json fig5_payload() {
    return {{"bars", json::array({json{{"label", "transfer"}, {"value", 0.71}},
                                  json{{"label", "scratch"}, {"value", 0.55}}})}};
}

json fig6_payload() {
    json series = json::array();
    json a = json::array();
    json b = json::array();
    for (int i = 0; i < 30; ++i) {
        a.push_back(0.9 - 0.02 * i);
        b.push_back(0.8 - 0.01 * i);
    }
    series.push_back({{"label", "uniform"}, {"values", a}});
    series.push_back({{"label", "curriculum"}, {"values", b}});
    return {{"series", series}};
}

json sfig2_payload() {
    json freq = json::array();
    for (int i = 0; i < kNumAus; ++i) freq.push_back(0.05 * i);
    json subjects = json::array();
    subjects.push_back({{"identity", "SY001"}, {"au_frequency", freq}});
    subjects.push_back({{"identity", "SY002"}, {"au_frequency", freq}});
    return {{"subjects", subjects}};
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("every figure style renders a complete, stable artifact set") {
    struct StyleCase {
        const char* style;
        json payload;
    };
    std::vector<StyleCase> cases = {{"fig2", fig2_payload()},   {"fig3", fig3_payload()},
                                    {"fig4", fig4_payload()},   {"fig5", fig5_payload()},
                                    {"fig6", fig6_payload()},   {"sfig2", sfig2_payload()}};

    for (const StyleCase& c : cases) {
        CAPTURE(c.style);
        TempDir dir(std::string("report_") + c.style);
        render_report(c.style, c.payload, dir.str());

        std::string svg = slurp(dir.sub("report.svg"));
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.find("</svg>") != std::string::npos);
        CHECK(std::filesystem::exists(dir.sub("report.json")));

        // Re-render to a second directory: byte-stable output.
        TempDir again(std::string("report2_") + c.style);
        render_report(c.style, c.payload, again.str());
        CHECK(slurp(again.sub("report.svg")) == svg);
    }
}

TEST_CASE("missing payload fields are named in the error") {
    TempDir dir("badpayload");
    try {
        render_report("fig2", json{{"wrong", 1}}, dir.str());
        FAIL("expected SchemaMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SchemaMismatch);
        CHECK(std::string(e.what()).find("models") != std::string::npos);
    }

    try {
        render_report("fig6", json{{"models", json::array()}}, dir.str());
        FAIL("expected SchemaMismatch");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("series") != std::string::npos);
    }

    CHECK_THROWS_AS(render_report("fig9", fig2_payload(), dir.str()), Error);
}

TEST_CASE("noise check separates noise from real frames via the 95th percentile") {
    ModelConfig mc = psmlab::test::mini_model_config();
    CycleModel bundle(mc, 17);
    bundle.provenance().epochs_trained = 3;  // silence the untrained warning

    Dataset data = synth_generate(psmlab::test::clean_synth_config(1, 30, 8));
    std::vector<const Image*> refs;
    for (const FrameRef& f : data.frames_of("SY001")) refs.push_back(&f.pixels);

    NoiseCheckReport report = noise_check(bundle, 40, refs, 7);
    CHECK(report.n_noise == 40);
    CHECK(report.noise_distances.size() == 40);
    CHECK(report.reference_distances.size() == refs.size());
    CHECK(report.percentile_95 > 0.0);
    CHECK_FALSE(report.untrained_warning);

    int beyond = 0;
    for (double d : report.noise_distances)
        if (d > report.percentile_95) ++beyond;
    CHECK(report.pass_fraction == doctest::Approx(beyond / 40.0));
    CHECK(report.passed == (report.pass_fraction >= 0.95));

    // Determinism under the seed.
    NoiseCheckReport again = noise_check(bundle, 40, refs, 7);
    CHECK(again.noise_distances == report.noise_distances);

    NoiseCheckReport other = noise_check(bundle, 40, refs, 8);
    CHECK(other.noise_distances != report.noise_distances);
}

TEST_CASE("noise check validates inputs and flags untrained bundles") {
    ModelConfig mc = psmlab::test::mini_model_config();
    CycleModel untrained(mc, 2);
    Rng rng(5);
    Image a = psmlab::test::random_image(mc.channels, mc.image_size, rng);
    Image b = psmlab::test::random_image(mc.channels, mc.image_size, rng);

    CHECK_THROWS_AS(noise_check(untrained, 0, {&a, &b}, 1), Error);
    CHECK_THROWS_AS(noise_check(untrained, 5, {&a}, 1), Error);

    NoiseCheckReport report = noise_check(untrained, 5, {&a, &b}, 1);
    CHECK(report.untrained_warning);
}

TEST_CASE("run manifests autofill bookkeeping fields") {
    TempDir dir("manifest");
    RunManifest m;
    m.command = "train";
    m.config = {{"epochs", 3}};
    m.seed = 99;
    m.input_hashes["data"] = "abc123";
    m.outputs = {"bundle"};
    write_run_manifest(dir.str(), m);

    json loaded;
    std::ifstream(dir.sub("run_manifest.json")) >> loaded;
    CHECK(loaded.at("command") == "train");
    CHECK(loaded.at("seed") == 99);
    CHECK(loaded.at("config").at("epochs") == 3);
    CHECK(loaded.at("input_hashes").at("data") == "abc123");
    CHECK(loaded.at("outputs") == json::array({"bundle"}));
    CHECK_FALSE(loaded.at("timestamp").get<std::string>().empty());
    CHECK_FALSE(loaded.at("version").get<std::string>().empty());
    // ISO-8601 UTC shape.
    std::string ts = loaded.at("timestamp").get<std::string>();
    CHECK(ts.size() == 20);
    CHECK(ts.back() == 'Z');
    CHECK(ts[4] == '-');
    CHECK(ts[10] == 'T');
}

TEST_CASE("file digests are content-addressed") {
    TempDir dir("digest");
    std::string p1 = dir.sub("one.txt");
    std::string p2 = dir.sub("two.txt");
    std::ofstream(p1) << "hello";
    std::ofstream(p2) << "hello";
    std::string d1 = file_digest(p1);
    CHECK(d1 == file_digest(p2));
    std::ofstream(p2, std::ios::app) << "!";
    CHECK(d1 != file_digest(p2));
    CHECK(d1.size() == 16);  // fnv64 hex
    CHECK_THROWS_AS(file_digest(dir.sub("absent.txt")), Error);
}

TEST_CASE("payload builders mirror their source structs") {
    // probe_result_json carries per-AU means and CI bounds.
    ProbeResult pr;
    pr.split_descriptor = "unit";
    BootstrapResult boot;
    boot.mean = 0.75;
    boot.ci_low = 0.7;
    boot.ci_high = 0.8;
    boot.distribution = {0.7, 0.75, 0.8};
    pr.per_au_f1[12] = 0.75;
    pr.bootstraps.emplace(12, boot);
    pr.evaluated_aus = {12};
    pr.mean_f1 = 0.75;
    json pj = probe_result_json(pr);
    REQUIRE(pj.contains("per_au"));
    CHECK(pj.at("per_au").size() == 1);
    CHECK(pj.at("per_au")[0].at("au") == 12);
    CHECK(pj.at("per_au")[0].at("mean") == doctest::Approx(0.75));
    CHECK(pj.at("mean_f1") == doctest::Approx(0.75));

    // sweep_json matches the fig-style series the CLI feeds to reports.
    SweepResult sweep;
    sweep.eps_values = {3, 4};
    sweep.min_samples_values = {4, 5};
    sweep.counts = Matrix(2, 2, 1.0);
    sweep.average_cluster_count = 1.0;
    json sj = sweep_json(sweep);
    CHECK(sj.at("average_cluster_count") == doctest::Approx(1.0));
    CHECK(sj.at("cluster_counts").size() == 2);

    // au_statistics_json encodes NaN co-occurrence entries as nulls.
    Dataset d = synth_generate(psmlab::test::clean_synth_config(1, 40, 8));
    AuStatistics stats = au_statistics(d);
    json aj = au_statistics_json(stats);
    REQUIRE(aj.contains("au_frequency"));
    CHECK(aj.at("au_frequency").size() == kNumAus);
    REQUIRE(aj.contains("cooccurrence"));
    CHECK(aj.at("cooccurrence").size() == kNumAus);
}

}  // TEST_SUITE
