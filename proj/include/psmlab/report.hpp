#pragma once

// Run manifests, the random-noise robustness check, and the figure-style
// report renderers (SVG plots plus JSON/CSV tables).

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "psmlab/cluster.hpp"
#include "psmlab/cycle.hpp"
#include "psmlab/dataset.hpp"
#include "psmlab/probe.hpp"

namespace psmlab {

struct NoiseCheckReport {
    int n_noise = 0;
    double percentile_95 = 0.0;   // of real-frame distances to the mean neutral
    double pass_fraction = 0.0;   // noise inputs landing beyond that percentile
    bool passed = false;          // pass_fraction >= 0.95
    bool untrained_warning = false;
    std::vector<double> noise_distances;
    std::vector<double> reference_distances;
};

/// Feeds uniform-noise images through expression removal and asks whether
/// their "neutral" outputs sit far from the subject's real neutral faces.
NoiseCheckReport noise_check(const CycleModel& bundle, int n_noise,
                             const std::vector<const Image*>& reference_frames, uint64_t seed);

struct RunManifest {
    std::string command;
    nlohmann::json config;
    uint64_t seed = 0;
    std::map<std::string, std::string> input_hashes;  // path -> fnv64 hex
    std::vector<std::string> outputs;
    std::string timestamp;
    std::string version;
};

/// Writes run_manifest.json into out_dir (timestamp/version filled if empty).
void write_run_manifest(const std::string& out_dir, RunManifest manifest);

/// Hex digest used in manifests.
std::string file_digest(const std::string& path);

// ---- figure-style reports ----------------------------------------------
//
// Each style consumes a JSON payload produced by a pipeline stage and
// writes report.svg / report.csv / report.json into out_dir.
//
//   fig2:  {"models": [{"name", "f1_samples": [..]}, ..]}            bar chart + pairwise p-values
//   fig3:  {"results": [{"label", "per_au": [{"au", "mean",
//           "ci_low", "ci_high"}, ..]}, ..]}                         grouped per-AU bars with CIs
//   fig4:  {"normalized_matrix": [[..]], "psm_profiles": [..],
//           "gm_profiles": [..], "novel_psm": [..], "novel_gm": [..]} heatmap + AU barplots
//   fig5:  {"bars": [{"label", "value"}, ..]}                        labeled value bars
//   fig6:  {"series": [{"label", "values": [..]}, ..]}               curves over epochs
//   sfig2: {"subjects": [{"identity", "au_frequency": [12 reals]}]}  per-subject AU heatmap
//
// Missing fields raise SchemaMismatch naming the field.
void render_report(const std::string& style, const nlohmann::json& payload,
                   const std::string& out_dir);

// Payload builders for the CLI.
nlohmann::json probe_result_json(const ProbeResult& result);
nlohmann::json novelty_report_json(const NoveltyReport& report);
nlohmann::json sweep_json(const SweepResult& sweep);
nlohmann::json au_statistics_json(const AuStatistics& stats);

}  // namespace psmlab
