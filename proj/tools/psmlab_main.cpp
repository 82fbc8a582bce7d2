// psmlab command-line front end. Subcommands cover the whole pipeline:
// ingest, synth, align, train, embed, probe, cluster, transfer-eval,
// noise-check, report. Every artifact-producing command writes a
// run_manifest.json next to its outputs.
//
// Exit codes: 0 success, 2 validation error, 3 runtime/numeric error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "psmlab/align.hpp"
#include "psmlab/cluster.hpp"
#include "psmlab/common.hpp"
#include "psmlab/cycle.hpp"
#include "psmlab/dataset.hpp"
#include "psmlab/metrics.hpp"
#include "psmlab/probe.hpp"
#include "psmlab/regimes.hpp"
#include "psmlab/report.hpp"
#include "psmlab/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace psmlab;

namespace {

void write_json(const fs::path& path, const json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaMismatch, "not valid JSON: " + path);
    return j;
}

/// "linear:1,100,100" or "staircase:1,100,100,4" -> CurriculumConfig.
CurriculumConfig parse_curriculum(const std::string& text) {
    CurriculumConfig c;
    auto colon = text.find(':');
    if (colon == std::string::npos)
        fail(ErrorCode::InvalidConfig, "curriculum must look like linear:d_min,d_max,ramp");
    c.shape = text.substr(0, colon);
    std::vector<int> nums;
    std::stringstream ss(text.substr(colon + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            nums.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidConfig, "bad curriculum number '" + tok + "'");
        }
    }
    if (nums.size() < 3)
        fail(ErrorCode::InvalidConfig, "curriculum needs d_min,d_max,ramp");
    c.d_min = nums[0];
    c.d_max = nums[1];
    c.ramp_epochs = nums[2];
    if (nums.size() > 3) c.stairs = nums[3];
    return c;
}

/// Lifts the subjects named in `keep` (all when empty) into a new dataset.
Dataset select_subjects(const Dataset& full, const std::vector<std::string>& keep) {
    if (keep.empty()) return full;
    Dataset out;
    out.source = full.source;
    out.metadata = full.metadata;
    for (const std::string& id : keep) out.subjects[id] = full.frames_of(id);
    return out;
}

std::string hash_or_absent(const std::string& path) {
    return path.empty() ? std::string() : file_digest(path);
}

/// Digest of a dataset tree: its layout plus every label file. Cheap enough
/// to run per command; frame pixels are covered indirectly by frame counts.
std::string tree_digest(const std::string& root) {
    if (root.empty()) return {};
    uint64_t h = 1469598103934665603ull;
    std::vector<std::string> names;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        if (ext == ".csv" || ext == ".json" || ext == ".txt")
            names.push_back(entry.path().string());
    }
    std::sort(names.begin(), names.end());
    for (const std::string& n : names) {
        h = hash_mix(h, fnv1a64(n.data(), n.size()));
        h = hash_mix(h, fnv1a64_file(n));
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunManifest make_manifest(const std::string& command, const json& config, uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.config = config;
    m.seed = seed;
    return m;
}

struct TrainOptions {
    std::string root, out, regime = "psm", identity, from_bundle, curriculum;
    int epochs = 500, batch_size = 16;
    double frame_fraction = 1.0, lr = 2e-4;
    uint64_t seed = 0;
    int image_size = 0, channels = 0, embed_dim = 256, base_width = 16;
    std::string landmarks_dir;
};

int run_train(const TrainOptions& opt) {
    Dataset dataset = load_disfa(opt.root, opt.landmarks_dir);

    ModelConfig model_config;
    model_config.image_size = opt.image_size > 0 ? opt.image_size : dataset.metadata.image_height;
    model_config.channels = opt.channels > 0 ? opt.channels : dataset.metadata.channels;
    model_config.embed_dim = opt.embed_dim;
    model_config.base_width = opt.base_width;

    RegimeConfig regime;
    regime.regime = opt.regime;
    regime.epochs = opt.epochs;
    regime.frame_fraction = opt.frame_fraction;
    regime.seed = opt.seed;
    regime.batch_size = opt.batch_size;
    regime.optimizer.lr = opt.lr;
    if (!opt.curriculum.empty()) regime.curriculum = parse_curriculum(opt.curriculum);

    json curve = json::array();
    EpochCallback callback = [&](int epoch, const LossBreakdown& loss) {
        curve.push_back({{"epoch", epoch},
                         {"total", loss.total},
                         {"reconstruction", loss.reconstruction},
                         {"cycle_consistency", loss.cycle_consistency},
                         {"neutral_symmetric", loss.neutral_symmetric},
                         {"neutral_symmetric_weight", loss.neutral_symmetric_weight}});
    };

    std::optional<CycleModel> model;
    bool is_transfer = opt.regime.rfind("transfer", 0) == 0;
    if (is_transfer) {
        if (opt.from_bundle.empty())
            fail(ErrorCode::InvalidConfig, "--regime " + opt.regime + " requires --from");
        if (opt.identity.empty())
            fail(ErrorCode::InvalidConfig, "--regime " + opt.regime + " requires --identity");
        CycleModel pretrained = CycleModel::load(opt.from_bundle);
        model.emplace(transfer(pretrained, dataset, opt.identity, regime, callback));
    } else if (opt.regime == "gm") {
        model.emplace(train_gm(dataset, regime, model_config, callback));
    } else if (opt.regime == "psm" || opt.regime == "scratch") {
        if (opt.identity.empty())
            fail(ErrorCode::InvalidConfig, "--regime " + opt.regime + " requires --identity");
        model.emplace(train_psm(dataset, opt.identity, regime, model_config, callback));
    } else {
        fail(ErrorCode::InvalidConfig, "unknown regime '" + opt.regime + "'");
    }

    fs::path out(opt.out);
    fs::path bundle_dir = out / "bundle";
    model->save(bundle_dir.string());
    write_json(out / "training_curve.json", {{"series", {{{"label", opt.regime}, {"values", [&] {
        json vals = json::array();
        for (const auto& row : curve) vals.push_back(row["total"]);
        return vals;
    }()}}}}, {"per_epoch", curve}});

    json config{{"root", opt.root},     {"regime", opt.regime},
                {"identity", opt.identity}, {"epochs", opt.epochs},
                {"frame_fraction", opt.frame_fraction}, {"batch_size", opt.batch_size},
                {"lr", opt.lr},         {"curriculum", opt.curriculum},
                {"image_size", model_config.image_size}, {"channels", model_config.channels},
                {"embed_dim", opt.embed_dim}, {"base_width", opt.base_width},
                {"from", opt.from_bundle}};
    RunManifest manifest = make_manifest("train", config, opt.seed);
    manifest.input_hashes["root"] = tree_digest(opt.root);
    if (!opt.from_bundle.empty())
        manifest.input_hashes["from"] = hash_or_absent((fs::path(opt.from_bundle) / "manifest.json").string());
    manifest.outputs = {bundle_dir.string(), (out / "training_curve.json").string()};
    write_run_manifest(opt.out, manifest);
    return 0;
}

/// Embedding cache key: bundle manifest digest + dataset digest + subjects.
std::string embed_cache_key(const std::string& bundle, const std::string& root,
                            const std::vector<std::string>& identities) {
    uint64_t h = fnv1a64_file((fs::path(bundle) / "manifest.json").string());
    std::string tree = tree_digest(root);
    h = hash_mix(h, fnv1a64(tree.data(), tree.size()));
    for (const std::string& id : identities) h = hash_mix(h, fnv1a64(id.data(), id.size()));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void copy_tree(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    for (const auto& entry : fs::directory_iterator(from))
        fs::copy_file(entry.path(), to / entry.path().filename(), fs::copy_options::overwrite_existing);
}

int run_embed(const std::string& root, const std::string& bundle, const std::string& out,
              const std::vector<std::string>& identities, const std::string& landmarks_dir) {
    const char* cache_env = std::getenv("PSMLAB_CACHE");
    std::string cache_key;
    bool cache_hit = false;
    if (cache_env && *cache_env) {
        cache_key = embed_cache_key(bundle, root, identities);
        fs::path hit = fs::path(cache_env) / cache_key;
        if (fs::exists(hit / "manifest.json")) {
            copy_tree(hit, out);
            cache_hit = true;
            std::cout << "embeddings: cache hit " << cache_key << "\n";
        }
    }

    if (!cache_hit) {
        CycleModel model = CycleModel::load(bundle);
        Dataset dataset = select_subjects(load_disfa(root, landmarks_dir), identities);
        EmbeddingTable table = embed_dataset(model, dataset);
        save_embeddings(table, out);
        if (!cache_key.empty()) copy_tree(out, fs::path(cache_env) / cache_key);
        std::cout << "embeddings: " << table.rows.rows << " rows x " << table.rows.cols << "\n";
    }

    json config{{"root", root}, {"bundle", bundle}, {"identities", identities},
                {"cache_hit", cache_hit}};
    RunManifest manifest = make_manifest("embed", config, 0);
    manifest.input_hashes["root"] = tree_digest(root);
    manifest.input_hashes["bundle"] = hash_or_absent((fs::path(bundle) / "manifest.json").string());
    manifest.outputs = {out};
    write_run_manifest(out, manifest);
    return 0;
}

int run_probe(const std::string& root, const std::string& bundle, const std::string& embeddings,
              const std::string& identity, bool person_independent, int folds,
              const std::string& out, const ProbeConfig& config, const std::string& landmarks_dir) {
    Dataset dataset = load_disfa(root, landmarks_dir);

    ProbeResult result;
    if (person_independent) {
        EmbeddingTable table;
        if (!embeddings.empty()) {
            table = load_embeddings(embeddings);
        } else if (!bundle.empty()) {
            table = embed_dataset(CycleModel::load(bundle), dataset);
        } else {
            fail(ErrorCode::InvalidConfig, "probe needs --bundle or --embeddings");
        }
        result = eval_person_independent(table, dataset, folds, config);
    } else {
        if (identity.empty())
            fail(ErrorCode::InvalidConfig, "person-dependent probe needs --identity");
        if (bundle.empty())
            fail(ErrorCode::InvalidConfig, "person-dependent probe needs --bundle");
        result = eval_person_dependent(CycleModel::load(bundle), dataset, identity, config);
    }

    fs::path outdir(out);
    json result_json = probe_result_json(result);
    write_json(outdir / "probe_result.json", result_json);
    // Single-series per-AU bar payload, ready for `report --style fig3`.
    write_json(outdir / "fig3_payload.json",
               json{{"results", json::array({json{{"label", result.split_descriptor},
                                                  {"per_au", result_json["per_au"]}}})}});

    json cfg{{"root", root},           {"bundle", bundle},
             {"embeddings", embeddings}, {"identity", identity},
             {"person_independent", person_independent}, {"folds", folds},
             {"epochs", config.epochs},  {"lr", config.lr},
             {"threshold", config.threshold}, {"n_bootstrap", config.n_bootstrap},
             {"min_active_rate", config.min_active_rate}};
    RunManifest manifest = make_manifest("probe", cfg, config.seed);
    manifest.input_hashes["root"] = tree_digest(root);
    if (!bundle.empty())
        manifest.input_hashes["bundle"] = hash_or_absent((fs::path(bundle) / "manifest.json").string());
    if (!embeddings.empty())
        manifest.input_hashes["embeddings"] = hash_or_absent((fs::path(embeddings) / "manifest.json").string());
    manifest.outputs = {(outdir / "probe_result.json").string(),
                        (outdir / "fig3_payload.json").string()};
    write_run_manifest(out, manifest);
    std::cout << result.split_descriptor << ": mean F1 " << result.mean_f1 << " over "
              << result.evaluated_aus.size() << " AUs\n";
    return 0;
}

/// Representative grid cell for profile extraction: the run whose cluster
/// count sits closest to the sweep average (ties: smaller eps, then smaller
/// min_samples).
std::pair<int, int> representative_cell(const SweepResult& sweep) {
    int best_r = 0, best_c = 0;
    double best_gap = 1e300;
    for (int r = 0; r < sweep.counts.rows; ++r)
        for (int c = 0; c < sweep.counts.cols; ++c) {
            double gap = std::abs(sweep.counts.at(r, c) - sweep.average_cluster_count);
            if (gap < best_gap - 1e-12) {
                best_gap = gap;
                best_r = r;
                best_c = c;
            }
        }
    return {best_r, best_c};
}

struct ClusterSide {
    SweepResult sweep;
    std::vector<int> labels;
    std::vector<ClusterProfile> profiles;
    int eps = 0, min_samples = 0;
};

ClusterSide cluster_side(const EmbeddingTable& table, const Dataset& dataset,
                         const std::string& source_tag) {
    ClusterSide side;
    side.sweep = cluster_sweep(table.rows);
    auto [r, c] = representative_cell(side.sweep);
    side.eps = side.sweep.eps_values[static_cast<size_t>(r)];
    side.min_samples = side.sweep.min_samples_values[static_cast<size_t>(c)];
    side.labels = dbscan(table.rows, static_cast<double>(side.eps), side.min_samples);

    std::vector<AURecord> records(table.identities.size());
    for (size_t i = 0; i < table.identities.size(); ++i) {
        const auto& frames = dataset.frames_of(table.identities[i]);
        bool found = false;
        for (const FrameRef& f : frames)
            if (f.index == table.frame_indices[i]) {
                records[i] = f.labels;
                found = true;
                break;
            }
        if (!found)
            fail(ErrorCode::SchemaMismatch, "embedding row has no labels: " + table.identities[i] +
                                                "#" + std::to_string(table.frame_indices[i]));
    }
    side.profiles = cluster_au_frequencies(side.labels, records);
    for (ClusterProfile& p : side.profiles) p.source = source_tag;
    return side;
}

json side_json(const ClusterSide& side) {
    json j;
    j["sweep"] = sweep_json(side.sweep);
    j["representative"] = {{"eps", side.eps}, {"min_samples", side.min_samples}};
    j["labels"] = side.labels;
    j["profiles"] = json::array();
    for (const ClusterProfile& p : side.profiles)
        j["profiles"].push_back({{"cluster", p.cluster_id},
                                 {"size", p.member_rows.size()},
                                 {"au_frequency", p.au_frequency},
                                 {"source", p.source}});
    return j;
}

int run_cluster(const std::string& root, const std::string& embeddings,
                const std::string& gm_embeddings, const std::string& out,
                const std::string& landmarks_dir) {
    Dataset dataset = load_disfa(root, landmarks_dir);
    EmbeddingTable psm_table = load_embeddings(embeddings);
    ClusterSide psm = cluster_side(psm_table, dataset, "psm");

    fs::path outdir(out);
    json result;
    result["psm"] = side_json(psm);

    Projection proj = project_2d(psm_table.rows);
    {
        std::ostringstream csv;
        csv << "identity,frame,pc1,pc2,cluster\n";
        for (int i = 0; i < proj.coords.rows; ++i)
            csv << psm_table.identities[static_cast<size_t>(i)] << ","
                << psm_table.frame_indices[static_cast<size_t>(i)] << "," << proj.coords.at(i, 0)
                << "," << proj.coords.at(i, 1) << "," << psm.labels[static_cast<size_t>(i)] << "\n";
        fs::create_directories(outdir);
        std::ofstream f(outdir / "projection.csv", std::ios::binary);
        if (!f) fail(ErrorCode::IoError, "cannot write projection.csv");
        f << csv.str();
    }

    if (!gm_embeddings.empty()) {
        EmbeddingTable gm_table = load_embeddings(gm_embeddings);
        ClusterSide gm = cluster_side(gm_table, dataset, "gm");
        result["gm"] = side_json(gm);
        NoveltyReport novelty = novelty_flags(psm.profiles, gm.profiles);
        json novelty_j = novelty_report_json(novelty);
        // Heatmap/profile payload, ready for `report --style fig4`.
        write_json(outdir / "fig4_payload.json",
                   json{{"normalized_matrix", novelty_j["normalized_matrix"]},
                        {"psm_profiles", novelty_j["psm"]},
                        {"gm_profiles", novelty_j["gm"]},
                        {"novel_psm", novelty_j["novel_psm"]},
                        {"novel_gm", novelty_j["novel_gm"]}});
        result["novelty"] = std::move(novelty_j);
    }

    write_json(outdir / "cluster_result.json", result);

    json config{{"root", root}, {"embeddings", embeddings}, {"gm_embeddings", gm_embeddings}};
    RunManifest manifest = make_manifest("cluster", config, 0);
    manifest.input_hashes["root"] = tree_digest(root);
    manifest.input_hashes["embeddings"] =
        hash_or_absent((fs::path(embeddings) / "manifest.json").string());
    if (!gm_embeddings.empty())
        manifest.input_hashes["gm_embeddings"] =
            hash_or_absent((fs::path(gm_embeddings) / "manifest.json").string());
    manifest.outputs = {(outdir / "cluster_result.json").string(), (outdir / "projection.csv").string()};
    write_run_manifest(out, manifest);
    std::cout << "clusters (psm): average " << psm.sweep.average_cluster_count << " over the sweep\n";
    return 0;
}

struct TransferEvalOptions {
    std::string root, out, subject_a, subject_b, pretrained, landmarks_dir;
    int pretrain_epochs = 500, finetune_epochs = 10, full_epochs = 0;
    double fraction = 0.1;
    uint64_t seed = 0;
    int embed_dim = 64, base_width = 8, batch_size = 8;
};

int run_transfer_eval(const TransferEvalOptions& opt) {
    Dataset dataset = load_disfa(opt.root, opt.landmarks_dir);

    ModelConfig mc;
    mc.image_size = dataset.metadata.image_height;
    mc.channels = dataset.metadata.channels;
    mc.embed_dim = opt.embed_dim;
    mc.base_width = opt.base_width;

    RegimeConfig pre;
    pre.regime = "psm";
    pre.epochs = opt.pretrain_epochs;
    pre.seed = opt.seed;
    pre.batch_size = opt.batch_size;

    CycleModel pretrained = opt.pretrained.empty()
                                ? train_psm(dataset, opt.subject_a, pre, mc)
                                : CycleModel::load(opt.pretrained);

    RegimeConfig fine;
    fine.regime = "transfer_from_psm";
    fine.epochs = opt.finetune_epochs;
    fine.frame_fraction = opt.fraction;
    fine.seed = opt.seed;
    fine.batch_size = opt.batch_size;
    CycleModel transferred = transfer(pretrained, dataset, opt.subject_b, fine);

    RegimeConfig scratch;
    scratch.regime = "scratch_short";
    scratch.epochs = opt.finetune_epochs;
    scratch.frame_fraction = opt.fraction;
    scratch.seed = opt.seed;
    scratch.batch_size = opt.batch_size;
    CycleModel scratch_model = train_psm(dataset, opt.subject_b, scratch, mc);

    ProbeConfig probe_cfg;
    probe_cfg.seed = opt.seed;
    ProbeResult transfer_probe = eval_person_dependent(transferred, dataset, opt.subject_b, probe_cfg);
    ProbeResult scratch_probe = eval_person_dependent(scratch_model, dataset, opt.subject_b, probe_cfg);

    const auto& frames_b = dataset.frames_of(opt.subject_b);
    std::vector<const Image*> probe_frames;
    for (const FrameRef& f : frames_b)
        if (f.landmark_status == LandmarkStatus::present) probe_frames.push_back(&f.pixels);
    // Keep the consistency measurement affordable on long videos.
    if (probe_frames.size() > 64) probe_frames.resize(64);

    json result;
    result["subject_a"] = opt.subject_a;
    result["subject_b"] = opt.subject_b;
    result["transfer"] = probe_result_json(transfer_probe);
    result["scratch"] = probe_result_json(scratch_probe);
    result["neutral_consistency"] = {
        {"transfer", neutral_consistency(transferred, probe_frames)},
        {"scratch_short", neutral_consistency(scratch_model, probe_frames)},
    };
    if (opt.full_epochs > 0) {
        RegimeConfig full;
        full.regime = "psm";
        full.epochs = opt.full_epochs;
        full.seed = opt.seed;
        full.batch_size = opt.batch_size;
        CycleModel full_model = train_psm(dataset, opt.subject_b, full, mc);
        result["neutral_consistency"]["fully_trained"] = neutral_consistency(full_model, probe_frames);
    }
    result["f1"] = {{"transfer", transfer_probe.mean_f1}, {"scratch", scratch_probe.mean_f1}};

    fs::path outdir(opt.out);
    write_json(outdir / "transfer_eval.json", result);
    transferred.save((outdir / "transfer_bundle").string());
    scratch_model.save((outdir / "scratch_bundle").string());

    json config{{"root", opt.root},
                {"subject_a", opt.subject_a},
                {"subject_b", opt.subject_b},
                {"pretrain_epochs", opt.pretrain_epochs},
                {"finetune_epochs", opt.finetune_epochs},
                {"fraction", opt.fraction},
                {"full_epochs", opt.full_epochs},
                {"pretrained", opt.pretrained}};
    RunManifest manifest = make_manifest("transfer-eval", config, opt.seed);
    manifest.input_hashes["root"] = tree_digest(opt.root);
    manifest.outputs = {(outdir / "transfer_eval.json").string()};
    write_run_manifest(opt.out, manifest);
    std::cout << "transfer F1 " << transfer_probe.mean_f1 << " vs scratch F1 "
              << scratch_probe.mean_f1 << "\n";
    return 0;
}

int run_noise_check(const std::string& bundle, const std::string& root, const std::string& identity,
                    int n, uint64_t seed, const std::string& out, const std::string& landmarks_dir) {
    CycleModel model = CycleModel::load(bundle);
    Dataset dataset = load_disfa(root, landmarks_dir);
    const auto& frames = dataset.frames_of(identity);
    std::vector<const Image*> refs;
    for (const FrameRef& f : frames)
        if (f.landmark_status == LandmarkStatus::present) refs.push_back(&f.pixels);
    if (refs.size() > 128) refs.resize(128);

    NoiseCheckReport report = noise_check(model, n, refs, seed);
    if (report.untrained_warning)
        std::cerr << "warning: bundle has 0 trained epochs; distances are not meaningful\n";

    json j{{"n_noise", report.n_noise},
           {"percentile_95", report.percentile_95},
           {"pass_fraction", report.pass_fraction},
           {"passed", report.passed},
           {"untrained_warning", report.untrained_warning},
           {"noise_distances", report.noise_distances},
           {"reference_distances", report.reference_distances}};
    fs::path outdir(out);
    write_json(outdir / "noise_check.json", j);

    json config{{"bundle", bundle}, {"root", root}, {"identity", identity}, {"n", n}};
    RunManifest manifest = make_manifest("noise-check", config, seed);
    manifest.input_hashes["bundle"] = hash_or_absent((fs::path(bundle) / "manifest.json").string());
    manifest.input_hashes["root"] = tree_digest(root);
    manifest.outputs = {(outdir / "noise_check.json").string()};
    write_run_manifest(out, manifest);
    std::cout << "noise check: " << report.pass_fraction * 100 << "% beyond the 95th percentile ("
              << (report.passed ? "pass" : "fail") << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"facial motion embeddings with cycle-consistent training"};
    app.set_config("--config", "", "read options from a TOML/INI config file");
    app.require_subcommand(1);
    app.set_version_flag("--version", version_string());

    // --- ingest -----------------------------------------------------------
    std::string in_root, in_landmarks, in_out;
    auto* ingest = app.add_subcommand("ingest", "load a dataset tree and report AU statistics");
    ingest->add_option("--root", in_root, "dataset root directory")->required();
    ingest->add_option("--landmarks-dir", in_landmarks, "precomputed landmark files");
    ingest->add_option("--out", in_out, "output directory")->required();

    // --- synth ------------------------------------------------------------
    SynthConfig synth_cfg;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset tree");
    synth->add_option("--out", synth_out, "output tree root")->required();
    synth->add_option("--subjects", synth_cfg.subjects, "number of subjects");
    synth->add_option("--frames", synth_cfg.frames_per_subject, "frames per subject");
    synth->add_option("--size", synth_cfg.image_size, "square image size");
    synth->add_option("--channels", synth_cfg.channels, "1 grayscale or 3 color");
    synth->add_option("--seed", synth_cfg.seed, "generator seed");
    synth->add_option("--speckle", synth_cfg.speckle_sigma, "pixel noise sigma");
    synth->add_option("--rotation-jitter", synth_cfg.rotation_jitter_deg, "per-frame rotation, degrees");
    synth->add_option("--offset-jitter", synth_cfg.offset_jitter, "per-frame offset, fraction of size");
    synth->add_option("--signature-rate", synth_cfg.signature_rate, "fraction of signature-pose frames");
    bool no_person_patterns = false;
    synth->add_flag("--no-person-patterns", no_person_patterns, "disable person-specific factor couplings");
    bool no_landmarks = false;
    synth->add_flag("--no-landmarks", no_landmarks, "do not write landmark files");

    // --- align ------------------------------------------------------------
    std::string al_root, al_landmarks, al_out, al_detector;
    AlignConfig align_cfg;
    auto* align = app.add_subcommand("align", "crop and rotate faces to the canonical frame");
    align->add_option("--root", al_root, "dataset root")->required();
    align->add_option("--landmarks-dir", al_landmarks, "precomputed landmark files");
    align->add_option("--detector", al_detector, "external landmark detector command");
    align->add_option("--out", al_out, "aligned tree root")->required();
    align->add_option("--out-size", align_cfg.out_size, "output image size");
    align->add_flag("--grayscale", align_cfg.grayscale, "convert to single channel");

    // --- train ------------------------------------------------------------
    TrainOptions tr;
    auto* train = app.add_subcommand("train", "train a model bundle");
    train->add_option("--root", tr.root, "dataset root")->required();
    train->add_option("--out", tr.out, "run directory")->required();
    train->add_option("--regime", tr.regime, "psm | gm | scratch | transfer-psm | transfer-gm");
    train->add_option("--identity", tr.identity, "subject id (psm/scratch/transfer)");
    train->add_option("--from", tr.from_bundle, "pretrained bundle (transfer regimes)");
    train->add_option("--epochs", tr.epochs, "training epochs");
    train->add_option("--frame-fraction", tr.frame_fraction, "fraction of frames used");
    train->add_option("--batch-size", tr.batch_size, "pairs per step");
    train->add_option("--lr", tr.lr, "Adam learning rate");
    train->add_option("--seed", tr.seed, "training seed");
    train->add_option("--curriculum", tr.curriculum, "e.g. linear:1,100,100 or staircase:1,100,100,4");
    train->add_option("--image-size", tr.image_size, "model input size (default: dataset)");
    train->add_option("--channels", tr.channels, "model channels (default: dataset)");
    train->add_option("--embed-dim", tr.embed_dim, "motion embedding width");
    train->add_option("--base-width", tr.base_width, "first conv width");
    train->add_option("--landmarks-dir", tr.landmarks_dir, "precomputed landmark files");

    // --- embed ------------------------------------------------------------
    std::string em_root, em_bundle, em_out, em_landmarks;
    std::vector<std::string> em_identities;
    auto* embed = app.add_subcommand("embed", "encode every frame to the embedding table");
    embed->add_option("--root", em_root, "dataset root")->required();
    embed->add_option("--bundle", em_bundle, "trained bundle directory")->required();
    embed->add_option("--out", em_out, "embedding directory")->required();
    embed->add_option("--identity", em_identities, "restrict to these subjects");
    embed->add_option("--landmarks-dir", em_landmarks, "precomputed landmark files");

    // --- probe ------------------------------------------------------------
    std::string pr_root, pr_bundle, pr_embeddings, pr_identity, pr_out, pr_landmarks;
    bool pr_pi = false;
    int pr_folds = 3;
    ProbeConfig probe_cfg;
    auto* probe = app.add_subcommand("probe", "linear AU probe on frozen embeddings");
    probe->add_option("--root", pr_root, "dataset root")->required();
    probe->add_option("--bundle", pr_bundle, "trained bundle directory");
    probe->add_option("--embeddings", pr_embeddings, "precomputed embedding directory");
    probe->add_option("--identity", pr_identity, "subject for the person-dependent split");
    probe->add_flag("--person-independent", pr_pi, "k-fold over identities instead");
    probe->add_option("--folds", pr_folds, "folds for --person-independent");
    probe->add_option("--out", pr_out, "output directory")->required();
    probe->add_option("--probe-epochs", probe_cfg.epochs, "probe optimizer epochs");
    probe->add_option("--probe-lr", probe_cfg.lr, "probe learning rate");
    probe->add_option("--bootstrap", probe_cfg.n_bootstrap, "bootstrap resamples");
    probe->add_option("--seed", probe_cfg.seed, "probe seed");
    probe->add_option("--landmarks-dir", pr_landmarks, "precomputed landmark files");

    // --- cluster ----------------------------------------------------------
    std::string cl_root, cl_embeddings, cl_gm, cl_out, cl_landmarks;
    auto* cluster = app.add_subcommand("cluster", "DBSCAN sweep, profiles, novelty vs a GM side");
    cluster->add_option("--root", cl_root, "dataset root (for AU labels)")->required();
    cluster->add_option("--embeddings", cl_embeddings, "PSM embedding directory")->required();
    cluster->add_option("--gm-embeddings", cl_gm, "GM embedding directory (enables novelty)");
    cluster->add_option("--out", cl_out, "output directory")->required();
    cluster->add_option("--landmarks-dir", cl_landmarks, "precomputed landmark files");

    // --- transfer-eval ----------------------------------------------------
    TransferEvalOptions te;
    auto* transfer_eval = app.add_subcommand("transfer-eval", "pretrain A, fine-tune B, compare with scratch");
    transfer_eval->add_option("--root", te.root, "dataset root")->required();
    transfer_eval->add_option("--out", te.out, "output directory")->required();
    transfer_eval->add_option("--subject-a", te.subject_a, "pretraining subject")->required();
    transfer_eval->add_option("--subject-b", te.subject_b, "transfer target subject")->required();
    transfer_eval->add_option("--pretrained", te.pretrained, "reuse this bundle instead of pretraining");
    transfer_eval->add_option("--pretrain-epochs", te.pretrain_epochs, "epochs on subject A");
    transfer_eval->add_option("--finetune-epochs", te.finetune_epochs, "epochs on subject B");
    transfer_eval->add_option("--fraction", te.fraction, "fraction of B's frames");
    transfer_eval->add_option("--full-epochs", te.full_epochs, "also train B fully for this many epochs");
    transfer_eval->add_option("--seed", te.seed, "seed");
    transfer_eval->add_option("--embed-dim", te.embed_dim, "embedding width");
    transfer_eval->add_option("--base-width", te.base_width, "first conv width");
    transfer_eval->add_option("--landmarks-dir", te.landmarks_dir, "precomputed landmark files");

    // --- noise-check ------------------------------------------------------
    std::string nc_bundle, nc_root, nc_identity, nc_out, nc_landmarks;
    int nc_n = 100;
    uint64_t nc_seed = 0;
    auto* noise = app.add_subcommand("noise-check", "random-noise robustness of expression removal");
    noise->add_option("--bundle", nc_bundle, "trained bundle directory")->required();
    noise->add_option("--root", nc_root, "dataset root")->required();
    noise->add_option("--identity", nc_identity, "reference subject")->required();
    noise->add_option("--n", nc_n, "number of noise images");
    noise->add_option("--seed", nc_seed, "noise seed");
    noise->add_option("--out", nc_out, "output directory")->required();
    noise->add_option("--landmarks-dir", nc_landmarks, "precomputed landmark files");

    // --- report -----------------------------------------------------------
    std::string rp_style, rp_input, rp_out;
    auto* report = app.add_subcommand("report", "render a figure-style report from a JSON payload");
    report->add_option("--style", rp_style, "fig2 | fig3 | fig4 | fig5 | fig6 | sfig2")->required();
    report->add_option("--input", rp_input, "payload JSON file")->required();
    report->add_option("--out", rp_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*ingest) {
            Dataset dataset = load_disfa(in_root, in_landmarks);
            AuStatistics stats = au_statistics(dataset);
            json j = au_statistics_json(stats);
            j["n_subjects"] = dataset.identities().size();
            j["n_frames"] = dataset.total_frames();
            j["discard_fraction"] = dataset.discard_fraction();
            write_json(fs::path(in_out) / "statistics.json", j);

            // sfig2-style payload for the heatmap renderer.
            json payload;
            payload["subjects"] = j["subjects"];
            write_json(fs::path(in_out) / "sfig2_payload.json", payload);

            RunManifest manifest = make_manifest("ingest", {{"root", in_root}}, 0);
            manifest.input_hashes["root"] = tree_digest(in_root);
            manifest.outputs = {(fs::path(in_out) / "statistics.json").string()};
            write_run_manifest(in_out, manifest);
            std::cout << "subjects: " << dataset.identities().size() << ", frames: "
                      << dataset.total_frames() << ", discard fraction: "
                      << dataset.discard_fraction() << "\n";
        } else if (*synth) {
            synth_cfg.person_specific_patterns = !no_person_patterns;
            synth_cfg.with_landmarks = !no_landmarks;
            Dataset dataset = synth_generate(synth_cfg);
            write_disfa_tree(dataset, synth_out, synth_cfg.with_landmarks);
            json config{{"subjects", synth_cfg.subjects},
                        {"frames", synth_cfg.frames_per_subject},
                        {"size", synth_cfg.image_size},
                        {"channels", synth_cfg.channels},
                        {"person_patterns", synth_cfg.person_specific_patterns},
                        {"signature_rate", synth_cfg.signature_rate},
                        {"speckle", synth_cfg.speckle_sigma},
                        {"rotation_jitter", synth_cfg.rotation_jitter_deg},
                        {"offset_jitter", synth_cfg.offset_jitter}};
            RunManifest manifest = make_manifest("synth", config, synth_cfg.seed);
            manifest.outputs = {synth_out};
            write_run_manifest(synth_out, manifest);
            std::cout << "wrote " << dataset.total_frames() << " frames for "
                      << dataset.identities().size() << " subjects\n";
        } else if (*align) {
            Dataset dataset = load_disfa(al_root, al_landmarks);
            LandmarkSource source;
            if (!al_detector.empty()) {
                source.kind = LandmarkSource::Kind::command;
                source.command = al_detector;
            }
            AlignDatasetResult result = align_dataset(dataset, source, align_cfg);
            write_disfa_tree(result.dataset, al_out, true);
            json discards;
            for (const auto& [id, entries] : result.discards) {
                json list = json::array();
                for (const DiscardEntry& d : entries)
                    list.push_back({{"index", d.index}, {"reason", d.reason}});
                discards[id] = list;
            }
            write_json(fs::path(al_out) / "discards.json",
                       {{"discards", discards}, {"discard_fraction", result.discard_fraction}});
            json config{{"root", al_root},
                        {"out_size", align_cfg.out_size},
                        {"grayscale", align_cfg.grayscale},
                        {"detector", al_detector}};
            RunManifest manifest = make_manifest("align", config, 0);
            manifest.input_hashes["root"] = tree_digest(al_root);
            manifest.outputs = {al_out};
            write_run_manifest(al_out, manifest);
            std::cout << "aligned " << result.dataset.total_frames() << " frames, discarded "
                      << result.discard_fraction * 100 << "%\n";
        } else if (*train) {
            // CLI spells transfer regimes with a dash; the library uses
            // underscores matching provenance strings.
            if (tr.regime == "transfer-psm") tr.regime = "transfer_from_psm";
            if (tr.regime == "transfer-gm") tr.regime = "transfer_from_gm";
            return run_train(tr);
        } else if (*embed) {
            return run_embed(em_root, em_bundle, em_out, em_identities, em_landmarks);
        } else if (*probe) {
            return run_probe(pr_root, pr_bundle, pr_embeddings, pr_identity, pr_pi, pr_folds,
                             pr_out, probe_cfg, pr_landmarks);
        } else if (*cluster) {
            return run_cluster(cl_root, cl_embeddings, cl_gm, cl_out, cl_landmarks);
        } else if (*transfer_eval) {
            return run_transfer_eval(te);
        } else if (*noise) {
            return run_noise_check(nc_bundle, nc_root, nc_identity, nc_n, nc_seed, nc_out, nc_landmarks);
        } else if (*report) {
            render_report(rp_style, read_json(rp_input), rp_out);
            RunManifest manifest =
                make_manifest("report", {{"style", rp_style}, {"input", rp_input}}, 0);
            manifest.input_hashes["input"] = file_digest(rp_input);
            manifest.outputs = {(fs::path(rp_out) / "report.svg").string(),
                                (fs::path(rp_out) / "report.csv").string(),
                                (fs::path(rp_out) / "report.json").string()};
            write_run_manifest(rp_out, manifest);
            std::cout << "report written to " << rp_out << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_validation_error(e.code()) ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
