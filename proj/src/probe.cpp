#include "psmlab/probe.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

namespace psmlab {

namespace {

constexpr double kVarFloor = 1e-8;

Matrix take_rows(const Matrix& m, const std::vector<int>& rows) {
    Matrix out(static_cast<int>(rows.size()), m.cols);
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy_n(m.row(rows[i]), m.cols, out.row(static_cast<int>(i)));
    return out;
}

/// AU ids whose positive rate over the given records clears the filter.
std::vector<int> active_aus(const std::vector<AURecord>& records, double min_rate) {
    std::vector<int> out;
    for (int a = 0; a < kNumAus; ++a) {
        long pos = 0;
        for (const AURecord& r : records) pos += r.binary[static_cast<size_t>(a)] ? 1 : 0;
        double rate = records.empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(records.size());
        if (rate >= min_rate) out.push_back(kAuIds[static_cast<size_t>(a)]);
    }
    return out;
}

}  // namespace

Matrix ProbeModel::predict_scores(const Matrix& embeddings) const {
    if (embeddings.cols != static_cast<int>(mean.size()))
        fail(ErrorCode::DimMismatch, "embedding dim does not match probe");
    Matrix scores(embeddings.rows, kNumAus);
    std::vector<double> x(static_cast<size_t>(embeddings.cols));
    for (int r = 0; r < embeddings.rows; ++r) {
        const double* row = embeddings.row(r);
        for (int d = 0; d < embeddings.cols; ++d)
            x[static_cast<size_t>(d)] = gamma[static_cast<size_t>(d)] *
                                            (row[d] - mean[static_cast<size_t>(d)]) /
                                            std::sqrt(var[static_cast<size_t>(d)]) +
                                        beta[static_cast<size_t>(d)];
        for (int a = 0; a < kNumAus; ++a) {
            double z = 0.0;
            for (int d = 0; d < embeddings.cols; ++d) z += x[static_cast<size_t>(d)] * weights.at(d, a);
            scores.at(r, a) = 1.0 / (1.0 + std::exp(-z));
        }
    }
    return scores;
}

std::vector<int> ProbeModel::predict_au(const Matrix& embeddings, int au_id,
                                        double threshold) const {
    int a = au_index(au_id);
    if (a < 0) fail(ErrorCode::InvalidParams, "unknown AU id " + std::to_string(au_id));
    Matrix scores = predict_scores(embeddings);
    std::vector<int> out;
    out.reserve(static_cast<size_t>(scores.rows));
    for (int r = 0; r < scores.rows; ++r) out.push_back(scores.at(r, a) > threshold ? 1 : 0);
    return out;
}

ProbeModel fit_probe(const Matrix& embeddings, const std::vector<AURecord>& labels,
                     const ProbeConfig& config) {
    if (embeddings.rows != static_cast<int>(labels.size()))
        fail(ErrorCode::LengthMismatch, "embeddings and labels differ in length");
    if (embeddings.rows < 10) fail(ErrorCode::TooFewSamples, "fit_probe needs >= 10 rows");
    if (config.epochs < 1 || config.lr <= 0)
        fail(ErrorCode::InvalidConfig, "probe epochs must be >= 1 and lr > 0");

    int n = embeddings.rows, d = embeddings.cols;
    ProbeModel probe;
    probe.mean.assign(static_cast<size_t>(d), 0.0);
    probe.var.assign(static_cast<size_t>(d), 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) probe.mean[static_cast<size_t>(c)] += embeddings.at(r, c);
    for (double& m : probe.mean) m /= static_cast<double>(n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) {
            double dv = embeddings.at(r, c) - probe.mean[static_cast<size_t>(c)];
            probe.var[static_cast<size_t>(c)] += dv * dv;
        }
    for (double& v : probe.var) v = std::max(v / static_cast<double>(n), kVarFloor);

    Matrix x(n, d);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c)
            x.at(r, c) = (embeddings.at(r, c) - probe.mean[static_cast<size_t>(c)]) /
                         std::sqrt(probe.var[static_cast<size_t>(c)]);

    std::array<bool, kNumAus> fit_column{};
    for (int a = 0; a < kNumAus; ++a) {
        long pos = 0;
        for (const AURecord& rec : labels) pos += rec.binary[static_cast<size_t>(a)] ? 1 : 0;
        bool both = pos > 0 && pos < n;
        fit_column[static_cast<size_t>(a)] = both;
        (both ? probe.fitted_aus : probe.skipped_aus).push_back(kAuIds[static_cast<size_t>(a)]);
    }

    // Full-batch Adam on independent per-column mean BCE over the affine
    // batch-norm plus bias-free linear stack; zero/identity init keeps the
    // fit deterministic without any rng.
    probe.gamma.assign(static_cast<size_t>(d), 1.0);
    probe.beta.assign(static_cast<size_t>(d), 0.0);
    probe.weights = Matrix(d, kNumAus, 0.0);
    Matrix m1(d, kNumAus, 0.0), m2(d, kNumAus, 0.0);
    std::vector<double> mg1(static_cast<size_t>(d), 0.0), mg2(static_cast<size_t>(d), 0.0);
    std::vector<double> mb1(static_cast<size_t>(d), 0.0), mb2(static_cast<size_t>(d), 0.0);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Matrix h(n, d);
    std::vector<double> gz(static_cast<size_t>(n) * kNumAus);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c)
                h.at(r, c) = probe.gamma[static_cast<size_t>(c)] * x.at(r, c) +
                             probe.beta[static_cast<size_t>(c)];
        for (int r = 0; r < n; ++r) {
            const double* hr = h.row(r);
            for (int a = 0; a < kNumAus; ++a) {
                if (!fit_column[static_cast<size_t>(a)]) {
                    gz[static_cast<size_t>(r) * kNumAus + a] = 0.0;
                    continue;
                }
                double z = 0.0;
                for (int c = 0; c < d; ++c) z += hr[c] * probe.weights.at(c, a);
                double p = 1.0 / (1.0 + std::exp(-z));
                double y = labels[static_cast<size_t>(r)].binary[static_cast<size_t>(a)] ? 1.0 : 0.0;
                gz[static_cast<size_t>(r) * kNumAus + a] = (p - y) / static_cast<double>(n);
            }
        }
        double bc1 = 1.0 - std::pow(b1, epoch), bc2 = 1.0 - std::pow(b2, epoch);
        // Affine gradients need the pre-update weights, so they come first.
        for (int c = 0; c < d; ++c) {
            double dgamma = 0.0, dbeta = 0.0;
            for (int r = 0; r < n; ++r) {
                double dh = 0.0;
                for (int a = 0; a < kNumAus; ++a)
                    dh += probe.weights.at(c, a) * gz[static_cast<size_t>(r) * kNumAus + a];
                dgamma += dh * x.at(r, c);
                dbeta += dh;
            }
            auto adam_step = [&](double g, double& m, double& v, double& param) {
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                param -= config.lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            };
            adam_step(dgamma, mg1[static_cast<size_t>(c)], mg2[static_cast<size_t>(c)],
                      probe.gamma[static_cast<size_t>(c)]);
            adam_step(dbeta, mb1[static_cast<size_t>(c)], mb2[static_cast<size_t>(c)],
                      probe.beta[static_cast<size_t>(c)]);
        }
        for (int c = 0; c < d; ++c)
            for (int a = 0; a < kNumAus; ++a) {
                double g = 0.0;
                for (int r = 0; r < n; ++r) g += h.at(r, c) * gz[static_cast<size_t>(r) * kNumAus + a];
                double& m = m1.at(c, a);
                double& v = m2.at(c, a);
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                probe.weights.at(c, a) -= config.lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            }
    }
    return probe;
}

// ---- person-dependent --------------------------------------------------

namespace {

ProbeResult evaluate_probe(const ProbeModel& probe, const Matrix& test_rows,
                           const std::vector<AURecord>& test_labels,
                           const std::vector<int>& candidate_aus, const ProbeConfig& config,
                           uint64_t boot_seed) {
    ProbeResult result;
    std::set<int> fitted(probe.fitted_aus.begin(), probe.fitted_aus.end());
    for (int au : candidate_aus) {
        if (!fitted.count(au)) {
            result.skipped_aus.push_back(au);
            continue;
        }
        int a = au_index(au);
        std::vector<int> preds = probe.predict_au(test_rows, au, config.threshold);
        std::vector<int> truth;
        truth.reserve(test_labels.size());
        for (const AURecord& r : test_labels) truth.push_back(r.binary[static_cast<size_t>(a)] ? 1 : 0);
        BootstrapResult boot =
            bootstrap_f1(preds, truth, config.n_bootstrap, hash_mix(boot_seed, static_cast<uint64_t>(au)));
        result.per_au_f1[au] = boot.mean;
        result.bootstraps.emplace(au, std::move(boot));
        result.evaluated_aus.push_back(au);
    }
    double acc = 0.0;
    for (const auto& [au, f1] : result.per_au_f1) acc += f1;
    result.mean_f1 = result.per_au_f1.empty() ? 0.0 : acc / static_cast<double>(result.per_au_f1.size());
    return result;
}

}  // namespace

ProbeResult eval_person_dependent(const CycleModel& bundle, const Dataset& dataset,
                                  const std::string& identity, const ProbeConfig& config) {
    const std::vector<FrameRef>& frames = dataset.frames_of(identity);

    std::vector<const Image*> images;
    std::vector<AURecord> labels;
    for (const FrameRef& f : frames) {
        if (f.landmark_status == LandmarkStatus::missing) continue;
        images.push_back(&f.pixels);
        labels.push_back(f.labels);
    }
    Matrix embeddings = bundle.encode_batch(images);

    std::vector<int> candidates = active_aus(labels, config.min_active_rate);

    std::vector<FrameRef> usable;
    usable.reserve(images.size());
    for (const FrameRef& f : frames)
        if (f.landmark_status != LandmarkStatus::missing) usable.push_back(f);
    StratifiedSplit split = stratified_split(usable, config.train_fraction, config.seed);

    std::vector<AURecord> train_labels, test_labels;
    for (int r : split.train_indices) train_labels.push_back(labels[static_cast<size_t>(r)]);
    for (int r : split.test_indices) test_labels.push_back(labels[static_cast<size_t>(r)]);

    ProbeModel probe = fit_probe(take_rows(embeddings, split.train_indices), train_labels, config);
    ProbeResult result = evaluate_probe(probe, take_rows(embeddings, split.test_indices),
                                        test_labels, candidates, config, config.seed);
    result.split_descriptor = "person-dependent " +
                              std::to_string(static_cast<int>(config.train_fraction * 100)) + "/" +
                              std::to_string(100 - static_cast<int>(config.train_fraction * 100)) +
                              " identity=" + identity + " seed=" + std::to_string(config.seed);
    return result;
}

// ---- embedding tables ----------------------------------------------------

std::vector<int> EmbeddingTable::rows_of(const std::string& identity) const {
    std::vector<int> out;
    for (size_t i = 0; i < identities.size(); ++i)
        if (identities[i] == identity) out.push_back(static_cast<int>(i));
    return out;
}

EmbeddingTable embed_dataset(const CycleModel& bundle, const Dataset& dataset) {
    EmbeddingTable table;
    std::vector<const Image*> images;
    for (const auto& [id, frames] : dataset.subjects)
        for (const FrameRef& f : frames) {
            if (f.landmark_status == LandmarkStatus::missing) continue;
            table.identities.push_back(id);
            table.frame_indices.push_back(f.index);
            images.push_back(&f.pixels);
        }
    table.rows = bundle.encode_batch(images);
    return table;
}

void save_embeddings(const EmbeddingTable& table, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_f32_file((fs::path(dir) / "embeddings.f32").string(), table.rows.v.data(),
                   table.rows.v.size());
    nlohmann::json manifest;
    manifest["format"] = "psmlab-embeddings-v1";
    manifest["rows"] = table.rows.rows;
    manifest["dim"] = table.rows.cols;
    nlohmann::json entries = nlohmann::json::array();
    for (size_t i = 0; i < table.identities.size(); ++i)
        entries.push_back({{"identity", table.identities[i]}, {"index", table.frame_indices[i]}});
    manifest["entries"] = std::move(entries);
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) fail(ErrorCode::IoError, "cannot write embedding manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

EmbeddingTable load_embeddings(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) fail(ErrorCode::IoError, "cannot open embedding manifest in " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const std::exception& e) {
        fail(ErrorCode::SchemaMismatch, "embedding manifest parse error: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "psmlab-embeddings-v1")
        fail(ErrorCode::SchemaMismatch, "unknown embedding format tag");
    int rows = manifest.at("rows").get<int>();
    int dim = manifest.at("dim").get<int>();
    const auto& entries = manifest.at("entries");
    if (static_cast<int>(entries.size()) != rows)
        fail(ErrorCode::SchemaMismatch, "embedding manifest entry count mismatch");

    EmbeddingTable table;
    table.rows = Matrix(rows, dim);
    table.rows.v = read_f32_file((fs::path(dir) / "embeddings.f32").string(),
                                 static_cast<long>(rows) * dim);
    for (const auto& e : entries) {
        table.identities.push_back(e.at("identity").get<std::string>());
        table.frame_indices.push_back(e.at("index").get<int>());
    }
    return table;
}

// ---- person-independent --------------------------------------------------

ProbeResult eval_person_independent(const EmbeddingTable& embeddings, const Dataset& dataset,
                                    int k, const ProbeConfig& config) {
    // Labels come from the dataset, joined on (identity, frame index).
    std::map<std::string, std::map<int, const AURecord*>> lookup;
    for (const auto& [id, frames] : dataset.subjects)
        for (const FrameRef& f : frames) lookup[id][f.index] = &f.labels;

    std::vector<AURecord> row_labels;
    row_labels.reserve(embeddings.identities.size());
    for (size_t i = 0; i < embeddings.identities.size(); ++i) {
        auto sit = lookup.find(embeddings.identities[i]);
        if (sit == lookup.end())
            fail(ErrorCode::UnknownIdentity,
                 "embedding row identity not in dataset: " + embeddings.identities[i]);
        auto fit = sit->second.find(embeddings.frame_indices[i]);
        if (fit == sit->second.end())
            fail(ErrorCode::SchemaMismatch,
                 "embedding row refers to missing frame " +
                     std::to_string(embeddings.frame_indices[i]) + " of " +
                     embeddings.identities[i]);
        row_labels.push_back(*fit->second);
    }

    std::set<std::string> id_set(embeddings.identities.begin(), embeddings.identities.end());
    std::vector<std::string> ids(id_set.begin(), id_set.end());
    std::vector<std::vector<std::string>> folds = identity_folds(ids, k, config.seed);

    std::vector<int> candidates = active_aus(row_labels, config.min_active_rate);

    std::vector<ProbeResult> fold_results;
    for (size_t f = 0; f < folds.size(); ++f) {
        std::set<std::string> test_ids(folds[f].begin(), folds[f].end());
        std::vector<int> train_rows, test_rows;
        for (size_t i = 0; i < embeddings.identities.size(); ++i)
            (test_ids.count(embeddings.identities[i]) ? test_rows : train_rows)
                .push_back(static_cast<int>(i));
        assert([&] {  // identity leakage check
            for (int r : train_rows)
                if (test_ids.count(embeddings.identities[static_cast<size_t>(r)])) return false;
            return true;
        }());

        std::vector<AURecord> train_labels, test_labels;
        for (int r : train_rows) train_labels.push_back(row_labels[static_cast<size_t>(r)]);
        for (int r : test_rows) test_labels.push_back(row_labels[static_cast<size_t>(r)]);

        ProbeModel probe = fit_probe(take_rows(embeddings.rows, train_rows), train_labels, config);
        fold_results.push_back(evaluate_probe(probe, take_rows(embeddings.rows, test_rows),
                                              test_labels, candidates, config,
                                              hash_mix(config.seed, f)));
    }

    // An AU counts only if every fold could evaluate it; distributions are
    // then averaged entry-wise, keeping exactly n_bootstrap values.
    ProbeResult result;
    result.split_descriptor =
        "person-independent " + std::to_string(k) + "-fold seed=" + std::to_string(config.seed);
    std::set<int> skipped;
    for (const ProbeResult& fr : fold_results)
        for (int au : fr.skipped_aus) skipped.insert(au);
    for (int au : candidates) {
        if (skipped.count(au)) continue;
        BootstrapResult merged;
        merged.distribution.assign(static_cast<size_t>(config.n_bootstrap), 0.0);
        for (const ProbeResult& fr : fold_results) {
            const BootstrapResult& b = fr.bootstraps.at(au);
            for (int i = 0; i < config.n_bootstrap; ++i)
                merged.distribution[static_cast<size_t>(i)] +=
                    b.distribution[static_cast<size_t>(i)] / static_cast<double>(fold_results.size());
        }
        double acc = 0.0;
        for (double v : merged.distribution) acc += v;
        merged.mean = acc / static_cast<double>(config.n_bootstrap);
        merged.ci_low = percentile(merged.distribution, 2.5);
        merged.ci_high = percentile(merged.distribution, 97.5);
        result.per_au_f1[au] = merged.mean;
        result.bootstraps.emplace(au, std::move(merged));
        result.evaluated_aus.push_back(au);
    }
    result.skipped_aus.assign(skipped.begin(), skipped.end());
    double acc = 0.0;
    for (const auto& [au, f1] : result.per_au_f1) acc += f1;
    result.mean_f1 = result.per_au_f1.empty() ? 0.0 : acc / static_cast<double>(result.per_au_f1.size());
    return result;
}

double compare_models(const std::vector<double>& f1_samples_a,
                      const std::vector<double>& f1_samples_b) {
    return welch_t_test(f1_samples_a, f1_samples_b);
}

}  // namespace psmlab
