#pragma once

// Linear probing of frozen embeddings: normalization + bias-free linear
// layer trained with per-AU binary cross-entropy, then F1 with bootstraps
// under the person-dependent (80/20) and person-independent (k-fold by
// identity) protocols.

#include <map>
#include <string>
#include <vector>

#include "psmlab/au.hpp"
#include "psmlab/cycle.hpp"
#include "psmlab/dataset.hpp"
#include "psmlab/metrics.hpp"

namespace psmlab {

struct ProbeConfig {
    int epochs = 300;
    double lr = 1e-2;
    uint64_t seed = 0;
    double threshold = 0.5;       // sigmoid decision boundary
    int n_bootstrap = 100;
    double min_active_rate = 0.02;  // AU activity filter on the full video
    double train_fraction = 0.8;
    int cv_folds = 3;
};

struct ProbeModel {
    std::vector<double> mean;   // frozen training-set statistics
    std::vector<double> var;    // epsilon-floored
    std::vector<double> gamma;  // batch-norm affine, learned with the weights
    std::vector<double> beta;   // per-dim shift; the linear layer itself has no bias
    Matrix weights;             // [dim x kNumAus], no bias
    std::vector<int> fitted_aus;   // AU ids with both classes present in training
    std::vector<int> skipped_aus;  // single-class columns, recorded not fatal

    /// Sigmoid scores, rows aligned with the embedding rows.
    Matrix predict_scores(const Matrix& embeddings) const;
    /// Thresholded 0/1 predictions for one AU id.
    std::vector<int> predict_au(const Matrix& embeddings, int au_id, double threshold) const;
};

ProbeModel fit_probe(const Matrix& embeddings, const std::vector<AURecord>& labels,
                     const ProbeConfig& config);

struct ProbeResult {
    std::map<int, double> per_au_f1;              // AU id -> mean bootstrap F1
    std::map<int, BootstrapResult> bootstraps;    // AU id -> distribution
    std::vector<int> evaluated_aus;               // passed filter and fitted
    std::vector<int> skipped_aus;
    std::string split_descriptor;
    double mean_f1 = 0.0;  // over evaluated AUs
};

ProbeResult eval_person_dependent(const CycleModel& bundle, const Dataset& dataset,
                                  const std::string& identity, const ProbeConfig& config);

/// Embedding rows with their (identity, frame index) provenance; this is
/// also the exchange format for embeddings from external models.
struct EmbeddingTable {
    std::vector<std::string> identities;  // per row
    std::vector<int> frame_indices;       // per row
    Matrix rows;

    std::vector<int> rows_of(const std::string& identity) const;
};

EmbeddingTable embed_dataset(const CycleModel& bundle, const Dataset& dataset);
void save_embeddings(const EmbeddingTable& table, const std::string& dir);
EmbeddingTable load_embeddings(const std::string& dir);

/// k-fold cross-validation over identities; per-AU bootstrap distributions
/// are averaged elementwise across folds, so each keeps n_bootstrap entries.
ProbeResult eval_person_independent(const EmbeddingTable& embeddings, const Dataset& dataset,
                                    int k, const ProbeConfig& config);

/// Two-sided Welch t-test over two F1 samples.
double compare_models(const std::vector<double>& f1_samples_a,
                      const std::vector<double>& f1_samples_b);

}  // namespace psmlab
