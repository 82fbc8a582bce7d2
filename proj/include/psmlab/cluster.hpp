#pragma once

// Embedding-space behaviour discovery: DBSCAN with a pinned determinism
// rule, the fixed parameter sweep, per-cluster AU frequency profiles, the
// PSM-vs-GM novelty metric, and the 2D projection used by reports.

#include <string>
#include <vector>

#include "psmlab/au.hpp"
#include "psmlab/common.hpp"

namespace psmlab {

constexpr int kNoiseLabel = -1;

/// Standard DBSCAN over euclidean distance; neighbourhood counts include
/// the point itself. Clusters are numbered 0.. in order of their smallest
/// core index; a border point reachable from several clusters joins the
/// one with the smallest minimum core index among its core neighbours
/// (equivalently, the first cluster to claim it under index-order seeding).
std::vector<int> dbscan(const Matrix& points, double eps, int min_samples);

struct SweepResult {
    std::vector<int> eps_values;          // 3..10
    std::vector<int> min_samples_values;  // 4..8
    Matrix counts;                        // [eps x min_samples] cluster counts
    double average_cluster_count = 0.0;
};

/// Fixed 8x5 grid over eps 3..10 and min_samples 4..8; noise points never
/// count as clusters.
SweepResult cluster_sweep(const Matrix& embeddings);

struct ClusterProfile {
    int cluster_id = 0;
    std::vector<int> member_rows;
    std::array<double, kNumAus> au_frequency{};
    std::string source;  // "psm" | "gm" | free-form
};

/// Profiles for each non-noise cluster, ordered by cluster id.
std::vector<ClusterProfile> cluster_au_frequencies(const std::vector<int>& labels,
                                                   const std::vector<AURecord>& au_records);

struct MetricValue {
    double raw = 0.0;
    bool rho_defaulted = false;  // a constant vector forced rho := 0
};

/// Pearson correlation minus L1 distance between two AU frequency vectors;
/// symmetric, at most 1.0.
MetricValue custom_metric_raw(const std::array<double, kNumAus>& v_a,
                              const std::array<double, kNumAus>& v_b);

struct NoveltyVerdict {
    ClusterProfile cluster;
    std::vector<double> metric_values;  // normalized, versus every cluster on the other side
    bool is_novel = false;
};

struct NoveltyReport {
    std::vector<NoveltyVerdict> psm;  // one per PSM cluster
    std::vector<NoveltyVerdict> gm;   // one per GM cluster
    Matrix raw_matrix;                // [psm x gm]
    Matrix normalized_matrix;         // min-max over the pair matrix
    int rho_defaults = 0;
};

/// A cluster is novel iff all its normalized metric values against the
/// other side are below the threshold.
NoveltyReport novelty_flags(const std::vector<ClusterProfile>& psm_profiles,
                            const std::vector<ClusterProfile>& gm_profiles,
                            double threshold = 0.8);

struct Projection {
    Matrix coords;                   // [n x 2]
    std::vector<double> eigenvalues; // all, descending (covariance, 1/(n-1))
    Matrix components;               // [dim x 2], sign: largest |loading| positive
};

Projection project_2d(const Matrix& embeddings);

}  // namespace psmlab
