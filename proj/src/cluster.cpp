#include "psmlab/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

namespace psmlab {

std::vector<int> dbscan(const Matrix& points, double eps, int min_samples) {
    if (eps <= 0.0) fail(ErrorCode::InvalidParams, "eps must be > 0");
    if (min_samples < 1) fail(ErrorCode::InvalidParams, "min_samples must be >= 1");
    for (double v : points.v)
        if (!std::isfinite(v)) fail(ErrorCode::InvalidParams, "dbscan input must be finite");

    int n = points.rows;
    double eps2 = eps * eps;
    std::vector<std::vector<int>> neighbors(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        neighbors[static_cast<size_t>(i)].push_back(i);  // self-inclusive counts
        for (int j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            const double* a = points.row(i);
            const double* b = points.row(j);
            for (int c = 0; c < points.cols; ++c) {
                double d = a[c] - b[c];
                d2 += d * d;
            }
            if (d2 <= eps2) {
                neighbors[static_cast<size_t>(i)].push_back(j);
                neighbors[static_cast<size_t>(j)].push_back(i);
            }
        }
    }
    std::vector<bool> core(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        core[static_cast<size_t>(i)] = static_cast<int>(neighbors[static_cast<size_t>(i)].size()) >= min_samples;

    std::vector<int> labels(static_cast<size_t>(n), kNoiseLabel);
    int next_cluster = 0;
    for (int seed = 0; seed < n; ++seed) {
        if (!core[static_cast<size_t>(seed)] || labels[static_cast<size_t>(seed)] != kNoiseLabel) continue;
        int cluster = next_cluster++;
        labels[static_cast<size_t>(seed)] = cluster;
        std::deque<int> queue{seed};
        while (!queue.empty()) {
            int p = queue.front();
            queue.pop_front();
            for (int q : neighbors[static_cast<size_t>(p)]) {
                if (labels[static_cast<size_t>(q)] != kNoiseLabel) continue;
                labels[static_cast<size_t>(q)] = cluster;
                if (core[static_cast<size_t>(q)]) queue.push_back(q);
            }
        }
    }
    return labels;
}

SweepResult cluster_sweep(const Matrix& embeddings) {
    SweepResult sweep;
    for (int e = 3; e <= 10; ++e) sweep.eps_values.push_back(e);
    for (int m = 4; m <= 8; ++m) sweep.min_samples_values.push_back(m);
    int max_min_samples = sweep.min_samples_values.back();
    if (embeddings.rows < max_min_samples)
        fail(ErrorCode::TooFewPoints, "cluster_sweep needs >= " + std::to_string(max_min_samples) +
                                          " points, have " + std::to_string(embeddings.rows));

    sweep.counts = Matrix(static_cast<int>(sweep.eps_values.size()),
                          static_cast<int>(sweep.min_samples_values.size()));
    double total = 0.0;
    for (size_t ei = 0; ei < sweep.eps_values.size(); ++ei)
        for (size_t mi = 0; mi < sweep.min_samples_values.size(); ++mi) {
            std::vector<int> labels =
                dbscan(embeddings, sweep.eps_values[ei], sweep.min_samples_values[mi]);
            int count = 0;
            for (int l : labels) count = std::max(count, l + 1);
            sweep.counts.at(static_cast<int>(ei), static_cast<int>(mi)) = count;
            total += count;
        }
    sweep.average_cluster_count =
        total / static_cast<double>(sweep.eps_values.size() * sweep.min_samples_values.size());
    return sweep;
}

std::vector<ClusterProfile> cluster_au_frequencies(const std::vector<int>& labels,
                                                   const std::vector<AURecord>& au_records) {
    if (labels.size() != au_records.size())
        fail(ErrorCode::LengthMismatch, "labels and AU records differ in length");

    std::map<int, ClusterProfile> by_id;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == kNoiseLabel) continue;
        ClusterProfile& p = by_id[labels[i]];
        p.cluster_id = labels[i];
        p.member_rows.push_back(static_cast<int>(i));
        for (int a = 0; a < kNumAus; ++a)
            p.au_frequency[static_cast<size_t>(a)] += au_records[i].binary[static_cast<size_t>(a)] ? 1.0 : 0.0;
    }
    std::vector<ClusterProfile> out;
    out.reserve(by_id.size());
    for (auto& [id, p] : by_id) {
        for (double& f : p.au_frequency) f /= static_cast<double>(p.member_rows.size());
        out.push_back(std::move(p));
    }
    return out;
}

MetricValue custom_metric_raw(const std::array<double, kNumAus>& v_a,
                              const std::array<double, kNumAus>& v_b) {
    double ma = 0.0, mb = 0.0;
    for (int i = 0; i < kNumAus; ++i) {
        ma += v_a[static_cast<size_t>(i)];
        mb += v_b[static_cast<size_t>(i)];
    }
    ma /= kNumAus;
    mb /= kNumAus;
    double sab = 0.0, saa = 0.0, sbb = 0.0, l1 = 0.0;
    for (int i = 0; i < kNumAus; ++i) {
        double da = v_a[static_cast<size_t>(i)] - ma;
        double db = v_b[static_cast<size_t>(i)] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
        l1 += std::abs(v_a[static_cast<size_t>(i)] - v_b[static_cast<size_t>(i)]);
    }
    MetricValue out;
    if (saa == 0.0 || sbb == 0.0) {
        // Constant vector: correlation undefined, fall back to the L1 term.
        out.rho_defaulted = true;
        out.raw = -l1;
    } else {
        out.raw = sab / std::sqrt(saa * sbb) - l1;
    }
    return out;
}

NoveltyReport novelty_flags(const std::vector<ClusterProfile>& psm_profiles,
                            const std::vector<ClusterProfile>& gm_profiles, double threshold) {
    if (psm_profiles.empty() || gm_profiles.empty())
        fail(ErrorCode::EmptySide, "novelty_flags needs clusters on both sides");

    int np = static_cast<int>(psm_profiles.size());
    int ng = static_cast<int>(gm_profiles.size());
    NoveltyReport report;
    report.raw_matrix = Matrix(np, ng);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < ng; ++j) {
            MetricValue m = custom_metric_raw(psm_profiles[static_cast<size_t>(i)].au_frequency,
                                              gm_profiles[static_cast<size_t>(j)].au_frequency);
            if (m.rho_defaulted) ++report.rho_defaults;
            report.raw_matrix.at(i, j) = m.raw;
            lo = std::min(lo, m.raw);
            hi = std::max(hi, m.raw);
        }

    // Min-max over the whole pair matrix; a degenerate matrix (all values
    // equal) normalizes to all-1, i.e. nothing is novel.
    report.normalized_matrix = Matrix(np, ng);
    double span = hi - lo;
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < ng; ++j)
            report.normalized_matrix.at(i, j) =
                span == 0.0 ? 1.0 : (report.raw_matrix.at(i, j) - lo) / span;

    for (int i = 0; i < np; ++i) {
        NoveltyVerdict v;
        v.cluster = psm_profiles[static_cast<size_t>(i)];
        bool novel = true;
        for (int j = 0; j < ng; ++j) {
            v.metric_values.push_back(report.normalized_matrix.at(i, j));
            novel = novel && report.normalized_matrix.at(i, j) < threshold;
        }
        v.is_novel = novel;
        report.psm.push_back(std::move(v));
    }
    for (int j = 0; j < ng; ++j) {
        NoveltyVerdict v;
        v.cluster = gm_profiles[static_cast<size_t>(j)];
        bool novel = true;
        for (int i = 0; i < np; ++i) {
            v.metric_values.push_back(report.normalized_matrix.at(i, j));
            novel = novel && report.normalized_matrix.at(i, j) < threshold;
        }
        v.is_novel = novel;
        report.gm.push_back(std::move(v));
    }
    return report;
}

namespace {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues descending with matching columns in `vectors`.
void jacobi_eigen(Matrix a, std::vector<double>& values, Matrix& vectors) {
    int d = a.rows;
    vectors = Matrix(d, d);
    for (int i = 0; i < d; ++i) vectors.at(i, i) = 1.0;

    double scale = 0.0;
    for (double v : a.v) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) off += a.at(i, j) * a.at(i, j);
        if (off <= 1e-28 * scale * scale) break;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < d; ++k) {
                    double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < d; ++k) {
                    double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < d; ++k) {
                    double vkp = vectors.at(k, p), vkq = vectors.at(k, q);
                    vectors.at(k, p) = c * vkp - s * vkq;
                    vectors.at(k, q) = s * vkp + c * vkq;
                }
            }
    }

    std::vector<int> order(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return a.at(x, x) > a.at(y, y); });
    values.resize(static_cast<size_t>(d));
    Matrix sorted(d, d);
    for (int i = 0; i < d; ++i) {
        values[static_cast<size_t>(i)] = a.at(order[static_cast<size_t>(i)], order[static_cast<size_t>(i)]);
        for (int k = 0; k < d; ++k) sorted.at(k, i) = vectors.at(k, order[static_cast<size_t>(i)]);
    }
    vectors = std::move(sorted);
}

}  // namespace

Projection project_2d(const Matrix& embeddings) {
    int n = embeddings.rows, d = embeddings.cols;
    if (n < 2) fail(ErrorCode::TooFewPoints, "project_2d needs >= 2 points");

    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) mean[static_cast<size_t>(c)] += embeddings.at(r, c);
    for (double& m : mean) m /= static_cast<double>(n);

    Matrix centered(n, d);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) centered.at(r, c) = embeddings.at(r, c) - mean[static_cast<size_t>(c)];

    Matrix cov(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            double acc = 0.0;
            for (int r = 0; r < n; ++r) acc += centered.at(r, i) * centered.at(r, j);
            acc /= static_cast<double>(n - 1);
            cov.at(i, j) = acc;
            cov.at(j, i) = acc;
        }

    Projection proj;
    Matrix vectors;
    jacobi_eigen(std::move(cov), proj.eigenvalues, vectors);

    proj.components = Matrix(d, 2);
    for (int pc = 0; pc < 2 && pc < d; ++pc) {
        int arg = 0;
        for (int i = 1; i < d; ++i)
            if (std::abs(vectors.at(i, pc)) > std::abs(vectors.at(arg, pc))) arg = i;
        double sign = vectors.at(arg, pc) < 0 ? -1.0 : 1.0;
        for (int i = 0; i < d; ++i) proj.components.at(i, pc) = sign * vectors.at(i, pc);
    }

    proj.coords = Matrix(n, 2);
    for (int r = 0; r < n; ++r)
        for (int pc = 0; pc < 2 && pc < d; ++pc) {
            double acc = 0.0;
            for (int c = 0; c < d; ++c) acc += centered.at(r, c) * proj.components.at(c, pc);
            proj.coords.at(r, pc) = acc;
        }
    return proj;
}

}  // namespace psmlab
