#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "psmlab/cluster.hpp"
#include "psmlab/common.hpp"

using namespace psmlab;

namespace {

/// Independent DBSCAN reference: union-find over core points, components
/// numbered by their smallest core index, border points joining the cluster
/// with the smallest minimum-core-index among their core neighbors.
struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<size_t>(x)] != x) {
            parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
            x = parent[static_cast<size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b) { parent[static_cast<size_t>(find(a))] = find(b); }
};

std::vector<int> dbscan_oracle(const Matrix& pts, double eps, int min_samples) {
    const int n = pts.rows;
    const double eps2 = eps * eps;
    auto close = [&](int i, int j) {
        double d2 = 0;
        for (int c = 0; c < pts.cols; ++c) {
            double d = pts.at(i, c) - pts.at(j, c);
            d2 += d * d;
        }
        return d2 <= eps2;
    };

    std::vector<std::vector<int>> neigh(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (close(i, j)) neigh[static_cast<size_t>(i)].push_back(j);  // self included

    std::vector<bool> core(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        core[static_cast<size_t>(i)] = static_cast<int>(neigh[static_cast<size_t>(i)].size()) >= min_samples;

    UnionFind uf(n);
    for (int i = 0; i < n; ++i)
        if (core[static_cast<size_t>(i)])
            for (int j : neigh[static_cast<size_t>(i)])
                if (core[static_cast<size_t>(j)]) uf.unite(i, j);

    // Number core components by their smallest member index.
    std::map<int, int> root_min;
    for (int i = 0; i < n; ++i)
        if (core[static_cast<size_t>(i)]) {
            int r = uf.find(i);
            auto it = root_min.find(r);
            if (it == root_min.end() || i < it->second) root_min[r] = i;
        }
    std::vector<std::pair<int, int>> ordered;  // (min index, root)
    for (auto& [root, mn] : root_min) ordered.emplace_back(mn, root);
    std::sort(ordered.begin(), ordered.end());
    std::map<int, int> root_to_id;
    for (size_t k = 0; k < ordered.size(); ++k) root_to_id[ordered[k].second] = static_cast<int>(k);

    std::vector<int> labels(static_cast<size_t>(n), kNoiseLabel);
    for (int i = 0; i < n; ++i)
        if (core[static_cast<size_t>(i)]) labels[static_cast<size_t>(i)] = root_to_id[uf.find(i)];
    for (int i = 0; i < n; ++i) {
        if (core[static_cast<size_t>(i)]) continue;
        int best = kNoiseLabel;
        for (int j : neigh[static_cast<size_t>(i)])
            if (core[static_cast<size_t>(j)]) {
                int id = labels[static_cast<size_t>(j)];
                if (best == kNoiseLabel || id < best) best = id;
            }
        labels[static_cast<size_t>(i)] = best;
    }
    return labels;
}

Matrix random_points(int n, int dims, uint64_t seed, double span) {
    Matrix pts(n, dims);
    Rng rng(seed);
    for (double& v : pts.v) v = rng.uniform(0.0, span);
    return pts;
}

std::array<double, kNumAus> one_hot(int index, double value = 1.0) {
    std::array<double, kNumAus> v{};
    v[static_cast<size_t>(index)] = value;
    return v;
}

ClusterProfile make_profile(int id, const std::array<double, kNumAus>& freq, const std::string& src) {
    ClusterProfile p;
    p.cluster_id = id;
    p.au_frequency = freq;
    p.source = src;
    return p;
}

}  // namespace

TEST_SUITE("cluster") {

TEST_CASE("dbscan matches the density-reachability oracle across the sweep grid") {
    Matrix pts = random_points(100, 2, 424242, 20.0);
    for (int eps = 3; eps <= 10; ++eps)
        for (int ms = 4; ms <= 8; ++ms) {
            std::vector<int> mine = dbscan(pts, static_cast<double>(eps), ms);
            std::vector<int> ref = dbscan_oracle(pts, static_cast<double>(eps), ms);
            CHECK(mine == ref);
        }
}

TEST_CASE("dbscan separates three well-spread blobs") {
    Rng rng(9);
    Matrix pts(60, 2);
    double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
    for (int i = 0; i < 60; ++i) {
        int blob = i / 20;
        pts.at(i, 0) = centers[blob][0] + rng.normal(0.0, 0.1);
        pts.at(i, 1) = centers[blob][1] + rng.normal(0.0, 0.1);
    }
    std::vector<int> labels = dbscan(pts, 1.0, 4);
    int max_label = *std::max_element(labels.begin(), labels.end());
    CHECK(max_label == 2);
    CHECK(std::count(labels.begin(), labels.end(), kNoiseLabel) == 0);
    // Blob membership is contiguous by construction.
    for (int i = 0; i < 60; ++i) CHECK(labels[static_cast<size_t>(i)] == i / 20);
}

TEST_CASE("dbscan degenerate inputs") {
    Matrix same(10, 2);
    for (int i = 0; i < 10; ++i) {
        same.at(i, 0) = 3.0;
        same.at(i, 1) = -1.0;
    }
    std::vector<int> labels = dbscan(same, 0.5, 10);
    for (int l : labels) CHECK(l == 0);

    Matrix distinct(5, 2);
    for (int i = 0; i < 5; ++i) distinct.at(i, 0) = i * 100.0;
    std::vector<int> noise = dbscan(distinct, 1e-9, 2);
    for (int l : noise) CHECK(l == kNoiseLabel);

    CHECK_THROWS_AS(dbscan(distinct, 0.0, 2), Error);
    CHECK_THROWS_AS(dbscan(distinct, 1.0, 0), Error);
    Matrix bad(2, 2);
    bad.at(0, 0) = std::nan("");
    CHECK_THROWS_AS(dbscan(bad, 1.0, 1), Error);
}

TEST_CASE("cluster_sweep runs the fixed 40-cell grid") {
    Rng rng(77);
    Matrix pts(40, 3);
    for (double& v : pts.v) v = rng.normal(0.0, 0.5);  // one tight blob at eps >= 3 scale
    SweepResult sweep = cluster_sweep(pts);
    CHECK(sweep.eps_values == std::vector<int>{3, 4, 5, 6, 7, 8, 9, 10});
    CHECK(sweep.min_samples_values == std::vector<int>{4, 5, 6, 7, 8});
    CHECK(sweep.counts.rows == 8);
    CHECK(sweep.counts.cols == 5);
    CHECK(sweep.average_cluster_count == doctest::Approx(1.0));

    Matrix tiny(3, 2);
    CHECK_THROWS_AS(cluster_sweep(tiny), Error);
}

TEST_CASE("cluster_au_frequencies matches per-cluster counting") {
    Rng rng(123);
    int n = 80;
    std::vector<int> labels(static_cast<size_t>(n));
    std::vector<AURecord> records(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        labels[static_cast<size_t>(i)] = rng.uniform_int(-1, 2);
        std::array<int, kNumAus> intensities{};
        for (int a = 0; a < kNumAus; ++a) intensities[static_cast<size_t>(a)] = rng.uniform_int(0, 5);
        records[static_cast<size_t>(i)] = AURecord::from_intensities(intensities);
    }
    std::vector<ClusterProfile> profiles = cluster_au_frequencies(labels, records);

    for (const ClusterProfile& p : profiles) {
        CHECK(p.cluster_id >= 0);
        std::array<double, kNumAus> expect{};
        int count = 0;
        for (int i = 0; i < n; ++i)
            if (labels[static_cast<size_t>(i)] == p.cluster_id) {
                ++count;
                for (int a = 0; a < kNumAus; ++a)
                    expect[static_cast<size_t>(a)] +=
                        records[static_cast<size_t>(i)].binary[static_cast<size_t>(a)] ? 1.0 : 0.0;
            }
        REQUIRE(count == static_cast<int>(p.member_rows.size()));
        for (int a = 0; a < kNumAus; ++a)
            CHECK(p.au_frequency[static_cast<size_t>(a)] ==
                  doctest::Approx(expect[static_cast<size_t>(a)] / count));
    }

    // All-noise labels produce no profiles.
    std::vector<int> all_noise(static_cast<size_t>(n), kNoiseLabel);
    CHECK(cluster_au_frequencies(all_noise, records).empty());
    CHECK_THROWS_AS(cluster_au_frequencies({0, 1}, records), Error);
}

TEST_CASE("custom metric hand values") {
    std::array<double, kNumAus> a{}, b{};
    a[0] = 1.0;
    b[1] = 1.0;
    MetricValue v = custom_metric_raw(a, b);
    CHECK_FALSE(v.rho_defaulted);
    CHECK(v.raw == doctest::Approx(-1.0 / 11.0 - 2.0).epsilon(1e-12));

    std::array<double, kNumAus> c{0.1, 0.9, 0.3, 0.0, 0.5, 0.2, 0.7, 0.1, 0.0, 0.4, 0.6, 0.8};
    MetricValue ident = custom_metric_raw(c, c);
    CHECK(ident.raw == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("custom metric is symmetric on 1000 random pairs") {
    Rng rng(3141);
    for (int t = 0; t < 1000; ++t) {
        std::array<double, kNumAus> a{}, b{};
        for (int i = 0; i < kNumAus; ++i) {
            a[static_cast<size_t>(i)] = rng.uniform();
            b[static_cast<size_t>(i)] = rng.uniform();
        }
        MetricValue ab = custom_metric_raw(a, b);
        MetricValue ba = custom_metric_raw(b, a);
        CHECK(std::abs(ab.raw - ba.raw) <= 1e-12);
    }
}

TEST_CASE("custom metric records rho defaults on constant vectors") {
    std::array<double, kNumAus> flat{}, varied{};
    for (int i = 0; i < kNumAus; ++i) {
        flat[static_cast<size_t>(i)] = 0.5;
        varied[static_cast<size_t>(i)] = i % 2 ? 0.9 : 0.1;
    }
    MetricValue v = custom_metric_raw(flat, varied);
    CHECK(v.rho_defaulted);
    double l1 = 0;
    for (int i = 0; i < kNumAus; ++i) l1 += std::abs(flat[static_cast<size_t>(i)] - varied[static_cast<size_t>(i)]);
    CHECK(v.raw == doctest::Approx(-l1));
}

TEST_CASE("novelty flags exactly the orthogonal cluster in the 3x3 hand case") {
    std::array<double, kNumAus> g2{};
    g2[0] = 0.5;
    g2[1] = 0.5;
    std::vector<ClusterProfile> gm{make_profile(0, one_hot(0), "gm"),
                                   make_profile(1, one_hot(1), "gm"),
                                   make_profile(2, g2, "gm")};
    std::array<double, kNumAus> p1{};
    p1[0] = 0.1;
    p1[1] = 0.9;
    std::vector<ClusterProfile> psm{make_profile(0, one_hot(0), "psm"),  // exact copy of gm0
                                    make_profile(1, p1, "psm"),
                                    make_profile(2, one_hot(11), "psm")};  // orthogonal
    NoveltyReport report = novelty_flags(psm, gm, 0.8);
    REQUIRE(report.psm.size() == 3);
    REQUIRE(report.gm.size() == 3);
    CHECK(report.raw_matrix.rows == 3);
    CHECK(report.raw_matrix.cols == 3);

    // The exact copy pairs at raw 1.0, the matrix maximum, so it normalizes
    // to 1.0 and its cluster cannot be novel.
    CHECK(report.raw_matrix.at(0, 0) == doctest::Approx(1.0));
    CHECK(report.normalized_matrix.at(0, 0) == doctest::Approx(1.0));
    CHECK_FALSE(report.psm[0].is_novel);
    CHECK_FALSE(report.psm[1].is_novel);
    CHECK(report.psm[2].is_novel);

    // Verdicts agree with the max-below-threshold rule on both sides.
    for (const NoveltyVerdict& v : report.psm) {
        double mx = *std::max_element(v.metric_values.begin(), v.metric_values.end());
        CHECK(v.is_novel == (mx < 0.8));
    }
    for (const NoveltyVerdict& v : report.gm) {
        double mx = *std::max_element(v.metric_values.begin(), v.metric_values.end());
        CHECK(v.is_novel == (mx < 0.8));
    }

    CHECK_THROWS_AS(novelty_flags({}, gm, 0.8), Error);
    CHECK_THROWS_AS(novelty_flags(psm, {}, 0.8), Error);
}

TEST_CASE("pca projection of 2d data preserves pairwise distances") {
    Rng rng(55);
    Matrix pts(30, 2);
    for (double& v : pts.v) v = rng.normal(0.0, 2.0);
    Projection proj = project_2d(pts);
    REQUIRE(proj.coords.rows == 30);
    REQUIRE(proj.coords.cols == 2);
    for (int i = 0; i < 30; ++i)
        for (int j = i + 1; j < 30; ++j) {
            double d_in = std::hypot(pts.at(i, 0) - pts.at(j, 0), pts.at(i, 1) - pts.at(j, 1));
            double d_out = std::hypot(proj.coords.at(i, 0) - proj.coords.at(j, 0),
                                      proj.coords.at(i, 1) - proj.coords.at(j, 1));
            CHECK(d_out == doctest::Approx(d_in).epsilon(1e-9));
        }
}

TEST_CASE("pca on rank-1 data leaves the second coordinate at zero") {
    Matrix pts(20, 4);
    Rng rng(66);
    for (int i = 0; i < 20; ++i) {
        double t = rng.normal();
        pts.at(i, 0) = t;
        pts.at(i, 1) = 2 * t;
        pts.at(i, 2) = -t;
        pts.at(i, 3) = 0.5 * t;
    }
    Projection proj = project_2d(pts);
    for (int i = 0; i < 20; ++i) CHECK(std::abs(proj.coords.at(i, 1)) < 1e-8);
    CHECK(proj.eigenvalues.size() == 4);
    CHECK(proj.eigenvalues[1] < 1e-10);
}

TEST_CASE("pca reconstruction error equals the sum of trailing eigenvalues") {
    Rng rng(77);
    int n = 40, d = 6;
    Matrix pts(n, d);
    for (double& v : pts.v) v = rng.normal(0.0, 1.0) + 0.3 * rng.uniform();
    Projection proj = project_2d(pts);
    REQUIRE(static_cast<int>(proj.eigenvalues.size()) == d);
    // Eigenvalues sorted descending.
    for (size_t k = 1; k < proj.eigenvalues.size(); ++k)
        CHECK(proj.eigenvalues[k] <= proj.eigenvalues[k - 1] + 1e-12);

    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) mean[static_cast<size_t>(c)] += pts.at(i, c) / n;

    double err = 0.0;  // (1/(n-1)) * sum of squared residuals
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) {
            double recon = mean[static_cast<size_t>(c)];
            for (int k = 0; k < 2; ++k) recon += proj.coords.at(i, k) * proj.components.at(c, k);
            double r = pts.at(i, c) - recon;
            err += r * r;
        }
    err /= (n - 1);
    double trailing = 0.0;
    for (size_t k = 2; k < proj.eigenvalues.size(); ++k) trailing += proj.eigenvalues[k];
    CHECK(err == doctest::Approx(trailing).epsilon(1e-9));

    // Total variance equals the eigenvalue sum.
    double total_var = 0.0;
    for (int c = 0; c < d; ++c) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            double r = pts.at(i, c) - mean[static_cast<size_t>(c)];
            s += r * r;
        }
        total_var += s / (n - 1);
    }
    double eig_sum = std::accumulate(proj.eigenvalues.begin(), proj.eigenvalues.end(), 0.0);
    CHECK(total_var == doctest::Approx(eig_sum).epsilon(1e-9));
}

TEST_CASE("pca sign convention and validation") {
    Rng rng(88);
    Matrix pts(25, 3);
    for (double& v : pts.v) v = rng.normal();
    Projection proj = project_2d(pts);
    for (int k = 0; k < 2; ++k) {
        int arg = 0;
        for (int c = 1; c < 3; ++c)
            if (std::abs(proj.components.at(c, k)) > std::abs(proj.components.at(arg, k))) arg = c;
        CHECK(proj.components.at(arg, k) > 0.0);
    }
    Matrix one(1, 3);
    CHECK_THROWS_AS(project_2d(one), Error);
}

}  // TEST_SUITE
