// Acceptance gate. Each `--criterion N` (1..12) runs one end-to-end check
// of shipped behavior against an independent reference: brute-force
// oracles, hand-built cases, directional training comparisons, and a full
// CLI pipeline drive. Exactly one "criterion N: PASS/FAIL (...)" line goes
// to stdout and the exit code mirrors it. All tolerances are pinned here.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "psmlab/align.hpp"
#include "psmlab/cluster.hpp"
#include "psmlab/cycle.hpp"
#include "psmlab/dataset.hpp"
#include "psmlab/metrics.hpp"
#include "psmlab/nn.hpp"
#include "psmlab/probe.hpp"
#include "psmlab/regimes.hpp"
#include "psmlab/report.hpp"
#include "psmlab/synth.hpp"

using namespace psmlab;
namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Failure {
    std::string detail;
};

[[noreturn]] void reject(const std::string& detail) { throw Failure{detail}; }

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(prec);
    s << v;
    return s.str();
}

// ---------------------------------------------------------------------------
// 1. F1 against a confusion-matrix brute force
// ---------------------------------------------------------------------------

double brute_f1(const std::vector<int>& pred, const std::vector<int>& label) {
    int tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        bool p = pred[i] != 0, l = label[i] != 0;
        tp += p && l;
        fp += p && !l;
        fn += !p && l;
    }
    double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

std::string criterion_1() {
    Clock::time_point t0 = Clock::now();
    Rng rng(101);
    double max_gap = 0.0;
    for (int t = 0; t < 1000; ++t) {
        int len = rng.uniform_int(1, 50);
        double rate_p = rng.uniform(), rate_l = rng.uniform();
        std::vector<int> pred(static_cast<size_t>(len)), label(static_cast<size_t>(len));
        for (int i = 0; i < len; ++i) {
            // Some entries land on 2 so "nonzero counts as 1" is exercised.
            pred[static_cast<size_t>(i)] = rng.uniform() < rate_p ? (rng.uniform() < 0.2 ? 2 : 1) : 0;
            label[static_cast<size_t>(i)] = rng.uniform() < rate_l ? (rng.uniform() < 0.2 ? 3 : 1) : 0;
        }
        double gap = std::abs(f1_score(pred, label) - brute_f1(pred, label));
        max_gap = std::max(max_gap, gap);
        if (gap > 1e-12) reject("random pair " + std::to_string(t) + " gap " + fmt(gap, 15));
    }
    for (int a = 0; a < 16; ++a)
        for (int b = 0; b < 16; ++b) {
            std::vector<int> pred(4), label(4);
            for (int i = 0; i < 4; ++i) {
                pred[static_cast<size_t>(i)] = (a >> i) & 1;
                label[static_cast<size_t>(i)] = (b >> i) & 1;
            }
            double gap = std::abs(f1_score(pred, label) - brute_f1(pred, label));
            max_gap = std::max(max_gap, gap);
            if (gap > 1e-12)
                reject("exhaustive pair (" + std::to_string(a) + "," + std::to_string(b) + ") gap " + fmt(gap, 15));
        }
    double secs = seconds_since(t0);
    if (secs >= 1.0) reject("runtime " + fmt(secs) + "s exceeds 1s");
    return "1000 random pairs + 16x16 exhaustive, max gap " + fmt(max_gap, 15) + ", " + fmt(secs) + "s";
}

// ---------------------------------------------------------------------------
// 2. DBSCAN against a quadratic density-reachability reference
// ---------------------------------------------------------------------------

std::vector<int> reference_dbscan(const Matrix& points, double eps, int min_samples) {
    int n = points.rows;
    double eps2 = eps * eps;
    std::vector<std::vector<int>> nbr(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < points.cols; ++c) {
                double d = points.at(i, c) - points.at(j, c);
                d2 += d * d;
            }
            if (d2 <= eps2) nbr[static_cast<size_t>(i)].push_back(j);
        }
    std::vector<bool> core(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        core[static_cast<size_t>(i)] = static_cast<int>(nbr[static_cast<size_t>(i)].size()) >= min_samples;

    // Clusters are the connected components of cores under eps-adjacency,
    // numbered by their smallest core index.
    std::vector<int> comp(static_cast<size_t>(n), -1);
    int next = 0;
    for (int s = 0; s < n; ++s) {
        if (!core[static_cast<size_t>(s)] || comp[static_cast<size_t>(s)] != -1) continue;
        int id = next++;
        std::deque<int> queue{s};
        comp[static_cast<size_t>(s)] = id;
        while (!queue.empty()) {
            int p = queue.front();
            queue.pop_front();
            for (int q : nbr[static_cast<size_t>(p)])
                if (core[static_cast<size_t>(q)] && comp[static_cast<size_t>(q)] == -1) {
                    comp[static_cast<size_t>(q)] = id;
                    queue.push_back(q);
                }
        }
    }
    // A border point joins the earliest-numbered cluster among its core
    // neighbours, matching the pinned determinism rule.
    std::vector<int> labels(static_cast<size_t>(n), kNoiseLabel);
    for (int i = 0; i < n; ++i) {
        if (core[static_cast<size_t>(i)]) {
            labels[static_cast<size_t>(i)] = comp[static_cast<size_t>(i)];
            continue;
        }
        int best = -1;
        for (int q : nbr[static_cast<size_t>(i)])
            if (core[static_cast<size_t>(q)] && (best == -1 || comp[static_cast<size_t>(q)] < best))
                best = comp[static_cast<size_t>(q)];
        if (best != -1) labels[static_cast<size_t>(i)] = best;
    }
    return labels;
}

std::vector<int> relabel_first_occurrence(const std::vector<int>& labels) {
    std::map<int, int> seen;
    std::vector<int> out(labels.size());
    int next = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == kNoiseLabel) {
            out[i] = kNoiseLabel;
            continue;
        }
        auto [it, fresh] = seen.emplace(labels[i], next);
        if (fresh) ++next;
        out[i] = it->second;
    }
    return out;
}

std::string criterion_2() {
    Clock::time_point t0 = Clock::now();
    Rng rng(202);
    Matrix points(100, 2);
    for (int i = 0; i < 100; ++i) {
        points.at(i, 0) = rng.uniform(0.0, 40.0);
        points.at(i, 1) = rng.uniform(0.0, 40.0);
    }
    int grid_runs = 0;
    for (int eps = 3; eps <= 10; ++eps)
        for (int min_samples = 4; min_samples <= 8; ++min_samples) {
            std::vector<int> got = relabel_first_occurrence(dbscan(points, eps, min_samples));
            std::vector<int> want = relabel_first_occurrence(reference_dbscan(points, eps, min_samples));
            if (got != want)
                reject("partition mismatch at eps=" + std::to_string(eps) +
                       " min_samples=" + std::to_string(min_samples));
            ++grid_runs;
        }
    double secs = seconds_since(t0);
    if (secs >= 10.0) reject("runtime " + fmt(secs) + "s exceeds 10s");
    return "100 points x " + std::to_string(grid_runs) + " grid cells identical up to relabeling, " +
           fmt(secs) + "s";
}

// ---------------------------------------------------------------------------
// 3. Similarity metric and novelty flags
// ---------------------------------------------------------------------------

ClusterProfile make_profile(int id, const std::array<double, kNumAus>& freq, const std::string& source) {
    ClusterProfile p;
    p.cluster_id = id;
    p.au_frequency = freq;
    p.source = source;
    return p;
}

std::array<double, kNumAus> one_hot(int index) {
    std::array<double, kNumAus> v{};
    v[static_cast<size_t>(index)] = 1.0;
    return v;
}

std::string criterion_3() {
    Rng rng(303);
    for (int t = 0; t < 200; ++t) {
        std::array<double, kNumAus> v{};
        for (double& x : v) x = rng.uniform();
        MetricValue m = custom_metric_raw(v, v);
        if (std::abs(m.raw - 1.0) > 1e-12)
            reject("identical vectors scored " + fmt(m.raw, 15) + " instead of 1.0");
    }

    std::array<double, kNumAus> g2{};
    g2[0] = 0.5;
    g2[1] = 0.5;
    std::vector<ClusterProfile> gm{make_profile(0, one_hot(0), "gm"), make_profile(1, one_hot(1), "gm"),
                                   make_profile(2, g2, "gm")};
    std::array<double, kNumAus> p1{};
    p1[0] = 0.1;
    p1[1] = 0.9;
    std::vector<ClusterProfile> psm{make_profile(0, one_hot(0), "psm"), make_profile(1, p1, "psm"),
                                    make_profile(2, one_hot(11), "psm")};
    NoveltyReport report = novelty_flags(psm, gm, 0.8);
    int novel = 0;
    for (const NoveltyVerdict& v : report.psm) novel += v.is_novel;
    if (novel != 1 || !report.psm[2].is_novel)
        reject("3x3 hand case flagged " + std::to_string(novel) + " novel clusters, wanted exactly the orthogonal one");
    if (std::abs(report.normalized_matrix.at(0, 0) - 1.0) > 1e-12)
        reject("exact-copy pair did not normalize to 1.0");

    double max_gap = 0.0;
    for (int t = 0; t < 1000; ++t) {
        std::array<double, kNumAus> a{}, b{};
        for (double& x : a) x = rng.uniform();
        for (double& x : b) x = rng.uniform();
        MetricValue ab = custom_metric_raw(a, b);
        MetricValue ba = custom_metric_raw(b, a);
        double gap = std::abs(ab.raw - ba.raw);
        max_gap = std::max(max_gap, gap);
        if (gap > 1e-12 || ab.rho_defaulted != ba.rho_defaulted)
            reject("asymmetry at pair " + std::to_string(t) + ", gap " + fmt(gap, 15));
    }
    return "identity 1.0, one novel cluster in the 3x3 case, symmetry gap <= " + fmt(max_gap, 15);
}

// ---------------------------------------------------------------------------
// 4. Tiny model end to end: loss halves, probe separates trained from random
// ---------------------------------------------------------------------------

std::string criterion_4() {
    Clock::time_point t0 = Clock::now();
    SynthConfig sc;
    sc.subjects = 1;
    sc.frames_per_subject = 200;
    sc.image_size = 32;
    sc.channels = 1;
    sc.seed = 11;
    sc.speckle_sigma = 0.04;
    sc.illumination_jitter = 0.04;
    sc.rotation_jitter_deg = 6.0;
    sc.offset_jitter = 0.02;
    Dataset data = synth_generate(sc);

    ModelConfig mc;
    mc.image_size = 32;
    mc.channels = 1;
    mc.embed_dim = 32;
    mc.base_width = 12;

    RegimeConfig reg;
    reg.regime = "psm";
    reg.epochs = 50;
    reg.batch_size = 2;
    reg.seed = 1;
    reg.optimizer.lr = 2e-3;

    std::vector<double> totals;
    CycleModel trained = train_psm(data, "SY001", reg, mc,
                                   [&](int, const LossBreakdown& loss) { totals.push_back(loss.total); });
    if (totals.size() != 50) reject("expected 50 epoch callbacks, saw " + std::to_string(totals.size()));
    if (totals.back() > 0.5 * totals.front())
        reject("final loss " + fmt(totals.back(), 4) + " not <= 50% of epoch-1 loss " + fmt(totals.front(), 4));

    ProbeConfig pc;
    pc.epochs = 600;
    ProbeResult on = eval_person_dependent(trained, data, "SY001", pc);
    CycleModel untrained(mc, 999);
    ProbeResult off = eval_person_dependent(untrained, data, "SY001", pc);

    double secs = seconds_since(t0);
    std::string f1s = "trained F1 " + fmt(on.mean_f1) + ", random F1 " + fmt(off.mean_f1);
    if (on.mean_f1 < 0.8) reject(f1s + ": trained below 0.8");
    if (off.mean_f1 > 0.6) reject(f1s + ": random above 0.6");
    if (secs > 600.0) reject("runtime " + fmt(secs, 1) + "s exceeds 600s");
    return "loss " + fmt(totals.front(), 3) + " -> " + fmt(totals.back(), 3) + ", trained F1 " +
           fmt(on.mean_f1) + " vs random " + fmt(off.mean_f1) + ", " + fmt(secs, 1) + "s";
}

// ---------------------------------------------------------------------------
// 5. Person-specific models beat the group model on average
// ---------------------------------------------------------------------------

std::string criterion_5() {
    std::vector<double> psm_f1, gm_f1;
    for (uint64_t seed = 0; seed < 3; ++seed) {
        SynthConfig sc;
        sc.subjects = 3;
        sc.frames_per_subject = 90;
        sc.image_size = 16;
        sc.channels = 1;
        sc.seed = 20 + seed;
        sc.speckle_sigma = 0.05;
        sc.illumination_jitter = 0.05;
        Dataset data = synth_generate(sc);

        ModelConfig mc;
        mc.image_size = 16;
        mc.channels = 1;
        mc.embed_dim = 8;
        mc.base_width = 4;

        RegimeConfig reg;
        reg.epochs = 40;
        reg.batch_size = 8;
        reg.seed = 100 + seed;
        reg.optimizer.lr = 1e-3;

        reg.regime = "gm";
        CycleModel gm = train_gm(data, reg, mc);
        reg.regime = "psm";

        ProbeConfig pc;
        for (const std::string& id : data.identities()) {
            CycleModel psm = train_psm(data, id, reg, mc);
            psm_f1.push_back(eval_person_dependent(psm, data, id, pc).mean_f1);
            gm_f1.push_back(eval_person_dependent(gm, data, id, pc).mean_f1);
        }
    }
    double psm_mean = std::accumulate(psm_f1.begin(), psm_f1.end(), 0.0) / static_cast<double>(psm_f1.size());
    double gm_mean = std::accumulate(gm_f1.begin(), gm_f1.end(), 0.0) / static_cast<double>(gm_f1.size());
    if (psm_mean < gm_mean)
        reject("psm mean F1 " + fmt(psm_mean) + " below gm mean F1 " + fmt(gm_mean));
    return "psm mean F1 " + fmt(psm_mean) + " >= gm mean F1 " + fmt(gm_mean) + " (9 probes each)";
}

// ---------------------------------------------------------------------------
// 6. Transfer beats short scratch training; neutral consistency ordering
// ---------------------------------------------------------------------------

std::string criterion_6() {
    int transfer_wins = 0;
    double cons_transfer = 0.0, cons_scratch = 0.0, cons_full = 0.0;
    std::vector<double> transfer_f1s, scratch_f1s;
    for (uint64_t seed = 0; seed < 3; ++seed) {
        SynthConfig sc;
        sc.subjects = 2;
        sc.frames_per_subject = 80;
        sc.image_size = 16;
        sc.channels = 1;
        sc.seed = 30 + seed;
        sc.speckle_sigma = 0.05;
        sc.illumination_jitter = 0.05;
        Dataset data = synth_generate(sc);

        ModelConfig mc;
        mc.image_size = 16;
        mc.channels = 1;
        mc.embed_dim = 8;
        mc.base_width = 4;

        RegimeConfig pre;
        pre.regime = "psm";
        pre.epochs = 500;
        pre.batch_size = 8;
        pre.seed = 200 + seed;
        pre.optimizer.lr = 1e-3;
        CycleModel pretrained = train_psm(data, "SY001", pre, mc);

        RegimeConfig fine;
        fine.regime = "transfer_from_psm";
        fine.epochs = 10;
        fine.frame_fraction = 0.1;
        fine.batch_size = 8;
        fine.seed = 300 + seed;
        fine.optimizer.lr = 1e-3;
        CycleModel transferred = transfer(pretrained, data, "SY002", fine);

        RegimeConfig scratch;
        scratch.regime = "scratch_short";
        scratch.epochs = 10;
        scratch.frame_fraction = 0.1;
        scratch.batch_size = 8;
        scratch.seed = 300 + seed;
        scratch.optimizer.lr = 1e-3;
        CycleModel scratch_short = train_psm(data, "SY002", scratch, mc);

        RegimeConfig full;
        full.regime = "psm";
        full.epochs = 300;
        full.batch_size = 8;
        full.seed = 400 + seed;
        full.optimizer.lr = 1e-3;
        CycleModel fully_trained = train_psm(data, "SY002", full, mc);

        ProbeConfig pc;
        double f1_transfer = eval_person_dependent(transferred, data, "SY002", pc).mean_f1;
        double f1_scratch = eval_person_dependent(scratch_short, data, "SY002", pc).mean_f1;
        transfer_f1s.push_back(f1_transfer);
        scratch_f1s.push_back(f1_scratch);
        if (f1_transfer > f1_scratch) ++transfer_wins;

        std::vector<const Image*> frames_b;
        for (const FrameRef& f : data.frames_of("SY002")) {
            frames_b.push_back(&f.pixels);
            if (frames_b.size() == 32) break;
        }
        cons_transfer += neutral_consistency(transferred, frames_b);
        cons_scratch += neutral_consistency(scratch_short, frames_b);
        cons_full += neutral_consistency(fully_trained, frames_b);
    }
    if (transfer_wins < 2)
        reject("transfer beat scratch on only " + std::to_string(transfer_wins) + "/3 seeds (transfer " +
               fmt(transfer_f1s[0]) + "/" + fmt(transfer_f1s[1]) + "/" + fmt(transfer_f1s[2]) + ", scratch " +
               fmt(scratch_f1s[0]) + "/" + fmt(scratch_f1s[1]) + "/" + fmt(scratch_f1s[2]) + ")");
    if (!(cons_transfer < cons_scratch))
        reject("mean neutral consistency: transfer " + fmt(cons_transfer / 3) + " not below scratch-short " +
               fmt(cons_scratch / 3));
    if (!(cons_full < cons_transfer))
        reject("mean neutral consistency: fully-trained " + fmt(cons_full / 3) + " not below transfer " +
               fmt(cons_transfer / 3));
    return "transfer wins " + std::to_string(transfer_wins) + "/3 seeds, consistency full " + fmt(cons_full / 3) +
           " < transfer " + fmt(cons_transfer / 3) + " < scratch " + fmt(cons_scratch / 3);
}

// ---------------------------------------------------------------------------
// 7. Sweep-average cluster counts: person-specific >= group, per subject
// ---------------------------------------------------------------------------

Dataset single_subject(const Dataset& data, const std::string& identity) {
    Dataset sub;
    sub.subjects.emplace(identity, data.frames_of(identity));
    sub.source = data.source;
    sub.metadata = data.metadata;
    return sub;
}

std::string criterion_7() {
    std::map<std::string, double> psm_avg, gm_avg;
    for (uint64_t seed = 0; seed < 3; ++seed) {
        SynthConfig sc;
        sc.subjects = 3;
        sc.frames_per_subject = 120;
        sc.image_size = 16;
        sc.channels = 1;
        sc.seed = 40 + seed;
        sc.speckle_sigma = 0.05;
        sc.illumination_jitter = 0.05;
        sc.signature_rate = 0.08;
        Dataset data = synth_generate(sc);

        ModelConfig mc;
        mc.image_size = 16;
        mc.channels = 1;
        mc.embed_dim = 8;
        mc.base_width = 4;

        RegimeConfig reg;
        reg.epochs = 40;
        reg.batch_size = 8;
        reg.seed = 500 + seed;
        reg.optimizer.lr = 1e-3;

        reg.regime = "gm";
        CycleModel gm = train_gm(data, reg, mc);
        reg.regime = "psm";

        for (const std::string& id : data.identities()) {
            CycleModel psm = train_psm(data, id, reg, mc);
            Dataset sub = single_subject(data, id);
            psm_avg[id] += cluster_sweep(embed_dataset(psm, sub).rows).average_cluster_count;
            gm_avg[id] += cluster_sweep(embed_dataset(gm, sub).rows).average_cluster_count;
        }
    }
    std::string counts;
    for (auto& [id, total] : psm_avg) {
        double psm_mean = total / 3.0, gm_mean = gm_avg[id] / 3.0;
        if (psm_mean < gm_mean)
            reject(id + ": psm sweep average " + fmt(psm_mean, 2) + " below gm " + fmt(gm_mean, 2));
        counts += (counts.empty() ? "" : ", ") + id + " " + fmt(psm_mean, 2) + ">=" + fmt(gm_mean, 2);
    }
    return "seed-averaged sweep cluster counts per subject: " + counts;
}

// ---------------------------------------------------------------------------
// 8. Curriculum reaches 90% of its final probe F1 at least as fast as uniform
// ---------------------------------------------------------------------------

int epochs_to_reach(const std::vector<std::pair<int, double>>& curve, double target) {
    for (const auto& [epoch, f1] : curve)
        if (f1 >= target) return epoch;
    return curve.back().first;
}

std::string criterion_8() {
    constexpr int kMaxEpochs = 30;
    int curriculum_wins = 0;
    std::string per_seed;
    for (uint64_t seed = 0; seed < 3; ++seed) {
        SynthConfig sc;
        sc.subjects = 1;
        sc.frames_per_subject = 120;
        sc.image_size = 16;
        sc.channels = 1;
        sc.seed = 50 + seed;
        sc.speckle_sigma = 0.05;
        sc.illumination_jitter = 0.05;
        Dataset data = synth_generate(sc);

        ModelConfig mc;
        mc.image_size = 16;
        mc.channels = 1;
        mc.embed_dim = 8;
        mc.base_width = 4;

        // Retraining from scratch to each checkpoint reproduces the epoch-e
        // state exactly: the rng stream never depends on total epochs.
        auto f1_curve = [&](bool with_curriculum) {
            std::vector<std::pair<int, double>> curve;
            for (int epochs = 2; epochs <= kMaxEpochs; epochs += 2) {
                RegimeConfig reg;
                reg.regime = "psm";
                reg.epochs = epochs;
                reg.batch_size = 8;
                reg.seed = 600 + seed;
                reg.optimizer.lr = 1e-3;
                if (with_curriculum) {
                    CurriculumConfig cur;
                    cur.d_min = 1;
                    cur.d_max = sc.frames_per_subject - 1;
                    cur.ramp_epochs = kMaxEpochs;
                    reg.curriculum = cur;
                }
                CycleModel model = train_psm(data, "SY001", reg, mc);
                ProbeConfig pc;
                curve.emplace_back(epochs, eval_person_dependent(model, data, "SY001", pc).mean_f1);
            }
            return curve;
        };

        std::vector<std::pair<int, double>> cur = f1_curve(true);
        std::vector<std::pair<int, double>> uni = f1_curve(false);
        int e_cur = epochs_to_reach(cur, 0.9 * cur.back().second);
        int e_uni = epochs_to_reach(uni, 0.9 * uni.back().second);
        if (e_cur <= e_uni) ++curriculum_wins;
        per_seed += (per_seed.empty() ? "" : ", ") + std::to_string(e_cur) + " vs " + std::to_string(e_uni);
    }
    if (curriculum_wins < 2)
        reject("curriculum was at least as fast on only " + std::to_string(curriculum_wins) +
               "/3 seeds (epochs to 90% of final F1: " + per_seed + ")");
    return "epochs to 90% of final F1 (curriculum vs uniform): " + per_seed + ", wins " +
           std::to_string(curriculum_wins) + "/3";
}

// ---------------------------------------------------------------------------
// 9. Uniform-noise inputs land beyond the 95th percentile of real distances
// ---------------------------------------------------------------------------

std::string criterion_9() {
    SynthConfig sc;
    sc.subjects = 1;
    sc.frames_per_subject = 100;
    sc.image_size = 16;
    sc.channels = 1;
    sc.seed = 60;
    sc.speckle_sigma = 0.08;
    sc.illumination_jitter = 0.08;
    Dataset data = synth_generate(sc);

    ModelConfig mc;
    mc.image_size = 16;
    mc.channels = 1;
    mc.embed_dim = 8;
    mc.base_width = 4;

    RegimeConfig reg;
    reg.regime = "psm";
    reg.epochs = 80;
    reg.batch_size = 8;
    reg.seed = 700;
    reg.optimizer.lr = 1e-3;
    CycleModel model = train_psm(data, "SY001", reg, mc);

    std::vector<const Image*> refs;
    for (const FrameRef& f : data.frames_of("SY001")) refs.push_back(&f.pixels);
    NoiseCheckReport report = noise_check(model, 100, refs, 9);
    if (report.n_noise != 100) reject("expected 100 noise inputs, report has " + std::to_string(report.n_noise));
    if (report.untrained_warning) reject("trained model still carries the untrained warning");
    if (report.pass_fraction < 0.95 || !report.passed)
        reject("only " + fmt(report.pass_fraction, 2) + " of noise inputs beyond the 95th percentile");
    return fmt(report.pass_fraction * 100, 1) + "% of 100 noise inputs beyond the 95th percentile (" +
           fmt(report.percentile_95, 2) + ")";
}

// ---------------------------------------------------------------------------
// 10. Analytic gradients match central finite differences per loss term
// ---------------------------------------------------------------------------

std::string criterion_10() {
    SynthConfig sc;
    sc.subjects = 1;
    sc.frames_per_subject = 12;
    sc.image_size = 8;
    sc.channels = 1;
    sc.seed = 70;
    Dataset data = synth_generate(sc);
    const std::vector<FrameRef>& frames = data.frames_of("SY001");

    ModelConfig mc;
    mc.image_size = 8;
    mc.channels = 1;
    mc.embed_dim = 4;
    mc.base_width = 2;
    CycleModel model(mc, 77);

    std::vector<TrainPair> batch{{&frames[0].pixels, &frames[5].pixels, "SY001", "SY001"},
                                 {&frames[3].pixels, &frames[9].pixels, "SY001", "SY001"}};
    const int epoch = 3;
    DecayConfig decay;

    std::vector<nn::Var> params = model.parameters();
    auto zero_grads = [&] {
        for (nn::Var& p : params) {
            nn::Tensor& g = p.grad();
            std::fill(g.v.begin(), g.v.end(), 0.0);
        }
    };
    auto term_values = [&] {
        nn::NoGrad guard;
        CycleModel::LossGraph g = model.build_loss_graph(batch, epoch, decay);
        return std::array<double, 4>{g.reconstruction.value().v[0], g.cycle_consistency.value().v[0],
                                     g.neutral_symmetric.value().v[0], g.total.value().v[0]};
    };

    const char* term_names[4] = {"reconstruction", "cycle_consistency", "neutral_symmetric", "total"};
    const double h = 1e-5;
    Rng rng(404);
    double worst = 0.0;
    for (int term = 0; term < 4; ++term) {
        zero_grads();
        CycleModel::LossGraph graph = model.build_loss_graph(batch, epoch, decay);
        nn::Var term_var = term == 0   ? graph.reconstruction
                           : term == 1 ? graph.cycle_consistency
                           : term == 2 ? graph.neutral_symmetric
                                       : graph.total;
        nn::backward(term_var);

        for (int c = 0; c < 100; ++c) {
            int pi = rng.uniform_int(0, static_cast<int>(params.size()) - 1);
            nn::Var& p = params[static_cast<size_t>(pi)];
            int offset = rng.uniform_int(0, static_cast<int>(p.value().size()) - 1);
            double analytic = p.grad().v[static_cast<size_t>(offset)];

            double saved = p.value().v[static_cast<size_t>(offset)];
            p.value().v[static_cast<size_t>(offset)] = saved + h;
            double up = term_values()[static_cast<size_t>(term)];
            p.value().v[static_cast<size_t>(offset)] = saved - h;
            double down = term_values()[static_cast<size_t>(term)];
            p.value().v[static_cast<size_t>(offset)] = saved;

            double numeric = (up - down) / (2 * h);
            double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
            worst = std::max(worst, rel);
            if (rel > 1e-4)
                reject(std::string(term_names[term]) + " grad mismatch at " + p.name() + "[" +
                       std::to_string(offset) + "]: analytic " + fmt(analytic, 8) + " vs numeric " +
                       fmt(numeric, 8));
        }
    }
    return "100 coordinates per loss term within 1e-4 (worst rel err " + fmt(worst, 8) + ")";
}

// ---------------------------------------------------------------------------
// 11. Aligned eyes stay level; alignment is idempotent
// ---------------------------------------------------------------------------

std::string criterion_11() {
    SynthConfig sc;
    sc.subjects = 5;
    sc.frames_per_subject = 100;
    sc.image_size = 32;
    sc.channels = 1;
    sc.seed = 13;
    sc.speckle_sigma = 0.08;
    sc.illumination_jitter = 0.08;
    sc.rotation_jitter_deg = 25.0;
    sc.offset_jitter = 0.06;
    Dataset data = synth_generate(sc);

    AlignConfig ac;
    ac.out_size = 32;
    int checked = 0;
    double max_gap = 0.0, max_mae = 0.0;
    for (const std::string& id : data.identities())
        for (const FrameRef& f : data.frames_of(id)) {
            if (!f.landmarks) reject(id + " frame " + std::to_string(f.index) + " lost its landmarks");
            AlignedFrame once = align_face(f.pixels, *f.landmarks, ac);
            double gap = std::abs(once.landmarks.eye_center_a().y - once.landmarks.eye_center_b().y);
            max_gap = std::max(max_gap, gap);
            if (gap > 1.0)
                reject(id + " frame " + std::to_string(f.index) + " eye rows differ by " + fmt(gap, 3) + " px");

            AlignedFrame twice = align_face(once.pixels, once.landmarks, ac);
            double mae = mean_abs_difference(once.pixels, twice.pixels);
            max_mae = std::max(max_mae, mae);
            if (mae > 0.01)
                reject(id + " frame " + std::to_string(f.index) + " re-alignment MAE " + fmt(mae, 4));
            ++checked;
        }
    if (checked != 500) reject("expected 500 frames, aligned " + std::to_string(checked));
    return "500 frames: max eye-row gap " + fmt(max_gap, 3) + " px, max re-alignment MAE " + fmt(max_mae, 4);
}

// ---------------------------------------------------------------------------
// 12. CLI pipeline on a 2-subject tree, report structure checks
// ---------------------------------------------------------------------------

#ifndef PSMLAB_CLI_PATH
#define PSMLAB_CLI_PATH "psmlab"
#endif

json read_json_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) reject("missing output file " + path.string());
    json j;
    f >> j;
    return j;
}

void require_report_files(const fs::path& dir, const std::string& step) {
    for (const char* name : {"report.svg", "report.csv", "report.json"}) {
        fs::path p = dir / name;
        if (!fs::exists(p) || fs::file_size(p) == 0) reject(step + " did not write " + p.string());
    }
    std::ifstream svg(dir / "report.svg");
    std::string head;
    std::getline(svg, head);
    if (head.rfind("<svg", 0) != 0) reject(step + " svg does not start with an <svg> element");
}

std::string criterion_12() {
    fs::path work = fs::temp_directory_path() / "psmlab_acceptance_pipeline";
    fs::remove_all(work);
    fs::create_directories(work);
    fs::path log = work / "pipeline.log";

    auto run = [&](const std::string& step, const std::string& args) {
        std::string cmd = std::string("'") + PSMLAB_CLI_PATH + "' " + args + " >> '" + log.string() + "' 2>&1";
        if (std::system(cmd.c_str()) != 0) reject(step + " failed (see " + log.string() + ")");
    };

    std::string tree = (work / "tree").string();
    std::string aligned = (work / "aligned").string();
    run("synth", "synth --out '" + tree + "' --subjects 2 --frames 48 --size 16 --seed 7");
    run("ingest", "ingest --root '" + tree + "' --out '" + (work / "ingest").string() + "'");
    run("align", "align --root '" + tree + "' --out '" + aligned + "' --out-size 16");
    run("train psm", "train --root '" + aligned + "' --out '" + (work / "run_psm").string() +
                         "' --regime psm --identity SY001 --epochs 30 --batch-size 8 --lr 1e-3 --seed 3"
                         " --embed-dim 8 --base-width 4");
    run("train gm", "train --root '" + aligned + "' --out '" + (work / "run_gm").string() +
                        "' --regime gm --epochs 15 --batch-size 8 --lr 1e-3 --seed 3"
                        " --embed-dim 8 --base-width 4");
    run("embed psm", "embed --root '" + aligned + "' --bundle '" + (work / "run_psm" / "bundle").string() +
                         "' --out '" + (work / "emb_psm").string() + "' --identity SY001");
    run("embed gm", "embed --root '" + aligned + "' --bundle '" + (work / "run_gm" / "bundle").string() +
                        "' --out '" + (work / "emb_gm").string() + "'");
    run("probe", "probe --root '" + aligned + "' --bundle '" + (work / "run_psm" / "bundle").string() +
                     "' --identity SY001 --out '" + (work / "probe").string() + "'");
    run("cluster", "cluster --root '" + aligned + "' --embeddings '" + (work / "emb_psm").string() +
                       "' --gm-embeddings '" + (work / "emb_gm").string() + "' --out '" +
                       (work / "cluster").string() + "'");
    run("report fig3", "report --style fig3 --input '" + (work / "probe" / "fig3_payload.json").string() +
                           "' --out '" + (work / "rep3").string() + "'");
    run("report fig4", "report --style fig4 --input '" + (work / "cluster" / "fig4_payload.json").string() +
                           "' --out '" + (work / "rep4").string() + "'");

    // Structure: the probe applied the 2% activity filter and kept 100
    // bootstrap resamples per evaluated AU.
    json probe_result = read_json_file(work / "probe" / "probe_result.json");
    if (probe_result["per_au"].empty()) reject("probe evaluated no AUs");
    for (const auto& row : probe_result["per_au"])
        if (row["samples"].size() != 100)
            reject("AU" + row["au"].dump() + " kept " + std::to_string(row["samples"].size()) +
                   " bootstrap samples, wanted 100");
    Dataset check = load_disfa(aligned);
    const std::vector<FrameRef>& frames = check.frames_of("SY001");
    for (const auto& row : probe_result["per_au"]) {
        int au = row["au"].get<int>();
        int active = 0;
        for (const FrameRef& f : frames) active += f.labels.binary[static_cast<size_t>(au_index(au))];
        double rate = static_cast<double>(active) / static_cast<double>(frames.size());
        if (rate < 0.02)
            reject("AU" + std::to_string(au) + " was evaluated at activity rate " + fmt(rate, 3) +
                   ", below the 2% filter");
    }

    json cluster_result = read_json_file(work / "cluster" / "cluster_result.json");
    for (const char* key : {"psm", "gm", "novelty"})
        if (!cluster_result.contains(key)) reject("cluster_result.json lacks '" + std::string(key) + "'");

    require_report_files(work / "rep3", "report fig3");
    require_report_files(work / "rep4", "report fig4");
    json rep3 = read_json_file(work / "rep3" / "report.json");
    if (!rep3.contains("results") || rep3["results"].empty() || !rep3["results"][0].contains("per_au"))
        reject("fig3 report.json lacks per-AU results");
    json rep4 = read_json_file(work / "rep4" / "report.json");
    for (const char* key : {"normalized_matrix", "psm_profiles", "gm_profiles", "novel_psm", "novel_gm"})
        if (!rep4.contains(key)) reject("fig4 report.json lacks '" + std::string(key) + "'");

    size_t n_aus = probe_result["per_au"].size();
    return "pipeline completed; fig3 covers " + std::to_string(n_aus) +
           " AUs with 100 bootstraps each, fig4 artifacts verified";
}

}  // namespace

int main(int argc, char** argv) {
    int criterion = 0;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) criterion = std::atoi(argv[++i]);
    }
    if (criterion < 1 || criterion > 12) {
        std::cerr << "usage: " << argv[0] << " --criterion N   (N in 1..12)\n";
        return 2;
    }

    std::string (*criteria[12])() = {criterion_1, criterion_2, criterion_3, criterion_4,
                                     criterion_5, criterion_6, criterion_7, criterion_8,
                                     criterion_9, criterion_10, criterion_11, criterion_12};
    try {
        std::string detail = criteria[criterion - 1]();
        std::cout << "criterion " << criterion << ": PASS (" << detail << ")\n";
        return 0;
    } catch (const Failure& f) {
        std::cout << "criterion " << criterion << ": FAIL (" << f.detail << ")\n";
    } catch (const std::exception& e) {
        std::cout << "criterion " << criterion << ": FAIL (unexpected error: " << e.what() << ")\n";
    }
    return 1;
}
