#include "psmlab/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/students_t.hpp>

namespace psmlab {

double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        fail(ErrorCode::LengthMismatch, "predictions and labels differ in length");
    if (predictions.empty()) fail(ErrorCode::InvalidParams, "f1_score on empty input");
    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        bool p = predictions[i] != 0, l = labels[i] != 0;
        if (p && l) ++tp;
        else if (p && !l) ++fp;
        else if (!p && l) ++fn;
    }
    // 2RP/(R+P) collapses to 2tp/(2tp+fp+fn); both denominators zero together.
    long denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

BootstrapResult bootstrap_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                             int n_bootstrap, uint64_t seed) {
    if (predictions.size() != labels.size())
        fail(ErrorCode::LengthMismatch, "predictions and labels differ in length");
    if (predictions.size() < 2) fail(ErrorCode::TooFewSamples, "bootstrap needs >= 2 rows");
    if (n_bootstrap < 1) fail(ErrorCode::InvalidParams, "n_bootstrap must be >= 1");

    Rng rng(seed);
    int n = static_cast<int>(predictions.size());
    BootstrapResult out;
    out.distribution.reserve(static_cast<size_t>(n_bootstrap));
    std::vector<int> rp(static_cast<size_t>(n)), rl(static_cast<size_t>(n));
    for (int b = 0; b < n_bootstrap; ++b) {
        for (int i = 0; i < n; ++i) {
            int k = rng.uniform_int(0, n - 1);
            rp[static_cast<size_t>(i)] = predictions[static_cast<size_t>(k)];
            rl[static_cast<size_t>(i)] = labels[static_cast<size_t>(k)];
        }
        out.distribution.push_back(f1_score(rp, rl));
    }
    double acc = 0.0;
    for (double v : out.distribution) acc += v;
    out.mean = acc / static_cast<double>(n_bootstrap);
    out.ci_low = percentile(out.distribution, 2.5);
    out.ci_high = percentile(out.distribution, 97.5);
    return out;
}

double welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        fail(ErrorCode::TooFewSamples, "welch_t_test needs >= 2 samples per side");
    auto mean_var = [](const std::vector<double>& x) {
        double m = 0.0;
        for (double v : x) m += v;
        m /= static_cast<double>(x.size());
        double s = 0.0;
        for (double v : x) s += (v - m) * (v - m);
        return std::pair<double, double>{m, s / static_cast<double>(x.size() - 1)};
    };
    auto [ma, va] = mean_var(a);
    auto [mb, vb] = mean_var(b);
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double se2 = va / na + vb / nb;
    if (se2 == 0.0) return ma == mb ? 1.0 : 0.0;

    double t = (ma - mb) / std::sqrt(se2);
    double df = se2 * se2 /
                (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) fail(ErrorCode::InvalidParams, "percentile of empty set");
    if (q < 0.0 || q > 100.0) fail(ErrorCode::InvalidParams, "percentile q must be in [0,100]");
    std::sort(values.begin(), values.end());
    double rank = q / 100.0 * static_cast<double>(values.size() - 1);
    size_t lo = static_cast<size_t>(std::floor(rank));
    size_t hi = static_cast<size_t>(std::ceil(rank));
    double frac = rank - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace psmlab
