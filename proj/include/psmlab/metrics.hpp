#pragma once

// Classification metrics and the statistical machinery of the evaluation
// protocol: F1, bootstrap resampling, Welch's t-test.

#include <vector>

#include "psmlab/common.hpp"

namespace psmlab {

/// F1 = 2RP/(R+P); 0 when precision+recall is 0. Nonzero entries count as 1.
double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels);

struct BootstrapResult {
    std::vector<double> distribution;  // one F1 per resample
    double mean = 0.0;
    double ci_low = 0.0;   // empirical 2.5th percentile
    double ci_high = 0.0;  // empirical 97.5th percentile
};

/// Resamples (prediction, label) rows with replacement n_bootstrap times.
BootstrapResult bootstrap_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                             int n_bootstrap, uint64_t seed);

/// Two-sided Welch (unequal variance) t-test p-value. Identical samples give
/// p = 1; zero variance with different means gives p = 0.
double welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Linear-interpolation percentile, q in [0,100].
double percentile(std::vector<double> values, double q);

}  // namespace psmlab
