#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace agristab::stats {

double mean(const std::vector<double>& xs);
double median(std::vector<double> xs);

// Sample standard deviation (n-1 divisor); requires n >= 2.
double sd(const std::vector<double>& xs);
// Median absolute deviation from the median, unscaled.
double mad(const std::vector<double>& xs);
// sd/mean; throws std::domain_error when the mean is zero.
double cv(const std::vector<double>& xs);

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;       // two-sided
    bool exact = false;
};

// Paired signed-rank test. Zero differences are dropped before ranking;
// exact null enumeration for effective n <= 25, otherwise normal
// approximation with average-rank ties and continuity correction.
TestResult wilcoxon_signed_rank(const std::vector<double>& x,
                                const std::vector<double>& y);

// Independent-samples rank-sum test (Mann-Whitney U statistic). Exact
// enumeration for n+m <= 20, otherwise tie-corrected normal approximation.
TestResult wilcoxon_rank_sum(const std::vector<double>& x,
                             const std::vector<double>& y);

struct BootstrapConfig {
    std::size_t replicates = 1000;
    double level = 0.83;        // percentile bounds (1-level)/2 and 1-(1-level)/2
    std::uint64_t seed = 0;

    void validate() const;
};

using Statistic = std::function<double(const std::vector<double>&)>;
// Statistic of a resampled index multiset; enables cluster (farm-level)
// bootstrap where one index drags a whole trajectory along.
using IndexStatistic = std::function<double(const std::vector<std::size_t>&)>;

// Percentile interval of `statistic` over resamples with replacement.
// Deterministic per seed; replicates evaluate in parallel.
std::pair<double, double> bootstrap_ci(const std::vector<double>& xs,
                                       const Statistic& statistic,
                                       const BootstrapConfig& config);

std::pair<double, double> bootstrap_ci_indices(std::size_t n,
                                               const IndexStatistic& statistic,
                                               const BootstrapConfig& config);

// Replicate values themselves (sorted); shared by both bootstrap fronts.
std::vector<double> bootstrap_replicates(std::size_t n,
                                         const IndexStatistic& statistic,
                                         const BootstrapConfig& config);

// Linear-interpolation quantile of a sorted vector (R type 7).
double quantile_sorted(const std::vector<double>& sorted, double q);

struct KdeResult {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth = 0.0;
};

// Epanechnikov kernel density on an equispaced grid spanning the data
// +- 3 bandwidths; bandwidth by Silverman's rule of thumb.
KdeResult epanechnikov_kde(const std::vector<double>& xs,
                           std::size_t grid_points = 512);

} // namespace agristab::stats
