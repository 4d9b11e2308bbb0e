#include "agristab/stats.hpp"

#include "agristab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace agristab::stats {

double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean of empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double median(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median of empty sample");
    const std::size_t n = xs.size();
    std::nth_element(xs.begin(), xs.begin() + n / 2, xs.end());
    double hi = xs[n / 2];
    if (n % 2 == 1) return hi;
    std::nth_element(xs.begin(), xs.begin() + n / 2 - 1, xs.end());
    return 0.5 * (hi + xs[n / 2 - 1]);
}

double sd(const std::vector<double>& xs) {
    if (xs.size() < 2) throw std::invalid_argument("sd requires n >= 2");
    const double m = mean(xs);
    double ss = 0.0;
    for (double v : xs) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double mad(const std::vector<double>& xs) {
    const double med = median(std::vector<double>(xs));
    std::vector<double> dev;
    dev.reserve(xs.size());
    for (double v : xs) dev.push_back(std::abs(v - med));
    return median(std::move(dev));
}

double cv(const std::vector<double>& xs) {
    const double m = mean(xs);
    if (m == 0.0) throw std::domain_error("cv undefined: zero mean");
    return sd(xs) / m;
}

namespace {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Average ranks of |values|; returns doubled ranks so ties stay integral.
std::vector<long> doubled_ranks(const std::vector<double>& values,
                                double* tie_correction_cubes) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<long> ranks2(n, 0);
    double ties = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        // average rank of positions [i, j) is (i+1 + j)/2
        const long doubled = static_cast<long>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) ranks2[order[k]] = doubled;
        const double t = static_cast<double>(j - i);
        ties += t * t * t - t;
        i = j;
    }
    if (tie_correction_cubes) *tie_correction_cubes = ties;
    return ranks2;
}

} // namespace

TestResult wilcoxon_signed_rank(const std::vector<double>& x,
                                const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("signed-rank test requires paired samples");
    std::vector<double> absdiff;
    std::vector<bool> positive;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        if (d == 0.0) continue;
        absdiff.push_back(std::abs(d));
        positive.push_back(d > 0.0);
    }
    const std::size_t n = absdiff.size();
    TestResult res;
    if (n == 0) {
        res.statistic = 0.0;
        res.p_value = 1.0;
        res.exact = true;
        return res;
    }
    double tie_cubes = 0.0;
    auto ranks2 = doubled_ranks(absdiff, &tie_cubes);
    long w2 = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (positive[i]) w2 += ranks2[i];
    res.statistic = 0.5 * static_cast<double>(w2);

    if (n <= 25) {
        // exact null: distribution of the doubled statistic over all sign
        // assignments, by subset-sum counting
        const long total2 = std::accumulate(ranks2.begin(), ranks2.end(), 0L);
        std::vector<double> count(total2 + 1, 0.0);
        count[0] = 1.0;
        for (std::size_t i = 0; i < n; ++i)
            for (long s = total2; s >= ranks2[i]; --s)
                count[s] += count[s - ranks2[i]];
        const double denom = std::pow(2.0, static_cast<double>(n));
        double lower = 0.0, upper = 0.0;
        for (long s = 0; s <= total2; ++s) {
            if (s <= w2) lower += count[s];
            if (s >= w2) upper += count[s];
        }
        res.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / denom);
        res.exact = true;
        return res;
    }

    const double dn = static_cast<double>(n);
    const double mu = dn * (dn + 1.0) / 4.0;
    const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_cubes / 48.0;
    const double w = res.statistic;
    double z = (w - mu - (w > mu ? 0.5 : (w < mu ? -0.5 : 0.0))) / std::sqrt(var);
    res.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
    res.exact = false;
    return res;
}

TestResult wilcoxon_rank_sum(const std::vector<double>& x,
                             const std::vector<double>& y) {
    if (x.empty() || y.empty())
        throw std::invalid_argument("rank-sum test requires non-empty samples");
    const std::size_t n = x.size(), m = y.size(), N = n + m;
    std::vector<double> pooled(x);
    pooled.insert(pooled.end(), y.begin(), y.end());
    double tie_cubes = 0.0;
    auto ranks2 = doubled_ranks(pooled, &tie_cubes);
    long wx2 = 0;
    for (std::size_t i = 0; i < n; ++i) wx2 += ranks2[i];
    const double u = 0.5 * static_cast<double>(wx2) -
                     static_cast<double>(n) * (static_cast<double>(n) + 1.0) / 2.0;
    TestResult res;
    res.statistic = u;

    if (N <= 20) {
        // exact null conditional on observed (tied) ranks: enumerate all
        // C(N, n) subsets by lexicographic combination walking
        std::vector<std::size_t> comb(n);
        std::iota(comb.begin(), comb.end(), 0);
        double total = 0.0, lower = 0.0, upper = 0.0;
        while (true) {
            long s2 = 0;
            for (auto idx : comb) s2 += ranks2[idx];
            total += 1.0;
            if (s2 <= wx2) lower += 1.0;
            if (s2 >= wx2) upper += 1.0;
            // next combination
            std::size_t k = n;
            while (k > 0 && comb[k - 1] == N - n + k - 1) --k;
            if (k == 0) break;
            ++comb[k - 1];
            for (std::size_t j = k; j < n; ++j) comb[j] = comb[j - 1] + 1;
        }
        res.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / total);
        res.exact = true;
        return res;
    }

    const double dn = static_cast<double>(n), dm = static_cast<double>(m),
                 dN = static_cast<double>(N);
    const double mu = dn * dm / 2.0;
    const double var =
        dn * dm / 12.0 * ((dN + 1.0) - tie_cubes / (dN * (dN - 1.0)));
    double z = (u - mu - (u > mu ? 0.5 : (u < mu ? -0.5 : 0.0))) / std::sqrt(var);
    res.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
    res.exact = false;
    return res;
}

void BootstrapConfig::validate() const {
    if (replicates < 1) throw std::invalid_argument("bootstrap replicates must be >= 1");
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("bootstrap level must lie in (0,1)");
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
    if (q <= 0.0) return sorted.front();
    if (q >= 1.0) return sorted.back();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

std::vector<double> bootstrap_replicates(std::size_t n,
                                         const IndexStatistic& statistic,
                                         const BootstrapConfig& config) {
    config.validate();
    if (n == 0) throw std::invalid_argument("bootstrap requires n >= 1");
    std::vector<double> reps(config.replicates);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(config.replicates); ++r) {
        auto rng = make_rng(config.seed, static_cast<std::uint64_t>(r));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = pick(rng);
        reps[r] = statistic(idx);
    }
    std::sort(reps.begin(), reps.end());
    return reps;
}

std::pair<double, double> bootstrap_ci_indices(std::size_t n,
                                               const IndexStatistic& statistic,
                                               const BootstrapConfig& config) {
    auto reps = bootstrap_replicates(n, statistic, config);
    const double tail = (1.0 - config.level) / 2.0;
    return {quantile_sorted(reps, tail), quantile_sorted(reps, 1.0 - tail)};
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& xs,
                                       const Statistic& statistic,
                                       const BootstrapConfig& config) {
    return bootstrap_ci_indices(
        xs.size(),
        [&xs, &statistic](const std::vector<std::size_t>& idx) {
            std::vector<double> sample(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) sample[i] = xs[idx[i]];
            return statistic(sample);
        },
        config);
}

KdeResult epanechnikov_kde(const std::vector<double>& xs, std::size_t grid_points) {
    if (xs.size() < 2) throw std::invalid_argument("kde requires n >= 2");
    if (grid_points < 2) throw std::invalid_argument("kde requires >= 2 grid points");
    std::vector<double> sorted(xs);
    std::sort(sorted.begin(), sorted.end());
    const double sdev = sd(xs);
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    double spread = iqr > 0.0 ? std::min(sdev, iqr / 1.34) : sdev;
    if (!(spread > 0.0)) throw std::domain_error("kde requires non-constant data");
    // Silverman rule of thumb; the kernel is rescaled to unit variance, so
    // its support radius is sqrt(5) * h.
    const double h = 0.9 * spread * std::pow(static_cast<double>(xs.size()), -0.2);
    const double support = h * std::sqrt(5.0);

    KdeResult out;
    out.bandwidth = h;
    const double lo = sorted.front() - 3.0 * h;
    const double hi = sorted.back() + 3.0 * h;
    out.grid.resize(grid_points);
    out.density.assign(grid_points, 0.0);
    const double norm = 1.0 / (static_cast<double>(xs.size()) * support);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t g = 0; g < static_cast<std::ptrdiff_t>(grid_points); ++g) {
        const double at = lo + (hi - lo) * static_cast<double>(g) /
                                   static_cast<double>(grid_points - 1);
        out.grid[g] = at;
        double acc = 0.0;
        for (double v : xs) {
            const double u = (at - v) / support;
            if (u > -1.0 && u < 1.0) acc += 0.75 * (1.0 - u * u);
        }
        out.density[g] = acc * norm;
    }
    return out;
}

} // namespace agristab::stats
