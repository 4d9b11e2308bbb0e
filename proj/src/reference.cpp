#include "agristab/reference.hpp"

#include "agristab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

namespace agristab::reference {

// The scenario recomputation below deliberately avoids the ist:: helpers:
// every quantity is rebuilt from the raw panel with plain loops so the two
// paths share no arithmetic.

ist::ScenarioResult simulate_scenario(const FarmPanel& panel,
                                      const ist::MutualFundScenario& scenario,
                                      ist::ContributionScheme scheme,
                                      const ist::IstParams& params) {
    ist::ScenarioResult res;
    res.scenario = scenario;
    res.scheme = scheme;
    res.params = params;

    // fund labels
    int category_slot = -1;
    if (scenario.grouping == ist::MutualFundScenario::Grouping::National) {
        res.fund_levels = {"national"};
    } else {
        const auto cat_idx = panel.schema.categorical_indices();
        for (std::size_t k = 0; k < cat_idx.size(); ++k)
            if (panel.schema.columns[cat_idx[k]].name == scenario.category) {
                category_slot = static_cast<int>(k);
                res.fund_levels = panel.schema.columns[cat_idx[k]].levels;
            }
        if (category_slot < 0)
            throw std::invalid_argument("unknown categorical column: " + scenario.category);
    }

    // income history per farm
    std::map<std::string, std::map<int, double>> incomes;
    for (const auto& r : panel.records) incomes[r.farm_id][r.year] = r.income;

    struct Entry {
        const FarmYearRecord* rec;
        int fund;
        double expected;
        double ind;
    };
    std::vector<Entry> entries;
    for (const auto& r : panel.records) {
        const auto& hist = incomes[r.farm_id];
        double sum = 0.0;
        bool complete = true;
        // history enters the mean oldest-first
        for (int back = params.window; back >= 1; --back) {
            auto it = hist.find(r.year - back);
            if (it == hist.end()) {
                complete = false;
                break;
            }
            sum += it->second;
        }
        if (!complete) continue;
        const double expected = sum / params.window;
        if (!(expected > 0.0)) continue;
        double ind = 0.0;
        if (r.income < params.alpha * expected) ind = params.beta * (expected - r.income);
        int fund = category_slot >= 0 ? r.categories[category_slot] : 0;
        entries.push_back({&r, fund, expected, ind});
    }

    std::vector<int> years;
    for (const auto& e : entries) years.push_back(e.rec->year);
    std::sort(years.begin(), years.end());
    years.erase(std::unique(years.begin(), years.end()), years.end());
    res.years = years;
    const int n_years = static_cast<int>(years.size());
    const int n_funds = static_cast<int>(res.fund_levels.size());
    auto slot_of = [&years](int y) {
        return static_cast<int>(std::lower_bound(years.begin(), years.end(), y) - years.begin());
    };

    res.fund_years.assign(static_cast<std::size_t>(n_funds) * n_years, ist::FundYear{});
    for (int f = 0; f < n_funds; ++f)
        for (int t = 0; t < n_years; ++t) {
            auto& fy = res.fund_years[f * n_years + t];
            fy.fund = f;
            fy.year = years[t];
        }
    for (int f = 0; f < n_funds; ++f)
        for (const auto& e : entries) {
            if (e.fund != f) continue;
            auto& fy = res.fund_years[f * n_years + slot_of(e.rec->year)];
            fy.total_indemnity += e.ind * e.rec->weight;
            fy.total_expected += e.expected * e.rec->weight;
            fy.weight_sum += e.rec->weight;
            fy.members += 1;
        }
    for (auto& fy : res.fund_years)
        fy.rate = fy.total_expected > 0.0 ? fy.total_indemnity / fy.total_expected : 0.0;

    for (const auto& e : entries) {
        const auto& fy = res.fund_years[e.fund * n_years + slot_of(e.rec->year)];
        ist::FarmYearOutcome o;
        o.farm_id = e.rec->farm_id;
        o.year = e.rec->year;
        o.fund = e.fund;
        o.weight = e.rec->weight;
        o.income = e.rec->income;
        o.expected = e.expected;
        o.indemnity = e.ind;
        if (scheme == ist::ContributionScheme::Flat) {
            o.contribution =
                fy.weight_sum > 0.0 ? params.recovery_share * fy.total_indemnity / fy.weight_sum
                                    : 0.0;
        } else {
            o.contribution = fy.total_expected > 0.0
                                 ? params.recovery_share * fy.total_indemnity /
                                       fy.total_expected * e.expected
                                 : 0.0;
        }
        o.with_indemnity = o.income + o.indemnity;
        o.net_of_contribution = o.income + o.indemnity - o.contribution;
        res.outcomes.push_back(o);
    }

    std::size_t i = 0;
    while (i < res.outcomes.size()) {
        std::size_t j = i;
        double ind_sum = 0.0, cont_sum = 0.0;
        int indemnified = 0;
        while (j < res.outcomes.size() && res.outcomes[j].farm_id == res.outcomes[i].farm_id) {
            ind_sum += res.outcomes[j].indemnity;
            cont_sum += res.outcomes[j].contribution;
            if (res.outcomes[j].indemnity > 0.0) ++indemnified;
            ++j;
        }
        ist::FarmSummary s;
        s.farm_id = res.outcomes[i].farm_id;
        s.fund = res.outcomes[i].fund;
        s.weight = res.outcomes[i].weight;
        s.years_observed = static_cast<int>(j - i);
        s.years_indemnified = indemnified;
        s.avg_indemnity = ind_sum / s.years_observed;
        s.avg_contribution = cont_sum / s.years_observed;
        if (s.avg_indemnity == 0.0)
            s.dcb = 0.0;
        else
            s.dcb = s.avg_contribution > 0.0 ? s.avg_indemnity / s.avg_contribution : 0.0;
        res.farms.push_back(s);
        i = j;
    }
    return res;
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& xs,
                                       const stats::Statistic& statistic,
                                       const stats::BootstrapConfig& config) {
    config.validate();
    std::vector<double> reps(config.replicates);
    std::vector<double> sample(xs.size());
    for (std::size_t r = 0; r < config.replicates; ++r) {
        auto rng = make_rng(config.seed, r);
        std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
        for (std::size_t i = 0; i < xs.size(); ++i) sample[i] = xs[pick(rng)];
        reps[r] = statistic(sample);
    }
    std::sort(reps.begin(), reps.end());
    const double tail = (1.0 - config.level) / 2.0;
    return {stats::quantile_sorted(reps, tail), stats::quantile_sorted(reps, 1.0 - tail)};
}

stats::KdeResult epanechnikov_kde(const std::vector<double>& xs, std::size_t grid_points) {
    if (xs.size() < 2) throw std::invalid_argument("kde requires n >= 2");
    double m = 0.0;
    for (double v : xs) m += v;
    m /= xs.size();
    double ss = 0.0;
    for (double v : xs) ss += (v - m) * (v - m);
    const double sdev = std::sqrt(ss / (xs.size() - 1));
    std::vector<double> sorted(xs);
    std::sort(sorted.begin(), sorted.end());
    const double iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
    double spread = std::min(sdev, iqr / 1.34);
    if (spread <= 0.0) spread = sdev;
    if (spread <= 0.0) throw std::domain_error("kde requires non-constant data");
    const double h = 0.9 * spread * std::pow(static_cast<double>(xs.size()), -0.2);
    const double support = h * std::sqrt(5.0);

    stats::KdeResult out;
    out.bandwidth = h;
    const double lo = sorted.front() - 3.0 * h;
    const double hi = sorted.back() + 3.0 * h;
    out.grid.resize(grid_points);
    out.density.assign(grid_points, 0.0);
    for (std::size_t g = 0; g < grid_points; ++g) {
        out.grid[g] = lo + (hi - lo) * static_cast<double>(g) /
                               static_cast<double>(grid_points - 1);
        double acc = 0.0;
        for (double v : xs) {
            const double u = (out.grid[g] - v) / support;
            if (u > -1.0 && u < 1.0) acc += 0.75 * (1.0 - u * u);
        }
        out.density[g] = acc / (xs.size() * support);
    }
    return out;
}

} // namespace agristab::reference
