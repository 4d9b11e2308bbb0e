#include "agristab/ist.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace agristab::ist {

void IstParams::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0,1]");
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in (0,1]");
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    if (recovery_share < 0.0 || recovery_share > 1.0)
        throw std::invalid_argument("recovery_share must lie in [0,1]");
}

double expected_income(const std::vector<double>& history) {
    if (history.empty())
        throw std::domain_error("expected income undefined: empty history");
    double sum = 0.0;
    for (double v : history) sum += v;
    return sum / static_cast<double>(history.size());
}

double indemnity(double realized, double expected, const IstParams& params) {
    const double trigger = params.alpha * expected;
    if (realized >= trigger) return 0.0;
    return params.beta * (expected - realized);
}

double total_indemnity(const std::vector<double>& indemnities,
                       const std::vector<double>& weights) {
    if (indemnities.size() != weights.size())
        throw std::invalid_argument("indemnities and weights differ in length");
    double sum = 0.0;
    for (std::size_t i = 0; i < indemnities.size(); ++i)
        sum += indemnities[i] * weights[i];
    return sum;
}

double indemnity_rate(double total_ind, double total_expected) {
    if (total_expected <= 0.0)
        throw std::domain_error("indemnity rate undefined: total expected income <= 0");
    return total_ind / total_expected;
}

double flat_contribution(double total_ind, double weight_sum, double recovery_share) {
    if (weight_sum <= 0.0)
        throw std::domain_error("flat contribution undefined: zero total weight");
    return recovery_share * total_ind / weight_sum;
}

double proportional_contribution(double total_ind, double total_expected,
                                 double expected_i, double recovery_share) {
    if (total_expected <= 0.0)
        throw std::domain_error("proportional contribution undefined: TE <= 0");
    return recovery_share * total_ind / total_expected * expected_i;
}

IncomeIndicators income_indicators(double income, double ind, double cont) {
    if (ind < 0.0) throw std::invalid_argument("indemnity must be >= 0");
    if (cont < 0.0) throw std::invalid_argument("contribution must be >= 0");
    IncomeIndicators out;
    out.with_indemnity = income + ind;
    out.net_of_contribution = out.with_indemnity - cont;
    return out;
}

double dcb(double avg_indemnity, double avg_contribution) {
    if (avg_indemnity == 0.0) return 0.0;
    if (avg_contribution <= 0.0)
        throw std::domain_error("DCB undefined: average contribution <= 0");
    return avg_indemnity / avg_contribution;
}

namespace {

struct SimRow {
    std::size_t record = 0;   // index into panel.records
    int fund = 0;
    double expected = 0.0;
    double indemnity = 0.0;
};

// Per-farm simulatable rows: complete `window`-year history with a positive
// reference income.
std::vector<SimRow> collect_rows(const FarmPanel& panel, const IstParams& params,
                                 const std::vector<int>& fund_of_record) {
    std::vector<SimRow> rows;
    for (auto [first, last] : panel.farm_ranges()) {
        for (std::size_t i = first; i < last; ++i) {
            const int year = panel.records[i].year;
            double sum = 0.0;
            int found = 0;
            for (std::size_t j = first; j < last; ++j) {
                const int y = panel.records[j].year;
                if (y >= year - params.window && y <= year - 1) {
                    sum += panel.records[j].income;
                    ++found;
                }
            }
            if (found != params.window) continue;
            const double expected = sum / params.window;
            if (expected <= 0.0) continue;
            SimRow row;
            row.record = i;
            row.fund = fund_of_record[i];
            row.expected = expected;
            row.indemnity = indemnity(panel.records[i].income, expected, params);
            rows.push_back(row);
        }
    }
    return rows;
}

} // namespace

std::vector<IndemnityRecord> indemnity_records(const FarmPanel& panel,
                                               const IstParams& params) {
    params.validate();
    std::vector<int> funds(panel.records.size(), 0);
    auto rows = collect_rows(panel, params, funds);
    std::vector<IndemnityRecord> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        const auto& rec = panel.records[row.record];
        IndemnityRecord r;
        r.farm_id = rec.farm_id;
        r.year = rec.year;
        r.realized = rec.income;
        r.expected = row.expected;
        r.trigger = params.alpha * row.expected;
        r.indemnity = row.indemnity;
        out.push_back(std::move(r));
    }
    return out;
}

ScenarioResult simulate_scenario(const FarmPanel& panel,
                                 const MutualFundScenario& scenario,
                                 ContributionScheme scheme,
                                 const IstParams& params) {
    params.validate();

    ScenarioResult result;
    result.scenario = scenario;
    result.scheme = scheme;
    result.params = params;

    std::vector<int> fund_of_record(panel.records.size(), 0);
    if (scenario.grouping == MutualFundScenario::Grouping::National) {
        result.fund_levels = {"national"};
    } else {
        const ColumnSpec* col = panel.schema.find(scenario.category);
        if (!col || col->kind != ColumnKind::Categorical)
            throw std::invalid_argument("unknown categorical column: " + scenario.category);
        result.fund_levels = col->levels;
        std::size_t slot = 0;
        const auto cat_idx = panel.schema.categorical_indices();
        for (std::size_t k = 0; k < cat_idx.size(); ++k)
            if (panel.schema.columns[cat_idx[k]].name == scenario.category) slot = k;
        for (std::size_t i = 0; i < panel.records.size(); ++i)
            fund_of_record[i] = panel.records[i].categories[slot];
    }
    const int n_funds = static_cast<int>(result.fund_levels.size());

    auto rows = collect_rows(panel, params, fund_of_record);

    std::vector<int> years;
    for (const auto& row : rows) years.push_back(panel.records[row.record].year);
    std::sort(years.begin(), years.end());
    years.erase(std::unique(years.begin(), years.end()), years.end());
    result.years = years;
    const int n_years = static_cast<int>(years.size());
    std::map<int, int> year_slot;
    for (int t = 0; t < n_years; ++t) year_slot[years[t]] = t;

    // Fund-year totals: deterministic sequential reduction per fund; funds
    // run in parallel. Rows are already in (farm_id, year) panel order.
    result.fund_years.assign(static_cast<std::size_t>(n_funds) * n_years, FundYear{});
    for (int f = 0; f < n_funds; ++f)
        for (int t = 0; t < n_years; ++t) {
            auto& fy = result.fund_years[f * n_years + t];
            fy.fund = f;
            fy.year = years[t];
        }

#pragma omp parallel for schedule(static)
    for (int f = 0; f < n_funds; ++f) {
        for (const auto& row : rows) {
            if (row.fund != f) continue;
            const auto& rec = panel.records[row.record];
            auto& fy = result.fund_years[f * n_years + year_slot[rec.year]];
            fy.total_indemnity += row.indemnity * rec.weight;
            fy.total_expected += row.expected * rec.weight;
            fy.weight_sum += rec.weight;
            fy.members += 1;
        }
        for (int t = 0; t < n_years; ++t) {
            auto& fy = result.fund_years[f * n_years + t];
            fy.rate = fy.total_expected > 0.0 ? fy.total_indemnity / fy.total_expected : 0.0;
        }
    }

    result.outcomes.resize(rows.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(rows.size()); ++k) {
        const auto& row = rows[k];
        const auto& rec = panel.records[row.record];
        const auto& fy = result.fund_years[row.fund * n_years + year_slot.at(rec.year)];
        FarmYearOutcome out;
        out.farm_id = rec.farm_id;
        out.year = rec.year;
        out.fund = row.fund;
        out.weight = rec.weight;
        out.income = rec.income;
        out.expected = row.expected;
        out.indemnity = row.indemnity;
        if (scheme == ContributionScheme::Flat)
            out.contribution = fy.weight_sum > 0.0
                                   ? params.recovery_share * fy.total_indemnity / fy.weight_sum
                                   : 0.0;
        else
            out.contribution = fy.total_expected > 0.0
                                   ? params.recovery_share * fy.total_indemnity /
                                         fy.total_expected * row.expected
                                   : 0.0;
        const auto ind = income_indicators(rec.income, out.indemnity, out.contribution);
        out.with_indemnity = ind.with_indemnity;
        out.net_of_contribution = ind.net_of_contribution;
        result.outcomes[k] = std::move(out);
    }

    // Per-farm summaries in outcome (= farm_id) order.
    std::size_t i = 0;
    while (i < result.outcomes.size()) {
        std::size_t j = i + 1;
        while (j < result.outcomes.size() &&
               result.outcomes[j].farm_id == result.outcomes[i].farm_id)
            ++j;
        FarmSummary s;
        s.farm_id = result.outcomes[i].farm_id;
        s.fund = result.outcomes[i].fund;
        s.weight = result.outcomes[i].weight;
        double ind_sum = 0.0, cont_sum = 0.0;
        for (std::size_t k = i; k < j; ++k) {
            ind_sum += result.outcomes[k].indemnity;
            cont_sum += result.outcomes[k].contribution;
            if (result.outcomes[k].indemnity > 0.0) ++s.years_indemnified;
        }
        s.years_observed = static_cast<int>(j - i);
        s.avg_indemnity = ind_sum / s.years_observed;
        s.avg_contribution = cont_sum / s.years_observed;
        s.dcb = s.avg_indemnity == 0.0
                    ? 0.0
                    : (s.avg_contribution > 0.0 ? s.avg_indemnity / s.avg_contribution : 0.0);
        result.farms.push_back(std::move(s));
        i = j;
    }

    return result;
}

} // namespace agristab::ist
