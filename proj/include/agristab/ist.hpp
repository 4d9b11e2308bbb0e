#pragma once

#include "agristab/panel.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace agristab::ist {

struct IstParams {
    double alpha = 0.7;          // trigger fraction of expected income
    double beta = 0.7;           // compensated share of the shortfall from E
    int window = 3;              // years of history behind the expected income
    double recovery_share = 0.35;// share of indemnities recovered from farmers

    void validate() const;
};

struct IndemnityRecord {
    std::string farm_id;
    int year = 0;
    double realized = 0.0;       // I_it
    double expected = 0.0;       // E_it
    double trigger = 0.0;        // alpha * E_it
    double indemnity = 0.0;      // >= 0
};

struct MutualFundScenario {
    enum class Grouping { National, ByCategory };
    Grouping grouping = Grouping::National;
    std::string category;        // categorical column name when ByCategory

    static MutualFundScenario national() { return {}; }
    static MutualFundScenario by_category(std::string name) {
        return {Grouping::ByCategory, std::move(name)};
    }
};

enum class ContributionScheme { Flat, ProportionalToExpectedIncome };

// Arithmetic mean of the last `window` realized incomes, oldest first.
double expected_income(const std::vector<double>& history);

// Eq.-(1) style payout: 0 when I >= alpha*E, else beta*(E - I).
double indemnity(double realized, double expected, const IstParams& params);

// Weighted fund total of per-farm indemnities.
double total_indemnity(const std::vector<double>& indemnities,
                       const std::vector<double>& weights);

double indemnity_rate(double total_ind, double total_expected);

// Same flat amount for every member farm of a fund-year.
double flat_contribution(double total_ind, double weight_sum, double recovery_share);

// Farm-specific share proportional to expected income.
double proportional_contribution(double total_ind, double total_expected,
                                 double expected_i, double recovery_share);

struct IncomeIndicators {
    double with_indemnity = 0.0;     // I_I = I + Ind
    double net_of_contribution = 0.0;// I_I - Cont (I_IF or I_IE per scheme)
};

IncomeIndicators income_indicators(double income, double ind, double cont);

// Benefit/cost ratio of the scheme for one farm; 0 when no indemnity received.
double dcb(double avg_indemnity, double avg_contribution);

struct FarmYearOutcome {
    std::string farm_id;
    int year = 0;
    int fund = 0;                // index into ScenarioResult::fund_levels
    double weight = 1.0;
    double income = 0.0;
    double expected = 0.0;
    double indemnity = 0.0;
    double contribution = 0.0;
    double with_indemnity = 0.0;
    double net_of_contribution = 0.0;
};

struct FundYear {
    int fund = 0;
    int year = 0;
    double total_indemnity = 0.0;  // TInd_t
    double total_expected = 0.0;   // TE_t
    double weight_sum = 0.0;
    double rate = 0.0;             // TInd/TE, 0 when the fund-year is empty
    std::size_t members = 0;
};

struct FarmSummary {
    std::string farm_id;
    int fund = 0;
    double weight = 1.0;
    double avg_indemnity = 0.0;
    double avg_contribution = 0.0;
    double dcb = 0.0;
    int years_observed = 0;
    int years_indemnified = 0;
};

struct ScenarioResult {
    MutualFundScenario scenario;
    ContributionScheme scheme = ContributionScheme::Flat;
    IstParams params;
    std::vector<std::string> fund_levels;  // "national" or category levels
    std::vector<int> years;                // simulated years, ascending
    std::vector<FarmYearOutcome> outcomes; // (farm_id, year) order
    std::vector<FundYear> fund_years;      // (fund, year) order
    std::vector<FarmSummary> farms;        // farm_id order
};

// Runs the IST over every panel year with a complete positive-reference
// history. Contributions of year t are funded from year-t TInd. Empty funds
// (category level with no farms) are reported with zero totals.
ScenarioResult simulate_scenario(const FarmPanel& panel,
                                 const MutualFundScenario& scenario,
                                 ContributionScheme scheme,
                                 const IstParams& params);

// Per-farm indemnity records over all simulatable farm-years; the labeled
// response of the ratemaking pipeline. Order: (farm_id, year).
std::vector<IndemnityRecord> indemnity_records(const FarmPanel& panel,
                                               const IstParams& params);

} // namespace agristab::ist
