#pragma once

#include "agristab/panel.hpp"

#include <cstdint>

namespace agristab {

// Stand-in for the confidential FADN microdata. Income follows
//   income[i,t] = base[i] * (1 + group_shock[g(i),t] + e[i,t])
// with e an AR(1) with Student-t innovations, so panels show farm fixed
// effects, within-group systemic co-movement and occasional negative incomes.
struct SyntheticConfig {
    std::size_t n_farms = 1000;
    int years = 8;
    int first_year = 2008;

    int altimetry_levels = 3;
    int macroregion_levels = 5;
    int tof_levels = 7;               // types of farming

    double base_income_mean = 36000;  // farm fixed effect: lognormal around this
    double fixed_effect_spread = 0.55;// sigma of log base income
    double ar_coefficient = 0.25;     // AR(1) persistence of e[i,t], in (-1,1)
    double systemic_shock_sd = 0.06;  // sd of the per-(group,year) common shock
    double idiosyncratic_sd = 0.18;   // sd of AR(1) innovations
    double heavy_tail_df = 5.0;       // Student-t dof of innovations (>2)
    double risk_heterogeneity = 1.0;  // scale of covariate-driven risk spread
    bool weighted = true;             // draw FADN-style extrapolation weights
    std::uint64_t seed = 1;

    void validate() const;            // throws on invalid settings
};

// Column layout of the generated panels; also the default schema the CLI
// assumes for externally supplied CSVs.
PanelSchema synthetic_schema(const SyntheticConfig& config);

FarmPanel generate_synthetic(const SyntheticConfig& config);

} // namespace agristab
