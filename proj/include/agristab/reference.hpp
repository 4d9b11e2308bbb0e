#pragma once

// Serial reference implementations, written independently of the OpenMP
// kernels they validate. Tests compare both paths for exact agreement;
// the bench target compares their runtimes.

#include "agristab/ist.hpp"
#include "agristab/panel.hpp"
#include "agristab/stats.hpp"

namespace agristab::reference {

// Straight-line recomputation of a full IST scenario: expected incomes,
// triggers, indemnities, fund totals, contributions, indicators and DCB,
// with plain per-fund sequential sums.
ist::ScenarioResult simulate_scenario(const FarmPanel& panel,
                                      const ist::MutualFundScenario& scenario,
                                      ist::ContributionScheme scheme,
                                      const ist::IstParams& params);

// Serial percentile bootstrap with the same per-replicate seed derivation.
std::pair<double, double> bootstrap_ci(const std::vector<double>& xs,
                                       const stats::Statistic& statistic,
                                       const stats::BootstrapConfig& config);

// Serial kernel-sum KDE on the same grid rule.
stats::KdeResult epanechnikov_kde(const std::vector<double>& xs,
                                  std::size_t grid_points = 512);

} // namespace agristab::reference
