// Timing comparison of the OpenMP kernels against their serial reference
// implementations. Checks the outputs agree before reporting the speedup.

#include "agristab/boosting.hpp"
#include "agristab/ist.hpp"
#include "agristab/reference.hpp"
#include "agristab/stats.hpp"
#include "agristab/synthetic.hpp"
#include "agristab/tweedie.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <omp.h>

using namespace agristab;

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_ms(F&& fn, int repeats = 3) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const double t0 = now_ms();
        fn();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool match) {
    std::printf("%-22s serial %9.1f ms   parallel %9.1f ms   speedup %5.2fx   %s\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms,
                match ? "outputs match" : "OUTPUT MISMATCH");
}

} // namespace

int main() {
    std::printf("threads available: %d\n\n", omp_get_max_threads());

    SyntheticConfig cfg;
    cfg.n_farms = 4000;
    cfg.years = 10;
    cfg.seed = 7;
    const FarmPanel panel = generate_synthetic(cfg);
    const ist::IstParams params;

    // IST scenario engine vs straight-line serial recomputation
    {
        const auto scenario = ist::MutualFundScenario::by_category("type_of_farming");
        ist::ScenarioResult fast, slow;
        const double t_par = time_ms([&] {
            fast = ist::simulate_scenario(panel, scenario,
                                          ist::ContributionScheme::Flat, params);
        });
        const double t_ser = time_ms([&] {
            slow = reference::simulate_scenario(panel, scenario,
                                                ist::ContributionScheme::Flat, params);
        });
        bool match = fast.outcomes.size() == slow.outcomes.size();
        for (std::size_t i = 0; match && i < fast.outcomes.size(); ++i)
            match = fast.outcomes[i].indemnity == slow.outcomes[i].indemnity &&
                    fast.outcomes[i].contribution == slow.outcomes[i].contribution;
        report("ist scenario", t_ser, t_par, match);
    }

    // bootstrap over replicates
    {
        std::vector<double> sample;
        for (const auto& r : panel.records) sample.push_back(r.income);
        sample.resize(20000);
        stats::BootstrapConfig bcfg;
        bcfg.replicates = 2000;
        bcfg.seed = 11;
        auto statistic = [](const std::vector<double>& xs) { return stats::median(xs); };
        std::pair<double, double> fast, slow;
        const double t_par =
            time_ms([&] { fast = stats::bootstrap_ci(sample, statistic, bcfg); });
        const double t_ser =
            time_ms([&] { slow = reference::bootstrap_ci(sample, statistic, bcfg); });
        report("bootstrap ci", t_ser, t_par, fast == slow);
    }

    // kernel density over the grid
    {
        std::vector<double> sample;
        for (const auto& r : panel.records) sample.push_back(r.income);
        stats::KdeResult fast, slow;
        const double t_par = time_ms([&] { fast = stats::epanechnikov_kde(sample, 2048); });
        const double t_ser =
            time_ms([&] { slow = reference::epanechnikov_kde(sample, 2048); });
        bool match = fast.grid.size() == slow.grid.size();
        for (std::size_t i = 0; match && i < fast.density.size(); ++i)
            match = std::abs(fast.density[i] - slow.density[i]) <=
                    1e-12 * std::max(1.0, std::abs(slow.density[i]));
        report("epanechnikov kde", t_ser, t_par, match);
    }

    // boosting split search across features: 1 thread vs all
    {
        const int n = 4000, k = 30;
        Eigen::MatrixXd X(n, k);
        std::mt19937_64 rng(3);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j) X(i, j) = normal(rng);
        Eigen::VectorXd mu(n);
        for (int i = 0; i < n; ++i)
            mu(i) = std::exp(0.3 * X(i, 0) - 0.2 * X(i, 1));
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            auto draws = tweedie::sample({mu(i), 1.0, 1.5}, 1,
                                         static_cast<std::uint64_t>(i) + 99);
            y(i) = draws[0];
        }
        boosting::BoostConfig bcfg;
        bcfg.max_trees = 60;
        bcfg.learning_rate = 0.1;
        boosting::BoostModel fast, slow;
        const double t_par =
            time_ms([&] { fast = boosting::fit(X, y, 1.5, bcfg); }, 1);
        const int max_threads = omp_get_max_threads();
        omp_set_num_threads(1);
        const double t_ser =
            time_ms([&] { slow = boosting::fit(X, y, 1.5, bcfg); }, 1);
        omp_set_num_threads(max_threads);
        const bool match =
            fast.train_deviance.back() == slow.train_deviance.back();
        report("boosting fit", t_ser, t_par, match);
    }

    return 0;
}
