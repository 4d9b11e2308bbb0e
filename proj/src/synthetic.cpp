#include "agristab/synthetic.hpp"

#include "agristab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace agristab {

void SyntheticConfig::validate() const {
    if (n_farms == 0) throw std::invalid_argument("n_farms must be positive");
    if (years < 1) throw std::invalid_argument("years must be >= 1");
    if (altimetry_levels < 1 || macroregion_levels < 1 || tof_levels < 1)
        throw std::invalid_argument("category level counts must be >= 1");
    if (!(ar_coefficient > -1.0 && ar_coefficient < 1.0))
        throw std::invalid_argument("AR coefficient must lie in (-1,1)");
    if (systemic_shock_sd < 0 || idiosyncratic_sd < 0 || fixed_effect_spread < 0)
        throw std::invalid_argument("spread parameters must be >= 0");
    if (heavy_tail_df <= 2.0)
        throw std::invalid_argument("heavy_tail_df must exceed 2");
    if (base_income_mean <= 0)
        throw std::invalid_argument("base_income_mean must be positive");
}

namespace {

std::vector<std::string> level_names(const std::string& prefix, int count,
                                     const std::vector<std::string>& defaults) {
    if (count == static_cast<int>(defaults.size())) return defaults;
    std::vector<std::string> out;
    for (int i = 1; i <= count; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

double student_t(std::mt19937_64& rng, double df) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::chi_squared_distribution<double> chisq(df);
    return normal(rng) / std::sqrt(chisq(rng) / df);
}

} // namespace

PanelSchema synthetic_schema(const SyntheticConfig& config) {
    PanelSchema schema;
    auto add_numeric = [&schema](const std::string& name, bool monetary) {
        schema.columns.push_back({name, ColumnKind::Numeric, monetary, {}});
    };
    auto add_categorical = [&schema](const std::string& name,
                                     std::vector<std::string> levels) {
        schema.columns.push_back({name, ColumnKind::Categorical, false, std::move(levels)});
    };
    // size family
    add_numeric("lnd", false);
    add_numeric("lu", false);
    add_numeric("lab_awu", false);
    add_numeric("rev", true);
    // production family
    add_numeric("machin", false);
    add_numeric("h_index", false);
    add_numeric("oga_share", false);
    // financial family
    add_numeric("fxcost", true);
    add_numeric("curcost_ratio", false);
    add_numeric("debt_ratio", false);
    add_numeric("l_imm", true);
    add_numeric("k_circ", true);
    add_numeric("insure_ratio", false);
    // policy family
    add_numeric("ddp", true);
    add_numeric("cdp", true);
    add_numeric("rdp_aes", true);
    add_categorical("altimetry",
                    level_names("ALT", config.altimetry_levels, {"MOUNT", "HILL", "PLAIN"}));
    add_categorical("macro_region",
                    level_names("MR", config.macroregion_levels,
                                {"NW", "NE", "CEN", "SOU", "ISL"}));
    add_categorical("type_of_farming", level_names("TF", config.tof_levels, {}));
    add_categorical("gender", {"M", "F"});
    add_categorical("organic", {"NO", "YES"});
    return schema;
}

FarmPanel generate_synthetic(const SyntheticConfig& config) {
    config.validate();

    FarmPanel panel;
    panel.schema = synthetic_schema(config);
    panel.records.reserve(config.n_farms * static_cast<std::size_t>(config.years));

    // Common shocks per (category, level, year); the three structural
    // groupings each carry an independent stream.
    auto shock_rng = make_rng(config.seed, 0xAu);
    std::normal_distribution<double> shock_dist(0.0, 1.0);
    auto draw_shocks = [&](int levels) {
        std::vector<std::vector<double>> s(levels, std::vector<double>(config.years));
        for (int l = 0; l < levels; ++l)
            for (int t = 0; t < config.years; ++t)
                s[l][t] = config.systemic_shock_sd * shock_dist(shock_rng);
        return s;
    };
    auto alt_shock = draw_shocks(config.altimetry_levels);
    auto mr_shock = draw_shocks(config.macroregion_levels);
    auto tof_shock = draw_shocks(config.tof_levels);

    const double innov_scale =
        config.idiosyncratic_sd * std::sqrt((config.heavy_tail_df - 2.0) / config.heavy_tail_df);
    const double log_base_mu =
        std::log(config.base_income_mean) - 0.5 * config.fixed_effect_spread * config.fixed_effect_spread;

    int id_width = 1;
    for (std::size_t v = config.n_farms; v >= 10; v /= 10) ++id_width;

    for (std::size_t f = 0; f < config.n_farms; ++f) {
        auto rng = make_rng(config.seed, 0x100u + f);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        std::ostringstream id;
        id << "F";
        std::string digits = std::to_string(f + 1);
        id << std::string(id_width - static_cast<int>(digits.size()) < 0
                              ? 0
                              : id_width - digits.size(), '0')
           << digits;

        const int alt = static_cast<int>(unif(rng) * config.altimetry_levels) %
                        config.altimetry_levels;
        const int mr = static_cast<int>(unif(rng) * config.macroregion_levels) %
                       config.macroregion_levels;
        const int tof = static_cast<int>(unif(rng) * config.tof_levels) % config.tof_levels;
        const int gender = unif(rng) < 0.88 ? 0 : 1;
        const int organic = unif(rng) < 0.12 ? 1 : 0;

        const double base = std::exp(log_base_mu + config.fixed_effect_spread * normal(rng)) *
                            (1.0 + 0.10 * std::cos(2.0 * M_PI * tof / config.tof_levels));

        const double lnd = std::exp(std::log(20.0) + 0.9 * normal(rng));
        const double lu = std::exp(std::log(8.0) + 1.1 * normal(rng));
        const double lab = std::exp(std::log(1.8) + 0.5 * normal(rng));
        const double rev = base * (2.1 + 0.5 * unif(rng));
        const double machin = std::exp(std::log(12.0) + 0.6 * normal(rng));
        const double h_index = 0.35 + 0.6 * std::pow(unif(rng), 0.7);
        const double oga = std::max(0.0, 0.25 * unif(rng) - 0.05);
        const double fxcost = std::exp(std::log(1500.0) + 0.7 * normal(rng));
        const double curcost = 0.35 + 0.5 * unif(rng);
        const double debt = std::min(0.9, std::abs(0.02 + 0.05 * normal(rng)));
        const double l_imm = base * (0.05 + 0.35 * unif(rng));
        const double k_circ = base * (0.2 + 0.6 * unif(rng));
        const double insure = std::max(0.0, 0.02 + 0.02 * normal(rng));
        const double ddp = lnd * (80.0 + 320.0 * unif(rng));
        const double cdp = lnd * std::max(0.0, 150.0 * normal(rng) + 60.0) * 0.3;
        const double rdp = (alt == 0 ? 1.8 : 1.0) * lnd * (20.0 + 60.0 * unif(rng));

        // Risk scale: specialised, small, organic and some farm types are
        // riskier; these covariates therefore carry ratemaking signal.
        const double risk =
            std::exp(config.risk_heterogeneity *
                     (0.9 * (h_index - 0.65) - 0.15 * std::log(lnd / 20.0) +
                      0.25 * organic + 0.15 * std::cos(2.0 * M_PI * tof / config.tof_levels)));

        const double weight = config.weighted
                                  ? std::exp(std::log(40.0) + 0.8 * normal(rng))
                                  : 1.0;

        double e = 0.0;
        {
            // stationary start at the AR(1) marginal variance
            const double stat_sd =
                1.0 / std::sqrt(1.0 - config.ar_coefficient * config.ar_coefficient);
            e = config.idiosyncratic_sd * risk * stat_sd * normal(rng);
        }
        for (int t = 0; t < config.years; ++t) {
            if (t > 0)
                e = config.ar_coefficient * e +
                    innov_scale * risk * student_t(rng, config.heavy_tail_df);
            const double g = alt_shock[alt][t] + mr_shock[mr][t] + tof_shock[tof][t];

            FarmYearRecord rec;
            rec.farm_id = id.str();
            rec.year = config.first_year + t;
            rec.weight = weight;
            rec.income = base * (1.0 + g + e);
            rec.covariates = {lnd,    lu,     lab,  rev,    machin, h_index,
                              oga,    fxcost, curcost, debt, l_imm,  k_circ,
                              insure, ddp,    cdp,  rdp};
            rec.categories = {alt, mr, tof, gender, organic};
            panel.records.push_back(std::move(rec));
        }
    }

    std::sort(panel.records.begin(), panel.records.end(),
              [](const FarmYearRecord& a, const FarmYearRecord& b) {
                  return a.farm_id != b.farm_id ? a.farm_id < b.farm_id : a.year < b.year;
              });
    panel.recompute_year_range();
    return panel;
}

} // namespace agristab
