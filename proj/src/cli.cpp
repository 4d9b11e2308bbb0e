#include "agristab/cli.hpp"

#include "agristab/csv.hpp"
#include "agristab/rng.hpp"
#include "agristab/svg.hpp"
#include "agristab/tweedie.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace agristab::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::runtime_error("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void maybe(const json& obj, const char* key, T& target) {
    if (obj.contains(key)) target = obj.at(key).get<T>();
}

evalecon::ModelFamily parse_family(const std::string& name) {
    if (name == "glm") return evalecon::ModelFamily::Glm;
    if (name == "lasso") return evalecon::ModelFamily::Lasso;
    if (name == "en") return evalecon::ModelFamily::ElasticNet;
    if (name == "boosting") return evalecon::ModelFamily::Boosting;
    throw std::runtime_error("config: unknown model family '" + name + "'");
}

std::string resolve_input(const CommandContext& ctx, const std::string& path) {
    if (fs::exists(path)) return path;
    const auto under_out = fs::path(ctx.out_dir) / path;
    if (fs::exists(under_out)) return under_out.string();
    throw std::runtime_error("input file not found: " + path);
}

std::string out_path(const CommandContext& ctx, const std::string& name) {
    return (fs::path(ctx.out_dir) / name).string();
}

FarmPanel load_input_panel(const CommandContext& ctx) {
    const auto schema = synthetic_schema(ctx.config.gen);
    FarmPanel panel = load_panel(resolve_input(ctx, ctx.config.panel_csv), schema);
    if (ctx.config.price_index_csv) {
        const auto index = load_price_index(resolve_input(ctx, *ctx.config.price_index_csv));
        panel = deflate(panel, index);
    }
    return panel;
}

} // namespace

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config parse error: " + std::string(e.what()));
    }

    require_keys(j, "top level",
                 {"version", "gen", "panel_csv", "predictions_csv", "price_index_csv",
                  "ist", "scenarios", "bootstrap", "families", "target_years",
                  "resamples", "train_fraction", "power_grid", "penalty",
                  "en_alpha_grid", "boost", "cv_folds", "compatibility", "delta"});

    RunConfig cfg;
    maybe(j, "version", cfg.version);
    if (cfg.version != 1) throw std::runtime_error("config: unsupported version");

    if (j.contains("gen")) {
        const auto& g = j.at("gen");
        require_keys(g, "gen",
                     {"n_farms", "years", "first_year", "altimetry_levels",
                      "macroregion_levels", "tof_levels", "base_income_mean",
                      "fixed_effect_spread", "ar_coefficient", "systemic_shock_sd",
                      "idiosyncratic_sd", "heavy_tail_df", "risk_heterogeneity",
                      "weighted"});
        maybe(g, "n_farms", cfg.gen.n_farms);
        maybe(g, "years", cfg.gen.years);
        maybe(g, "first_year", cfg.gen.first_year);
        maybe(g, "altimetry_levels", cfg.gen.altimetry_levels);
        maybe(g, "macroregion_levels", cfg.gen.macroregion_levels);
        maybe(g, "tof_levels", cfg.gen.tof_levels);
        maybe(g, "base_income_mean", cfg.gen.base_income_mean);
        maybe(g, "fixed_effect_spread", cfg.gen.fixed_effect_spread);
        maybe(g, "ar_coefficient", cfg.gen.ar_coefficient);
        maybe(g, "systemic_shock_sd", cfg.gen.systemic_shock_sd);
        maybe(g, "idiosyncratic_sd", cfg.gen.idiosyncratic_sd);
        maybe(g, "heavy_tail_df", cfg.gen.heavy_tail_df);
        maybe(g, "risk_heterogeneity", cfg.gen.risk_heterogeneity);
        maybe(g, "weighted", cfg.gen.weighted);
        cfg.gen.validate();
    }

    maybe(j, "panel_csv", cfg.panel_csv);
    maybe(j, "predictions_csv", cfg.predictions_csv);
    if (j.contains("price_index_csv"))
        cfg.price_index_csv = j.at("price_index_csv").get<std::string>();

    if (j.contains("ist")) {
        const auto& p = j.at("ist");
        require_keys(p, "ist", {"alpha", "beta", "window", "recovery_share"});
        maybe(p, "alpha", cfg.ist_params.alpha);
        maybe(p, "beta", cfg.ist_params.beta);
        maybe(p, "window", cfg.ist_params.window);
        maybe(p, "recovery_share", cfg.ist_params.recovery_share);
        cfg.ist_params.validate();
    }

    if (j.contains("scenarios"))
        cfg.scenarios = j.at("scenarios").get<std::vector<std::string>>();

    if (j.contains("bootstrap")) {
        const auto& b = j.at("bootstrap");
        require_keys(b, "bootstrap", {"replicates", "level"});
        maybe(b, "replicates", cfg.bootstrap.replicates);
        maybe(b, "level", cfg.bootstrap.level);
        cfg.bootstrap.validate();
    }

    if (j.contains("families")) {
        cfg.families.clear();
        for (const auto& name : j.at("families").get<std::vector<std::string>>())
            cfg.families.push_back(parse_family(name));
        if (cfg.families.empty()) throw std::runtime_error("config: empty families list");
    }

    if (j.contains("target_years"))
        cfg.target_years = j.at("target_years").get<std::vector<int>>();
    maybe(j, "resamples", cfg.resamples);
    if (cfg.resamples < 1) throw std::runtime_error("config: resamples must be >= 1");
    maybe(j, "train_fraction", cfg.train_fraction);
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw std::runtime_error("config: train_fraction must lie in (0,1)");

    if (j.contains("power_grid")) {
        const auto& g = j.at("power_grid");
        require_keys(g, "power_grid", {"from", "to", "step"});
        const double from = g.at("from").get<double>();
        const double to = g.at("to").get<double>();
        const double step = g.at("step").get<double>();
        if (!(from > 1.0 && to < 2.0 && from <= to && step > 0.0))
            throw std::runtime_error("config: power_grid must lie inside (1,2)");
        for (double p = from; p <= to + 1e-12; p += step) cfg.power_grid.push_back(p);
    }

    if (j.contains("penalty")) {
        const auto& p = j.at("penalty");
        require_keys(p, "penalty", {"path_length", "lambda_min_ratio", "tol"});
        maybe(p, "path_length", cfg.hyper.penalty.path_length);
        maybe(p, "lambda_min_ratio", cfg.hyper.penalty.lambda_min_ratio);
        maybe(p, "tol", cfg.hyper.penalty.tol);
        cfg.hyper.penalty.validate();
    }
    if (j.contains("en_alpha_grid")) {
        cfg.hyper.en_alpha_grid = j.at("en_alpha_grid").get<std::vector<double>>();
        if (cfg.hyper.en_alpha_grid.empty())
            throw std::runtime_error("config: empty en_alpha_grid");
    }
    if (j.contains("boost")) {
        const auto& b = j.at("boost");
        require_keys(b, "boost",
                     {"max_trees", "learning_rate", "max_depth", "min_node_size",
                      "subsample"});
        maybe(b, "max_trees", cfg.hyper.boost.max_trees);
        maybe(b, "learning_rate", cfg.hyper.boost.learning_rate);
        maybe(b, "max_depth", cfg.hyper.boost.max_depth);
        maybe(b, "min_node_size", cfg.hyper.boost.min_node_size);
        maybe(b, "subsample", cfg.hyper.boost.subsample);
        cfg.hyper.boost.validate();
    }
    maybe(j, "cv_folds", cfg.hyper.cv_folds);
    if (cfg.hyper.cv_folds < 2) throw std::runtime_error("config: cv_folds must be >= 2");
    if (j.contains("compatibility")) {
        cfg.compatibility = j.at("compatibility").get<std::vector<double>>();
        for (double t : cfg.compatibility)
            if (!(t > 0.0 && t <= 1.0))
                throw std::runtime_error("config: compatibility thresholds must lie in (0,1]");
    }
    maybe(j, "delta", cfg.delta);
    if (cfg.delta < 0.0) throw std::runtime_error("config: delta must be >= 0");
    return cfg;
}

int cmd_gen(const CommandContext& ctx) {
    SyntheticConfig gen = ctx.config.gen;
    gen.seed = ctx.seed;
    FarmPanel panel = generate_synthetic(gen);
    panel.validate();
    const auto path = out_path(ctx, ctx.config.panel_csv);
    write_panel(path, panel);
    std::cout << "gen: wrote " << panel.n_records() << " records (" << gen.n_farms
              << " farms x " << gen.years << " years) to " << path << "\n";
    return 0;
}

namespace {

struct FarmSeries {
    std::string farm_id;
    double weight = 1.0;
    std::vector<double> observed;       // I
    std::vector<double> with_ind;       // I_I
    std::vector<double> net_flat;       // I_IF
    std::vector<double> net_prop;       // I_IE
};

// per-farm indicator trajectories from the flat and proportional runs
std::vector<FarmSeries> farm_series(const ist::ScenarioResult& flat,
                                    const ist::ScenarioResult& prop) {
    std::vector<FarmSeries> out;
    std::size_t i = 0;
    while (i < flat.outcomes.size()) {
        std::size_t j = i;
        FarmSeries s;
        s.farm_id = flat.outcomes[i].farm_id;
        s.weight = flat.outcomes[i].weight;
        while (j < flat.outcomes.size() && flat.outcomes[j].farm_id == s.farm_id) {
            s.observed.push_back(flat.outcomes[j].income);
            s.with_ind.push_back(flat.outcomes[j].with_indemnity);
            s.net_flat.push_back(flat.outcomes[j].net_of_contribution);
            s.net_prop.push_back(prop.outcomes[j].net_of_contribution);
            ++j;
        }
        out.push_back(std::move(s));
        i = j;
    }
    return out;
}

std::optional<double> farm_cv(const std::vector<double>& xs) {
    if (xs.size() < 2) return std::nullopt;
    const double m = stats::mean(xs);
    if (m <= 0.0) return std::nullopt;
    return stats::sd(xs) / m;
}

struct StabilityRow {
    std::string fund;
    std::string indicator;
    double med_mean = 0.0, med_median = 0.0, med_sd = 0.0, med_mad = 0.0, med_cv = 0.0;
    double cv_change = 0.0;
    double wilcoxon_p = 1.0;
    std::size_t farms = 0;
};

StabilityRow stability_row(const std::vector<const FarmSeries*>& farms,
                           const std::string& fund, const std::string& name,
                           const std::vector<double> FarmSeries::*member) {
    StabilityRow row;
    row.fund = fund;
    row.indicator = name;
    std::vector<double> means, medians, sds, mads, cvs, base_cvs;
    for (const auto* f : farms) {
        const auto& xs = f->*member;
        if (xs.size() < 2) continue;
        auto cv_ind = farm_cv(xs);
        auto cv_obs = farm_cv(f->observed);
        if (!cv_ind || !cv_obs) continue;
        means.push_back(stats::mean(xs));
        medians.push_back(stats::median(xs));
        sds.push_back(stats::sd(xs));
        mads.push_back(stats::mad(xs));
        cvs.push_back(*cv_ind);
        base_cvs.push_back(*cv_obs);
    }
    row.farms = cvs.size();
    if (cvs.empty()) return row;
    row.med_mean = stats::median(means);
    row.med_median = stats::median(medians);
    row.med_sd = stats::median(sds);
    row.med_mad = stats::median(mads);
    row.med_cv = stats::median(cvs);
    const double base = stats::median(base_cvs);
    row.cv_change = base != 0.0 ? (row.med_cv - base) / base : 0.0;
    row.wilcoxon_p = stats::wilcoxon_signed_rank(cvs, base_cvs).p_value;
    return row;
}

} // namespace

int cmd_simulate(const CommandContext& ctx) {
    FarmPanel panel;
    try {
        panel = load_input_panel(ctx);
    } catch (const std::exception& e) {
        std::cerr << "simulate: " << e.what() << "\n";
        return 2;
    }
    const auto& params = ctx.config.ist_params;

    const auto national_flat = ist::simulate_scenario(
        panel, ist::MutualFundScenario::national(), ist::ContributionScheme::Flat, params);
    const auto national_prop = ist::simulate_scenario(
        panel, ist::MutualFundScenario::national(),
        ist::ContributionScheme::ProportionalToExpectedIncome, params);

    const int n_years = static_cast<int>(national_flat.years.size());
    if (n_years < 2) {
        std::cerr << "simulate: fewer than two simulatable years\n";
        return 2;
    }

    // CV over years of a fund's indemnity rate under farm-cluster resampling
    struct FundBoot {
        std::vector<std::array<double, 2>> farm_year_terms; // flattened farm x year
        std::size_t n_farms = 0;
        int n_years = 0;
        std::vector<double> replicate_cvs;
        double cv_point = 0.0;
    };

    auto fund_bootstrap = [&](const ist::ScenarioResult& result, int fund,
                              std::uint64_t stream) {
        FundBoot fb;
        fb.n_years = static_cast<int>(result.years.size());
        std::map<std::string, std::size_t> farm_slot;
        for (const auto& o : result.outcomes) {
            if (o.fund != fund) continue;
            if (!farm_slot.count(o.farm_id)) {
                farm_slot[o.farm_id] = fb.n_farms++;
                fb.farm_year_terms.resize(fb.n_farms * fb.n_years, {0.0, 0.0});
            }
        }
        std::map<int, int> year_slot;
        for (int t = 0; t < fb.n_years; ++t) year_slot[result.years[t]] = t;
        for (const auto& o : result.outcomes) {
            if (o.fund != fund) continue;
            auto& cell =
                fb.farm_year_terms[farm_slot[o.farm_id] * fb.n_years + year_slot[o.year]];
            cell[0] += o.weight * o.indemnity;
            cell[1] += o.weight * o.expected;
        }
        auto cv_of = [&fb](const std::vector<std::size_t>& idx) {
            std::vector<double> rates(fb.n_years, 0.0);
            std::vector<double> te(fb.n_years, 0.0);
            for (auto f : idx)
                for (int t = 0; t < fb.n_years; ++t) {
                    rates[t] += fb.farm_year_terms[f * fb.n_years + t][0];
                    te[t] += fb.farm_year_terms[f * fb.n_years + t][1];
                }
            std::vector<double> r;
            for (int t = 0; t < fb.n_years; ++t)
                if (te[t] > 0.0) r.push_back(rates[t] / te[t]);
            if (r.size() < 2) return 0.0;
            const double m = stats::mean(r);
            return m != 0.0 ? stats::sd(r) / m : 0.0;
        };
        std::vector<std::size_t> all(fb.n_farms);
        std::iota(all.begin(), all.end(), 0);
        fb.cv_point = cv_of(all);
        if (fb.n_farms > 0) {
            stats::BootstrapConfig bcfg = ctx.config.bootstrap;
            bcfg.seed = derive_seed(ctx.seed, stream);
            fb.replicate_cvs = stats::bootstrap_replicates(fb.n_farms, cv_of, bcfg);
        }
        return fb;
    };

    const auto national_boot = fund_bootstrap(national_flat, 0, 0xB001u);

    csv::Table rates;
    rates.header = {"scenario", "fund",  "years",  "mean_rate", "sd_rate",
                    "cv_rate",  "ci_lo", "ci_hi",  "p_vs_national"};
    const double tail = (1.0 - ctx.config.bootstrap.level) / 2.0;

    auto add_rate_rows = [&](const std::string& scenario_name,
                             const ist::ScenarioResult& result, bool is_national) {
        for (std::size_t f = 0; f < result.fund_levels.size(); ++f) {
            std::vector<double> fund_rates;
            for (const auto& fy : result.fund_years)
                if (fy.fund == static_cast<int>(f) && fy.total_expected > 0.0)
                    fund_rates.push_back(fy.rate);
            if (fund_rates.size() < 2) continue;
            const auto boot = is_national
                                  ? national_boot
                                  : fund_bootstrap(result, static_cast<int>(f),
                                                   0xF000u + f);
            std::vector<std::string> row;
            row.push_back(scenario_name);
            row.push_back(result.fund_levels[f]);
            row.push_back(std::to_string(fund_rates.size()));
            row.push_back(csv::format_fixed(stats::mean(fund_rates), 6));
            row.push_back(csv::format_fixed(stats::sd(fund_rates), 6));
            row.push_back(csv::format_fixed(boot.cv_point, 6));
            row.push_back(csv::format_fixed(
                stats::quantile_sorted(boot.replicate_cvs, tail), 6));
            row.push_back(csv::format_fixed(
                stats::quantile_sorted(boot.replicate_cvs, 1.0 - tail), 6));
            if (is_national)
                row.push_back("");
            else
                row.push_back(csv::format_double(
                    stats::wilcoxon_rank_sum(boot.replicate_cvs,
                                             national_boot.replicate_cvs)
                        .p_value));
            rates.rows.push_back(std::move(row));
        }
    };

    add_rate_rows("national", national_flat, true);

    for (const auto& scenario_name : ctx.config.scenarios) {
        ist::ScenarioResult flat = national_flat, prop = national_prop;
        if (scenario_name != "national") {
            const auto scenario = ist::MutualFundScenario::by_category(scenario_name);
            flat = ist::simulate_scenario(panel, scenario, ist::ContributionScheme::Flat,
                                          params);
            prop = ist::simulate_scenario(
                panel, scenario, ist::ContributionScheme::ProportionalToExpectedIncome,
                params);
            add_rate_rows(scenario_name, flat, false);
        }

        // Table 4/5 shaped stability report
        const auto series = farm_series(flat, prop);
        csv::Table stab;
        stab.header = {"fund",    "indicator", "farms",     "median_mean",
                       "median_median", "median_sd", "median_mad", "median_cv",
                       "cv_change_vs_observed", "wilcoxon_p"};
        auto emit = [&stab](const StabilityRow& row) {
            stab.rows.push_back({row.fund, row.indicator, std::to_string(row.farms),
                                 csv::format_fixed(row.med_mean, 2),
                                 csv::format_fixed(row.med_median, 2),
                                 csv::format_fixed(row.med_sd, 2),
                                 csv::format_fixed(row.med_mad, 2),
                                 csv::format_fixed(row.med_cv, 6),
                                 csv::format_fixed(row.cv_change, 6),
                                 csv::format_double(row.wilcoxon_p)});
        };
        std::vector<const FarmSeries*> all;
        for (const auto& s : series) all.push_back(&s);
        emit(stability_row(all, "ALL", "I", &FarmSeries::observed));
        emit(stability_row(all, "ALL", "I_I", &FarmSeries::with_ind));
        emit(stability_row(all, "ALL", "I_IF", &FarmSeries::net_flat));
        emit(stability_row(all, "ALL", "I_IE", &FarmSeries::net_prop));
        if (scenario_name != "national") {
            std::map<int, std::vector<const FarmSeries*>> by_fund;
            std::map<std::string, int> farm_fund;
            for (const auto& o : flat.outcomes) farm_fund[o.farm_id] = o.fund;
            for (const auto& s : series) by_fund[farm_fund[s.farm_id]].push_back(&s);
            for (const auto& [fund, members] : by_fund) {
                const auto& level = flat.fund_levels[fund];
                emit(stability_row(members, level, "I", &FarmSeries::observed));
                emit(stability_row(members, level, "I_I", &FarmSeries::with_ind));
                emit(stability_row(members, level, "I_IF", &FarmSeries::net_flat));
                emit(stability_row(members, level, "I_IE", &FarmSeries::net_prop));
            }
        }
        csv::write_file(out_path(ctx, "stability_" + scenario_name + ".csv"), stab);

        // Fig 2 data: sorted DCB with weights, per scheme
        csv::Table dcb;
        dcb.header = {"scheme", "farm_id", "weight", "dcb"};
        auto add_dcb = [&dcb](const ist::ScenarioResult& result, const char* scheme) {
            std::vector<const ist::FarmSummary*> farms;
            for (const auto& s : result.farms) farms.push_back(&s);
            std::stable_sort(farms.begin(), farms.end(),
                             [](const ist::FarmSummary* a, const ist::FarmSummary* b) {
                                 return a->dcb < b->dcb;
                             });
            for (const auto* s : farms)
                dcb.rows.push_back({scheme, s->farm_id, csv::format_double(s->weight),
                                    csv::format_fixed(s->dcb, 6)});
        };
        add_dcb(flat, "flat");
        add_dcb(prop, "proportional");
        csv::write_file(out_path(ctx, "dcb_" + scenario_name + ".csv"), dcb);
    }
    csv::write_file(out_path(ctx, "indemnity_rates.csv"), rates);

    // Fig 1 analogue: KDE of per-farm CVs per indicator, national MF
    {
        const auto series = farm_series(national_flat, national_prop);
        auto collect = [&series](const std::vector<double> FarmSeries::*member) {
            std::vector<double> cvs;
            for (const auto& s : series) {
                auto base = farm_cv(s.observed);
                auto v = farm_cv(s.*member);
                if (base && v) cvs.push_back(*v);
            }
            return cvs;
        };
        const std::pair<std::string, std::vector<double> FarmSeries::*> indicators[] = {
            {"i", &FarmSeries::observed},
            {"i_i", &FarmSeries::with_ind},
            {"i_if", &FarmSeries::net_flat},
            {"i_ie", &FarmSeries::net_prop}};
        for (const auto& [name, member] : indicators) {
            const auto cvs = collect(member);
            if (cvs.size() < 2) continue;
            const auto kde = stats::epanechnikov_kde(cvs, 512);
            csv::Table t;
            t.header = {"grid", "density"};
            for (std::size_t g = 0; g < kde.grid.size(); ++g)
                t.rows.push_back({csv::format_double(kde.grid[g]),
                                  csv::format_double(kde.density[g])});
            csv::write_file(out_path(ctx, "kde_cv_" + name + ".csv"), t);
        }
    }

    std::cout << "simulate: " << national_flat.outcomes.size()
              << " farm-year outcomes over " << n_years << " years; reports in "
              << ctx.out_dir << "\n";
    return 0;
}

int cmd_ratemake(const CommandContext& ctx) {
    FarmPanel panel;
    try {
        panel = load_input_panel(ctx);
    } catch (const std::exception& e) {
        std::cerr << "ratemake: " << e.what() << "\n";
        return 2;
    }
    auto data = evalecon::build_dataset(panel, ctx.config.ist_params);
    if (data.rows.empty()) {
        std::cerr << "ratemake: no labeled observations\n";
        return 2;
    }

    const auto grid = ctx.config.power_grid.empty() ? tweedie::default_power_grid()
                                                    : ctx.config.power_grid;

    // two-stage power estimate with the influence filter on the pooled data
    auto staged = tweedie::two_stage_fit(data.X, data.y, data.feature_names, grid);
    std::size_t dropped = 0;
    {
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < staged.outlier_mask.size(); ++i)
            if (!staged.outlier_mask[i]) keep.push_back(i);
        dropped = data.rows.size() - keep.size();
        if (dropped > 0) {
            evalecon::Dataset filtered;
            filtered.feature_names = data.feature_names;
            filtered.groups = data.groups;
            filtered.X.resize(static_cast<Eigen::Index>(keep.size()), data.X.cols());
            filtered.y.resize(static_cast<Eigen::Index>(keep.size()));
            std::set<int> years;
            for (std::size_t i = 0; i < keep.size(); ++i) {
                filtered.rows.push_back(data.rows[keep[i]]);
                filtered.X.row(static_cast<Eigen::Index>(i)) =
                    data.X.row(static_cast<Eigen::Index>(keep[i]));
                filtered.y(static_cast<Eigen::Index>(i)) =
                    data.y(static_cast<Eigen::Index>(keep[i]));
                years.insert(data.rows[keep[i]].year);
            }
            filtered.years.assign(years.begin(), years.end());
            data = std::move(filtered);
        }
    }

    std::vector<int> target_years = ctx.config.target_years;
    if (target_years.empty()) {
        for (std::size_t t = 1; t < data.years.size(); ++t)
            if (data.years[t] == data.years[t - 1] + 1) target_years.push_back(data.years[t]);
    }
    if (target_years.empty()) {
        std::cerr << "ratemake: no feasible target years\n";
        return 2;
    }

    {
        json meta;
        meta["p_first"] = staged.p_first;
        meta["p_final"] = staged.p_final;
        meta["phi"] = staged.model.phi;
        meta["outliers_dropped"] = dropped;
        meta["target_years"] = target_years;
        std::ofstream out(out_path(ctx, "power.json"));
        out << meta.dump(2) << "\n";
    }

    const auto oos = evalecon::run_out_of_sample(
        data, staged.p_final, ctx.config.families, target_years, ctx.config.resamples,
        ctx.config.train_fraction, ctx.seed, ctx.config.hyper);

    csv::Table metrics;
    metrics.header = {"year", "resample", "family",     "r2_train", "r2_test",
                      "rmse_train", "rmse_test", "n_selected", "failed",   "error"};
    bool any_failed = false;
    for (const auto& c : oos.cells) {
        any_failed = any_failed || c.failed;
        metrics.rows.push_back(
            {std::to_string(c.year), std::to_string(c.resample),
             evalecon::family_name(c.family), csv::format_double(c.r2_train),
             csv::format_double(c.r2_test), csv::format_double(c.rmse_train),
             csv::format_double(c.rmse_test), std::to_string(c.selected.size()),
             c.failed ? "1" : "0", c.error});
    }
    csv::write_file(out_path(ctx, "metrics.csv"), metrics);

    // Tables 10-11 shape: per family x year mean (sd) of test metrics
    csv::Table summary;
    summary.header = {"family", "year", "cells", "mean_r2_test", "sd_r2_test",
                      "mean_rmse_test", "sd_rmse_test"};
    for (auto family : ctx.config.families) {
        for (int year : target_years) {
            std::vector<double> r2s, rmses;
            for (const auto& c : oos.cells)
                if (c.family == family && c.year == year && !c.failed) {
                    r2s.push_back(c.r2_test);
                    rmses.push_back(c.rmse_test);
                }
            if (r2s.empty()) continue;
            summary.rows.push_back(
                {evalecon::family_name(family), std::to_string(year),
                 std::to_string(r2s.size()), csv::format_double(stats::mean(r2s)),
                 csv::format_double(r2s.size() > 1 ? stats::sd(r2s) : 0.0),
                 csv::format_double(stats::mean(rmses)),
                 csv::format_double(rmses.size() > 1 ? stats::sd(rmses) : 0.0)});
        }
    }
    csv::write_file(out_path(ctx, "metrics_summary.csv"), summary);

    // Table 12 shape: selection frequency per family over all cells
    std::vector<std::string> group_names;
    for (const auto& g : data.groups) group_names.push_back(g.name);
    for (auto family : ctx.config.families) {
        std::vector<std::vector<std::string>> selections;
        for (const auto& c : oos.cells)
            if (c.family == family && !c.failed) selections.push_back(c.selected);
        if (selections.empty()) continue;
        const auto rows = evalecon::selection_frequency(selections, group_names);
        csv::Table t;
        t.header = {"feature", "count", "percent"};
        for (const auto& r : rows)
            t.rows.push_back({r.feature, std::to_string(r.count), std::to_string(r.percent)});
        csv::write_file(out_path(ctx, "selection_" + evalecon::family_name(family) + ".csv"),
                        t);
    }

    // full-train per-year models + predictions for the economic evaluation
    const auto predictions = evalecon::predict_by_year(
        data, staged.p_final, ctx.config.families, target_years, ctx.seed,
        ctx.config.hyper);
    fs::create_directories(fs::path(ctx.out_dir) / "models");
    csv::Table preds;
    preds.header = {"family", "year",    "farm_id", "weight",
                    "va_prev", "expected_indemnity", "realized_indemnity"};
    for (const auto& pred : predictions) {
        std::ofstream model_out(out_path(
            ctx, "models/" + evalecon::family_name(pred.family) + "_" +
                     std::to_string(pred.year) + ".json"));
        model_out << pred.model_json << "\n";
        for (const auto& q : pred.quotes)
            preds.rows.push_back({evalecon::family_name(pred.family),
                                  std::to_string(q.year), q.farm_id,
                                  csv::format_double(q.weight),
                                  csv::format_double(q.va_prev),
                                  csv::format_double(q.expected_indemnity),
                                  csv::format_double(q.realized_indemnity)});
    }
    csv::write_file(out_path(ctx, ctx.config.predictions_csv), preds);

    std::cout << "ratemake: p_final=" << staged.p_final << " (stage-1 " << staged.p_first
              << "), dropped " << dropped << " influential rows, "
              << oos.cells.size() << " cells";
    if (any_failed) std::cout << " (some cells failed; see metrics.csv)";
    std::cout << "\n";
    return any_failed ? 1 : 0;
}

int cmd_evaluate(const CommandContext& ctx) {
    csv::Table preds;
    try {
        preds = csv::read_file(resolve_input(ctx, ctx.config.predictions_csv));
    } catch (const std::exception& e) {
        std::cerr << "evaluate: " << e.what() << "\n";
        return 2;
    }
    const std::vector<std::string> expected_header = {
        "family", "year",    "farm_id", "weight",
        "va_prev", "expected_indemnity", "realized_indemnity"};
    if (preds.header != expected_header) {
        std::cerr << "evaluate: predictions file has unexpected columns\n";
        return 2;
    }

    std::map<std::pair<std::string, int>, evalecon::YearPrediction> grouped;
    std::size_t line = 1;
    try {
        for (const auto& row : preds.rows) {
            ++line;
            evalecon::PremiumQuote q;
            const std::string family = row[0];
            q.year = static_cast<int>(csv::parse_long(row[1], line, "year"));
            q.farm_id = row[2];
            q.weight = csv::parse_double(row[3], line, "weight");
            q.va_prev = csv::parse_double(row[4], line, "va_prev");
            q.expected_indemnity = csv::parse_double(row[5], line, "expected_indemnity");
            q.realized_indemnity = csv::parse_double(row[6], line, "realized_indemnity");
            auto& pred = grouped[{family, q.year}];
            pred.family = parse_family(family);
            pred.year = q.year;
            pred.quotes.push_back(std::move(q));
        }
    } catch (const std::exception& e) {
        std::cerr << "evaluate: " << e.what() << "\n";
        return 2;
    }
    std::vector<evalecon::YearPrediction> predictions;
    for (auto& [key, pred] : grouped) predictions.push_back(std::move(pred));

    auto thresholds = ctx.config.compatibility;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    const auto report =
        evalecon::economic_report(predictions, thresholds, ctx.config.delta);

    const auto& bounds = evalecon::NetPremiumClasses::boundaries();
    csv::Table econ;
    econ.header = {"family", "threshold", "participant_obs", "participating_farms",
                   "balance", "balance_weighted", "n_nonneg", "sum_nonneg",
                   "n_neg", "sum_neg"};
    for (double b : bounds) {
        econ.header.push_back("n_ge_" + std::to_string(static_cast<int>(b / 1000)) + "k");
        econ.header.push_back("sum_ge_" + std::to_string(static_cast<int>(b / 1000)) + "k");
    }
    for (double b : bounds) {
        econ.header.push_back("n_le_m" + std::to_string(static_cast<int>(b / 1000)) + "k");
        econ.header.push_back("sum_le_m" + std::to_string(static_cast<int>(b / 1000)) + "k");
    }
    csv::Table annual;
    annual.header = {"family", "threshold", "year", "balance", "balance_weighted"};

    for (const auto& s : report.sections) {
        std::vector<std::string> row = {
            evalecon::family_name(s.family), csv::format_fixed(s.threshold, 2),
            std::to_string(s.participants), std::to_string(s.participating_farms),
            csv::format_fixed(s.balance.multiannual, 2),
            csv::format_fixed(s.balance.multiannual_weighted, 2),
            std::to_string(s.classes.n_nonnegative),
            csv::format_fixed(s.classes.sum_nonnegative, 2),
            std::to_string(s.classes.n_negative),
            csv::format_fixed(s.classes.sum_negative, 2)};
        for (std::size_t b = 0; b < bounds.size(); ++b) {
            row.push_back(std::to_string(s.classes.count_ge[b]));
            row.push_back(csv::format_fixed(s.classes.sum_ge[b], 2));
        }
        for (std::size_t b = 0; b < bounds.size(); ++b) {
            row.push_back(std::to_string(s.classes.count_le[b]));
            row.push_back(csv::format_fixed(s.classes.sum_le[b], 2));
        }
        econ.rows.push_back(std::move(row));
        for (std::size_t t = 0; t < s.balance.years.size(); ++t)
            annual.rows.push_back({evalecon::family_name(s.family),
                                   csv::format_fixed(s.threshold, 2),
                                   std::to_string(s.balance.years[t]),
                                   csv::format_fixed(s.balance.annual[t], 2),
                                   csv::format_fixed(s.balance.annual_weighted[t], 2)});
    }
    csv::write_file(out_path(ctx, "economic.csv"), econ);
    csv::write_file(out_path(ctx, "annual_balance.csv"), annual);

    // Figs 7-11 analogues
    std::vector<std::string> family_labels;
    for (auto f : ctx.config.families) family_labels.push_back(evalecon::family_name(f));
    std::vector<std::string> threshold_labels;
    for (double t : thresholds) threshold_labels.push_back(csv::format_fixed(t, 2) + " VA");

    auto section_of = [&report](evalecon::ModelFamily f, double t)
        -> const evalecon::EconReport::Section* {
        for (const auto& s : report.sections)
            if (s.family == f && s.threshold == t) return &s;
        return nullptr;
    };

    {
        std::vector<svg::Series> series;
        for (auto f : ctx.config.families) {
            svg::Series s;
            s.label = evalecon::family_name(f);
            for (double t : thresholds) {
                const auto* sec = section_of(f, t);
                s.values.push_back(sec ? static_cast<double>(sec->participants) : 0.0);
            }
            series.push_back(std::move(s));
        }
        svg::write_bar_chart(out_path(ctx, "fig_compatibility.svg"),
                             "Compatible observations per premium threshold",
                             threshold_labels, series);
    }
    {
        std::vector<svg::Series> series;
        for (auto f : ctx.config.families) {
            svg::Series s;
            s.label = evalecon::family_name(f);
            for (double t : thresholds) {
                const auto* sec = section_of(f, t);
                s.values.push_back(sec ? sec->balance.multiannual : 0.0);
            }
            series.push_back(std::move(s));
        }
        svg::write_bar_chart(out_path(ctx, "fig_balance.svg"),
                             "Multiannual balance per premium threshold",
                             threshold_labels, series);
    }
    {
        const double tight = thresholds.back();
        std::vector<double> years;
        for (const auto& s : report.sections)
            if (s.threshold == tight)
                for (int y : s.balance.years)
                    if (std::find(years.begin(), years.end(), y) == years.end())
                        years.push_back(static_cast<double>(y));
        std::sort(years.begin(), years.end());
        if (years.size() >= 2) {
            std::vector<svg::Series> series;
            for (auto f : ctx.config.families) {
                const auto* sec = section_of(f, tight);
                svg::Series s;
                s.label = evalecon::family_name(f);
                for (double y : years) {
                    double v = 0.0;
                    if (sec)
                        for (std::size_t t = 0; t < sec->balance.years.size(); ++t)
                            if (sec->balance.years[t] == static_cast<int>(y))
                                v = sec->balance.annual[t];
                    s.values.push_back(v);
                }
                series.push_back(std::move(s));
            }
            svg::write_line_chart(out_path(ctx, "fig_solvency.svg"),
                                  "Annual balance at the tightest threshold", years,
                                  series);
        }
    }
    {
        const double tight = thresholds.back();
        std::vector<std::string> class_labels = {">=0", "<0"};
        for (double b : bounds)
            class_labels.push_back(">=" + std::to_string(static_cast<int>(b / 1000)) + "k");
        for (double b : bounds)
            class_labels.push_back("<=-" + std::to_string(static_cast<int>(b / 1000)) + "k");
        std::vector<svg::Series> counts, sums;
        for (auto f : ctx.config.families) {
            const auto* sec = section_of(f, tight);
            svg::Series cnt, sum;
            cnt.label = sum.label = evalecon::family_name(f);
            if (sec) {
                cnt.values = {static_cast<double>(sec->classes.n_nonnegative),
                              static_cast<double>(sec->classes.n_negative)};
                sum.values = {sec->classes.sum_nonnegative, sec->classes.sum_negative};
                for (std::size_t b = 0; b < bounds.size(); ++b) {
                    cnt.values.push_back(static_cast<double>(sec->classes.count_ge[b]));
                    sum.values.push_back(sec->classes.sum_ge[b]);
                }
                for (std::size_t b = 0; b < bounds.size(); ++b) {
                    cnt.values.push_back(static_cast<double>(sec->classes.count_le[b]));
                    sum.values.push_back(sec->classes.sum_le[b]);
                }
            } else {
                cnt.values.assign(class_labels.size(), 0.0);
                sum.values.assign(class_labels.size(), 0.0);
            }
            counts.push_back(std::move(cnt));
            sums.push_back(std::move(sum));
        }
        svg::write_bar_chart(out_path(ctx, "fig_classes_value.svg"),
                             "Net premium per class (tightest threshold)", class_labels,
                             sums);
        svg::write_bar_chart(out_path(ctx, "fig_classes_count.svg"),
                             "Farms per net-premium class (tightest threshold)",
                             class_labels, counts);
    }

    for (const auto& s : report.sections)
        std::cout << "evaluate: family=" << evalecon::family_name(s.family)
                  << " threshold=" << s.threshold << " participants=" << s.participants
                  << " balance=" << csv::format_fixed(s.balance.multiannual, 2) << "\n";
    return 0;
}

int run(int argc, char** argv) {
    CLI::App app{"IST simulation and ratemaking pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 42;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration (JSON)")->required();
        cmd->add_option("--seed", seed, "master seed");
        cmd->add_option("--out", out_dir, "output directory");
    };
    auto* gen = app.add_subcommand("gen", "generate a synthetic farm panel");
    auto* simulate = app.add_subcommand("simulate", "run IST mutual-fund scenarios");
    auto* ratemake = app.add_subcommand("ratemake", "fit ratemaking models out-of-sample");
    auto* evaluate = app.add_subcommand("evaluate", "economic evaluation of premiums");
    for (auto* cmd : {gen, simulate, ratemake, evaluate}) add_common(cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        CommandContext ctx;
        ctx.config = RunConfig::from_json_file(config_path);
        ctx.seed = seed;
        ctx.out_dir = out_dir;
        fs::create_directories(out_dir);
        if (gen->parsed()) return cmd_gen(ctx);
        if (simulate->parsed()) return cmd_simulate(ctx);
        if (ratemake->parsed()) return cmd_ratemake(ctx);
        if (evaluate->parsed()) return cmd_evaluate(ctx);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

} // namespace agristab::cli
