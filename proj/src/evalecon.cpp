#include "agristab/evalecon.hpp"

#include "agristab/rng.hpp"
#include "agristab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace agristab::evalecon {

double r2_cw(const Eigen::VectorXd& y, const Eigen::VectorXd& mu_hat, double p) {
    if (y.size() != mu_hat.size()) throw std::invalid_argument("r2_cw: length mismatch");
    const double ybar = y.mean();
    const Eigen::VectorXd null_mu = Eigen::VectorXd::Constant(y.size(), ybar);
    const double d_null = tweedie::total_deviance(y, null_mu, p);
    if (!(d_null > 0.0)) throw std::domain_error("r2_cw undefined: constant response");
    const double d_model = tweedie::total_deviance(y, mu_hat, p);
    return 1.0 - d_model / d_null;
}

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& mu_hat) {
    if (y.size() != mu_hat.size()) throw std::invalid_argument("rmse: length mismatch");
    if (y.size() == 0) throw std::invalid_argument("rmse of empty vectors");
    return std::sqrt((y - mu_hat).squaredNorm() / static_cast<double>(y.size()));
}

std::vector<SelectionRow> selection_frequency(
    const std::vector<std::vector<std::string>>& model_selections,
    const std::vector<std::string>& all_features) {
    if (model_selections.empty())
        throw std::invalid_argument("selection_frequency requires >= 1 model");
    std::map<std::string, int> counts;
    for (const auto& f : all_features) counts[f] = 0;
    for (const auto& sel : model_selections)
        for (const auto& f : sel) counts[f] += 1;
    std::vector<SelectionRow> rows;
    const double n = static_cast<double>(model_selections.size());
    for (const auto& [name, count] : counts) {
        SelectionRow row;
        row.feature = name;
        row.count = count;
        row.percent = static_cast<int>(std::lround(100.0 * count / n));
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const SelectionRow& a, const SelectionRow& b) {
                         return a.count > b.count;
                     });
    return rows;
}

std::vector<PremiumQuote> quote_premiums(const std::vector<PremiumQuote>& raw,
                                         double delta) {
    if (delta < 0.0) throw std::invalid_argument("loading delta must be >= 0");
    std::vector<PremiumQuote> out = raw;
    for (auto& q : out) {
        q.delta = delta;
        double theta = q.expected_indemnity * (1.0 + delta);
        if (theta < 0.0) {
            std::cerr << "quote_premiums: negative expected indemnity for farm "
                      << q.farm_id << " clipped to 0\n";
            theta = 0.0;
        }
        q.premium = theta;
    }
    return out;
}

std::vector<std::size_t> compatibility_filter(const std::vector<PremiumQuote>& quotes,
                                              double threshold_fraction) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        const auto& q = quotes[i];
        if (q.va_prev > 0.0 && q.premium <= threshold_fraction * q.va_prev)
            out.push_back(i);
    }
    return out;
}

BalanceResult balance(const std::vector<PremiumQuote>& participants) {
    BalanceResult out;
    std::map<int, std::pair<double, double>> per_year; // year -> (net, weighted net)
    for (const auto& q : participants) {
        auto& cell = per_year[q.year];
        const double net = q.premium - q.realized_indemnity;
        cell.first += net;
        cell.second += q.weight * net;
    }
    for (const auto& [year, nets] : per_year) {
        out.years.push_back(year);
        out.annual.push_back(nets.first);
        out.annual_weighted.push_back(nets.second);
        out.multiannual += nets.first;
        out.multiannual_weighted += nets.second;
    }
    return out;
}

const std::vector<double>& NetPremiumClasses::boundaries() {
    static const std::vector<double> b = {100000.0, 250000.0, 500000.0, 750000.0,
                                          1000000.0};
    return b;
}

NetPremiumClasses net_premium_classes(const std::vector<double>& per_farm_net) {
    NetPremiumClasses out;
    const auto& bounds = NetPremiumClasses::boundaries();
    out.count_ge.assign(bounds.size(), 0);
    out.count_le.assign(bounds.size(), 0);
    out.sum_ge.assign(bounds.size(), 0.0);
    out.sum_le.assign(bounds.size(), 0.0);
    for (double net : per_farm_net) {
        if (net >= 0.0) {
            out.n_nonnegative += 1;
            out.sum_nonnegative += net;
        } else {
            out.n_negative += 1;
            out.sum_negative += net;
        }
        for (std::size_t b = 0; b < bounds.size(); ++b) {
            if (net >= bounds[b]) {
                out.count_ge[b] += 1;
                out.sum_ge[b] += net;
            }
            if (net <= -bounds[b]) {
                out.count_le[b] += 1;
                out.sum_le[b] += net;
            }
        }
    }
    return out;
}

std::string family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::Glm: return "glm";
        case ModelFamily::Lasso: return "lasso";
        case ModelFamily::ElasticNet: return "en";
        case ModelFamily::Boosting: return "boosting";
    }
    return "unknown";
}

std::vector<std::size_t> Dataset::rows_for_year(int year) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].year == year) out.push_back(i);
    return out;
}

Dataset build_dataset(const FarmPanel& panel, const ist::IstParams& params) {
    params.validate();
    Dataset data;

    const auto num_idx = panel.schema.numeric_indices();
    const auto cat_idx = panel.schema.categorical_indices();

    data.feature_names = {"avg_va", "sd_va", "va_l1"};
    for (auto j : num_idx) data.feature_names.push_back(panel.schema.columns[j].name);
    // one-hot with the first level as contrast; each block is one group
    struct DummyBlock {
        std::size_t cat_slot;
        int first_col;
        int n_dummies;
    };
    std::vector<DummyBlock> blocks;
    int col = static_cast<int>(data.feature_names.size());
    for (std::size_t s = 0; s < cat_idx.size(); ++s) {
        const auto& spec = panel.schema.columns[cat_idx[s]];
        const int n_dummies = static_cast<int>(spec.levels.size()) - 1;
        if (n_dummies <= 0) continue;
        blocks.push_back({s, col, n_dummies});
        for (int l = 1; l < static_cast<int>(spec.levels.size()); ++l)
            data.feature_names.push_back(spec.name + "." + spec.levels[l]);
        col += n_dummies;
    }

    // groups: numeric features are singletons, each dummy block one group
    for (int j = 0; j < static_cast<int>(3 + num_idx.size()); ++j)
        data.groups.push_back({data.feature_names[j], {j}});
    for (const auto& b : blocks) {
        shrink::Group g;
        g.name = panel.schema.columns[cat_idx[b.cat_slot]].name;
        for (int d = 0; d < b.n_dummies; ++d) g.columns.push_back(b.first_col + d);
        data.groups.push_back(std::move(g));
    }

    struct Staged {
        LabeledRow row;
        std::vector<double> features;
    };
    std::vector<Staged> staged;

    for (auto [first, last] : panel.farm_ranges()) {
        for (std::size_t i = first; i < last; ++i) {
            const auto& rec = panel.records[i];
            // window of consecutive prior years, oldest first
            std::vector<double> window;
            const FarmYearRecord* prev = nullptr;
            for (int back = params.window; back >= 1; --back) {
                for (std::size_t j = first; j < last; ++j) {
                    if (panel.records[j].year == rec.year - back) {
                        window.push_back(panel.records[j].income);
                        if (back == 1) prev = &panel.records[j];
                    }
                }
            }
            if (static_cast<int>(window.size()) != params.window || !prev) continue;
            const double expected = ist::expected_income(window);
            if (!(expected > 0.0)) continue;

            Staged item;
            item.row.farm_id = rec.farm_id;
            item.row.year = rec.year;
            item.row.label = ist::indemnity(rec.income, expected, params);
            item.row.va_prev = prev->income;
            item.row.weight = rec.weight;

            auto& f = item.features;
            f.reserve(data.feature_names.size());
            f.push_back(expected);
            f.push_back(window.size() >= 2 ? stats::sd(window) : 0.0);
            f.push_back(prev->income);
            for (std::size_t k = 0; k < num_idx.size(); ++k)
                f.push_back(prev->covariates[k]);
            f.resize(data.feature_names.size(), 0.0);
            for (const auto& b : blocks) {
                const int level = prev->categories[b.cat_slot];
                if (level >= 1) f[b.first_col + level - 1] = 1.0;
            }
            staged.push_back(std::move(item));
        }
    }

    data.rows.reserve(staged.size());
    data.X.resize(static_cast<Eigen::Index>(staged.size()),
                  static_cast<Eigen::Index>(data.feature_names.size()));
    data.y.resize(static_cast<Eigen::Index>(staged.size()));
    std::set<int> years;
    for (std::size_t i = 0; i < staged.size(); ++i) {
        data.rows.push_back(staged[i].row);
        for (std::size_t j = 0; j < staged[i].features.size(); ++j)
            data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                staged[i].features[j];
        data.y(static_cast<Eigen::Index>(i)) = staged[i].row.label;
        years.insert(staged[i].row.year);
    }
    data.years.assign(years.begin(), years.end());
    return data;
}

namespace {

struct Subset {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

Subset take(const Dataset& data, const std::vector<std::size_t>& idx) {
    Subset s;
    s.X.resize(static_cast<Eigen::Index>(idx.size()), data.X.cols());
    s.y.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        s.X.row(static_cast<Eigen::Index>(i)) = data.X.row(static_cast<Eigen::Index>(idx[i]));
        s.y(static_cast<Eigen::Index>(i)) = data.y(static_cast<Eigen::Index>(idx[i]));
    }
    return s;
}

// group names selected by a shrink model at its chosen point
std::vector<std::string> shrink_selection(const shrink::ShrinkModel& model) {
    std::vector<std::string> out;
    for (int g : model.selected_groups(model.chosen >= 0 ? model.chosen
                                                         : static_cast<int>(
                                                               model.lambda_path.size()) - 1))
        out.push_back(model.groups[g].name);
    return out;
}

// boosting split counts folded onto group names
std::vector<std::string> boost_selection(const boosting::BoostModel& model,
                                         const std::vector<shrink::Group>& groups) {
    std::vector<std::string> out;
    for (const auto& g : groups) {
        int splits = 0;
        for (int c : g.columns) splits += model.feature_split_counts[c];
        if (splits > 0) out.push_back(g.name);
    }
    return out;
}

struct FittedFamily {
    Eigen::VectorXd train_mu;
    Eigen::VectorXd test_mu;
    std::vector<std::string> selected;
    std::string model_json;
};

FittedFamily fit_family(ModelFamily family, const Subset& train, const Subset& test,
                        double p, const Dataset& data, const FamilyHyper& hyper,
                        std::uint64_t seed) {
    FittedFamily out;
    switch (family) {
        case ModelFamily::Glm: {
            auto model = tweedie::fit_glm(train.X, train.y, p, data.feature_names);
            out.train_mu = model.predict(train.X);
            out.test_mu = model.predict(test.X);
            for (const auto& g : data.groups) out.selected.push_back(g.name);
            out.model_json = model.to_json();
            break;
        }
        case ModelFamily::Lasso:
        case ModelFamily::ElasticNet: {
            const std::vector<double> alphas = family == ModelFamily::Lasso
                                                   ? std::vector<double>{1.0}
                                                   : hyper.en_alpha_grid;
            auto cvr = shrink::cross_validate(train.X, train.y, data.groups, alphas,
                                              hyper.penalty, p, hyper.cv_folds, seed,
                                              data.feature_names);
            out.train_mu = cvr.model.predict(train.X, cvr.model.chosen);
            out.test_mu = cvr.model.predict(test.X, cvr.model.chosen);
            out.selected = shrink_selection(cvr.model);
            out.model_json = cvr.model.to_json();
            break;
        }
        case ModelFamily::Boosting: {
            boosting::BoostConfig cfg = hyper.boost;
            cfg.seed = seed;
            auto cv = boosting::select_trees_by_cv(train.X, train.y, p, cfg,
                                                   hyper.cv_folds, seed);
            cfg.max_trees = cv.best_m;
            auto model = boosting::fit(train.X, train.y, p, cfg, data.feature_names);
            out.train_mu = model.predict(train.X);
            out.test_mu = model.predict(test.X);
            out.selected = boost_selection(model, data.groups);
            out.model_json = boosting::to_json(model);
            break;
        }
    }
    return out;
}

} // namespace

OutOfSampleResult run_out_of_sample(const Dataset& data, double p,
                                    const std::vector<ModelFamily>& families,
                                    const std::vector<int>& target_years,
                                    int resamples, double train_frac,
                                    std::uint64_t seed, const FamilyHyper& hyper) {
    OutOfSampleResult result;
    result.p = p;
    for (int year : target_years) {
        const auto pool_idx = data.rows_for_year(year - 1);
        const auto test_idx = data.rows_for_year(year);
        if (pool_idx.empty() || test_idx.empty())
            throw std::invalid_argument("run_out_of_sample: no labeled rows around year " +
                                        std::to_string(year));
        const Subset test = take(data, test_idx);
        std::vector<double> pool_labels;
        for (auto i : pool_idx) pool_labels.push_back(data.rows[i].label);

        for (int r = 0; r < resamples; ++r) {
            const auto split = stratified_split(
                pool_labels, train_frac,
                derive_seed(seed, static_cast<std::uint64_t>(year) * 1000 + r));
            std::vector<std::size_t> train_idx;
            for (auto local : split.train) train_idx.push_back(pool_idx[local]);
            const Subset train = take(data, train_idx);

            for (auto family : families) {
                CellMetrics cell;
                cell.year = year;
                cell.resample = r;
                cell.family = family;
                try {
                    auto fitted = fit_family(
                        family, train, test, p, data, hyper,
                        derive_seed(seed, (static_cast<std::uint64_t>(year) * 100 + r) * 10 +
                                              static_cast<std::uint64_t>(family)));
                    cell.r2_train = r2_cw(train.y, fitted.train_mu, p);
                    cell.r2_test = r2_cw(test.y, fitted.test_mu, p);
                    cell.rmse_train = rmse(train.y, fitted.train_mu);
                    cell.rmse_test = rmse(test.y, fitted.test_mu);
                    cell.selected = std::move(fitted.selected);
                } catch (const std::exception& e) {
                    cell.failed = true;
                    cell.error = e.what();
                }
                result.cells.push_back(std::move(cell));
            }
        }
    }
    return result;
}

std::vector<YearPrediction> predict_by_year(const Dataset& data, double p,
                                            const std::vector<ModelFamily>& families,
                                            const std::vector<int>& target_years,
                                            std::uint64_t seed,
                                            const FamilyHyper& hyper) {
    std::vector<YearPrediction> out;
    for (int year : target_years) {
        const auto pool_idx = data.rows_for_year(year - 1);
        const auto test_idx = data.rows_for_year(year);
        if (pool_idx.empty() || test_idx.empty())
            throw std::invalid_argument("predict_by_year: no labeled rows around year " +
                                        std::to_string(year));
        const Subset train = take(data, pool_idx);
        const Subset test = take(data, test_idx);

        for (auto family : families) {
            YearPrediction pred;
            pred.year = year;
            pred.family = family;
            auto fitted = fit_family(
                family, train, test, p, data, hyper,
                derive_seed(seed, static_cast<std::uint64_t>(year) * 40 +
                                      static_cast<std::uint64_t>(family)));
            pred.selected = std::move(fitted.selected);
            pred.model_json = std::move(fitted.model_json);
            pred.quotes.reserve(test_idx.size());
            for (std::size_t i = 0; i < test_idx.size(); ++i) {
                const auto& row = data.rows[test_idx[i]];
                PremiumQuote q;
                q.farm_id = row.farm_id;
                q.year = row.year;
                q.expected_indemnity = fitted.test_mu(static_cast<Eigen::Index>(i));
                q.va_prev = row.va_prev;
                q.realized_indemnity = row.label;
                q.weight = row.weight;
                pred.quotes.push_back(std::move(q));
            }
            out.push_back(std::move(pred));
        }
    }
    return out;
}

EconReport economic_report(const std::vector<YearPrediction>& predictions,
                           const std::vector<double>& thresholds, double delta) {
    EconReport report;
    // pool quotes per family across years
    std::map<ModelFamily, std::vector<PremiumQuote>> pooled;
    for (const auto& pred : predictions) {
        auto& bucket = pooled[pred.family];
        for (const auto& q : pred.quotes) bucket.push_back(q);
    }
    for (auto& [family, raw] : pooled) {
        const auto quotes = quote_premiums(raw, delta);
        for (double threshold : thresholds) {
            EconReport::Section section;
            section.threshold = threshold;
            section.family = family;
            const auto idx = compatibility_filter(quotes, threshold);
            section.participants = idx.size();
            std::vector<PremiumQuote> participants;
            participants.reserve(idx.size());
            for (auto i : idx) participants.push_back(quotes[i]);
            section.balance = balance(participants);
            std::map<std::string, double> per_farm;
            for (const auto& q : participants)
                per_farm[q.farm_id] += q.premium - q.realized_indemnity;
            section.participating_farms = per_farm.size();
            std::vector<double> nets;
            nets.reserve(per_farm.size());
            for (const auto& [farm, net] : per_farm) nets.push_back(net);
            section.classes = net_premium_classes(nets);
            report.sections.push_back(std::move(section));
        }
    }
    return report;
}

} // namespace agristab::evalecon
