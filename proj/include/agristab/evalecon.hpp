#pragma once

#include "agristab/boosting.hpp"
#include "agristab/ist.hpp"
#include "agristab/panel.hpp"
#include "agristab/shrink.hpp"
#include "agristab/tweedie.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace agristab::evalecon {

// Cameron-Windmeijer deviance R^2: 1 - D(y, mu_hat)/D(y, ybar). May be
// negative; throws when the null deviance is zero.
double r2_cw(const Eigen::VectorXd& y, const Eigen::VectorXd& mu_hat, double p);

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& mu_hat);

struct SelectionRow {
    std::string feature;
    int count = 0;
    int percent = 0;            // integer percent, as reported
};

// Selection count/percentage per feature over a collection of fitted models'
// selected-feature sets, sorted descending (never-selected features kept).
std::vector<SelectionRow> selection_frequency(
    const std::vector<std::vector<std::string>>& model_selections,
    const std::vector<std::string>& all_features);

struct PremiumQuote {
    std::string farm_id;
    int year = 0;
    double expected_indemnity = 0.0;
    double delta = 0.0;
    double premium = 0.0;       // E(Ind)*(1+delta), clipped below at 0
    double va_prev = 0.0;       // prior-year value added
    double realized_indemnity = 0.0;
    double weight = 1.0;
};

std::vector<PremiumQuote> quote_premiums(const std::vector<PremiumQuote>& raw,
                                         double delta);

// Participation: premium <= threshold * VA_prev with VA_prev > 0.
std::vector<std::size_t> compatibility_filter(const std::vector<PremiumQuote>& quotes,
                                              double threshold_fraction);

struct BalanceResult {
    std::vector<int> years;
    std::vector<double> annual;          // sum(premium - indemnity) per year
    std::vector<double> annual_weighted;
    double multiannual = 0.0;            // Pi
    double multiannual_weighted = 0.0;
};

BalanceResult balance(const std::vector<PremiumQuote>& participants);

struct NetPremiumClasses {
    // magnitude boundaries in currency units, inclusive on the magnitude side
    static const std::vector<double>& boundaries(); // 100k..1000k
    std::size_t n_nonnegative = 0;
    std::size_t n_negative = 0;
    double sum_nonnegative = 0.0;
    double sum_negative = 0.0;
    std::vector<std::size_t> count_ge;   // per boundary: net >= bound
    std::vector<std::size_t> count_le;   // per boundary: net <= -bound
    std::vector<double> sum_ge;
    std::vector<double> sum_le;
};

// Per-farm multiannual net premium sum(premium - indemnity) binned into the
// nested classes {>=0, >=100k, ..., >=1000k, <0, <=-100k, ..., <=-1000k}.
NetPremiumClasses net_premium_classes(const std::vector<double>& per_farm_net);

enum class ModelFamily { Glm, Lasso, ElasticNet, Boosting };
std::string family_name(ModelFamily f);

struct LabeledRow {
    std::string farm_id;
    int year = 0;               // target year of the indemnity label
    double label = 0.0;         // Ind at `year`
    double va_prev = 0.0;       // income at year-1 (compatibility proxy)
    double weight = 1.0;
};

// Design matrix + metadata for the ratemaking models: one row per farm-year
// with a complete positive-reference history; features are the prior-year
// covariates plus avg/sd of the income window and the lagged income, with
// one-hot categories (first level dropped, dummies grouped per category).
struct Dataset {
    std::vector<LabeledRow> rows;
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::string> feature_names;
    std::vector<shrink::Group> groups;
    std::vector<int> years;     // distinct label years, ascending

    std::vector<std::size_t> rows_for_year(int year) const;
};

Dataset build_dataset(const FarmPanel& panel, const ist::IstParams& params);

struct FamilyHyper {
    std::vector<double> en_alpha_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    shrink::PenaltyConfig penalty;
    boosting::BoostConfig boost;
    int cv_folds = 5;
};

struct CellMetrics {
    int year = 0;               // test (target) year
    int resample = 0;
    ModelFamily family = ModelFamily::Glm;
    double r2_train = 0.0;
    double r2_test = 0.0;
    double rmse_train = 0.0;
    double rmse_test = 0.0;
    std::vector<std::string> selected;
    bool failed = false;
    std::string error;
};

struct OutOfSampleResult {
    std::vector<CellMetrics> cells;      // (year, resample, family) order
    double p = 1.5;
};

// For target year t: train on a 75% stratified resample of the year t-1
// labeled rows, test on all year-t rows. `resamples` random groups per year.
OutOfSampleResult run_out_of_sample(const Dataset& data, double p,
                                    const std::vector<ModelFamily>& families,
                                    const std::vector<int>& target_years,
                                    int resamples, double train_frac,
                                    std::uint64_t seed, const FamilyHyper& hyper);

// One full-train model per (family, target year): trained on all labeled
// rows of year t-1, predicting expected indemnities for year-t rows.
struct YearPrediction {
    int year = 0;
    ModelFamily family = ModelFamily::Glm;
    std::vector<PremiumQuote> quotes;    // per year-t row, premium unset
    std::vector<std::string> selected;
    std::string model_json;
};

std::vector<YearPrediction> predict_by_year(const Dataset& data, double p,
                                            const std::vector<ModelFamily>& families,
                                            const std::vector<int>& target_years,
                                            std::uint64_t seed,
                                            const FamilyHyper& hyper);

struct EconReport {
    struct Section {
        double threshold = 1.0;
        ModelFamily family = ModelFamily::Glm;
        std::size_t participants = 0;        // participating farm-year observations
        std::size_t participating_farms = 0;
        BalanceResult balance;               // weighted and unweighted
        NetPremiumClasses classes;           // per-farm multiannual nets
    };
    std::vector<Section> sections;
};

EconReport economic_report(const std::vector<YearPrediction>& predictions,
                           const std::vector<double>& thresholds, double delta);

} // namespace agristab::evalecon
