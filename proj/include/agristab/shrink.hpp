#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace agristab::shrink {

// Column partition for the grouped penalty: each categorical one-hot block
// is one group, each numeric feature a singleton. Group weight sqrt(size).
struct Group {
    std::string name;
    std::vector<int> columns;
};

struct PenaltyConfig {
    double alpha_mix = 1.0;     // 1 = LASSO; (0,1) elastic net
    std::size_t path_length = 100;
    double lambda_min_ratio = 1e-4;
    std::vector<double> lambda_path; // optional explicit path, decreasing
    double tol = 1e-7;          // max standardized coefficient change
    int max_cycles = 100000;

    void validate() const;
};

struct ShrinkModel {
    std::vector<std::string> names;       // feature names (no intercept)
    std::vector<Group> groups;
    std::vector<double> lambda_path;
    std::vector<double> intercepts;       // per lambda
    std::vector<Eigen::VectorXd> betas;   // per lambda, original scale
    int chosen = -1;                      // index of (lambda*, alpha*)
    double alpha_mix = 1.0;
    double p = 1.5;
    double phi = 1.0;

    Eigen::VectorXd predict(const Eigen::MatrixXd& X, int path_index) const;
    std::vector<int> selected_groups(int path_index) const;
    std::string to_json() const;
};

double soft_threshold(double z, double gamma);

// Smallest lambda with the all-zero penalized solution stationary; gradient
// of the deviance at the intercept-only model, maximized over groups with
// group-weight normalization, divided by alpha_mix.
double lambda_max(const Eigen::MatrixXd& X_standardized, const Eigen::VectorXd& y,
                  const std::vector<Group>& groups, double alpha_mix, double p,
                  const Eigen::VectorXd* weights = nullptr);

// Blockwise-majorization coordinate descent on the penalized Tweedie
// deviance (log link; identity link Gaussian when p = 0), warm-started
// along the lambda path. X is standardized internally; coefficients are
// returned on the original scale; the intercept is refit at each lambda.
ShrinkModel fit_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const std::vector<Group>& groups, const PenaltyConfig& config,
                     double p, const std::vector<std::string>& names = {},
                     const Eigen::VectorXd* weights = nullptr);

struct CvCell {
    double lambda = 0.0;
    double alpha = 0.0;
    double rmse = 0.0;
    double deviance = 0.0;      // out-of-fold mean deviance, reported alongside
};

struct CvResult {
    double lambda_star = 0.0;
    double alpha_star = 1.0;
    int lambda_index = -1;
    std::vector<CvCell> table;
    ShrinkModel model;          // refit on the full data at (lambda*, alpha*)
};

// Selects (lambda, alpha) minimizing mean out-of-fold RMSE over stratified
// folds; ties break toward larger lambda then larger alpha. Deterministic
// per seed.
CvResult cross_validate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const std::vector<Group>& groups,
                        const std::vector<double>& alpha_grid,
                        const PenaltyConfig& config, double p, int folds,
                        std::uint64_t seed,
                        const std::vector<std::string>& names = {});

} // namespace agristab::shrink
