#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace agristab::tweedie {

// Exponential-dispersion triple (mu, phi, p) with variance phi * mu^p.
// Legal power set: p in (-inf, 0] u [1, +inf); the (1,2) branch is the
// compound Poisson-Gamma with an atom at zero.
struct TweedieParams {
    double mu = 1.0;
    double phi = 1.0;
    double p = 1.5;

    void validate() const;
};

double variance_function(double mu, double p);

// P(Y = 0) = exp(-lambda), lambda = mu^(2-p) / (phi*(2-p)); requires 1<p<2.
double zero_mass(double mu, double phi, double p);

// Density (mass at the support atoms). Closed forms at p in {0,1,2,3};
// series evaluation of the normalizer for p in (1,2). Points outside the
// support return 0.
double density(double y, const TweedieParams& params);
double log_density(double y, const TweedieParams& params);

// Unit deviance d(y, mu) >= 0; analytic limits at p = 1 and p = 2.
double unit_deviance(double y, double mu, double p);

// Total (weighted) deviance sum over observations.
double total_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                      double p, const Eigen::VectorXd* weights = nullptr);

// Draws: compound Poisson-Gamma for p in (1,2); closed-form samplers for
// p in {0,1,2,3}. Deterministic per seed.
std::vector<double> sample(const TweedieParams& params, std::size_t n,
                           std::uint64_t seed);

struct GlmModel {
    std::vector<std::string> names;   // column names incl. "(intercept)"
    Eigen::VectorXd beta;             // same order as names
    double p = 1.5;
    double phi = 1.0;
    double deviance = 0.0;
    double null_deviance = 0.0;
    int iterations = 0;

    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const; // exp(X*b)
    std::string to_json() const;
    static GlmModel from_json(const std::string& text);
};

struct GlmOptions {
    double rel_tol = 1e-8;
    int max_iters = 100;
    bool throw_on_nonconvergence = true;
};

// IRLS Tweedie GLM with log link. X excludes the intercept column; columns
// are named for diagnostics. Converges on relative deviance change < 1e-8
// (at most 100 iterations) with step-halving on deviance increase. phi is
// the mean unit deviance over n - k degrees of freedom.
GlmModel fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double p,
                 const std::vector<std::string>& names = {},
                 const Eigen::VectorXd* weights = nullptr,
                 const GlmOptions& options = {});

struct PowerEstimate {
    double p = 1.5;
    double phi = 1.0;
    double log_likelihood = 0.0;
    bool at_grid_edge = false;
    std::vector<double> grid;
    std::vector<double> grid_log_likelihood;
};

std::vector<double> default_power_grid(); // 1.02, 1.04, ..., 1.98

// Profile likelihood over the p grid: per p, fit the mean model, estimate
// phi by mean deviance over dof, evaluate the exact series likelihood;
// parabolic refinement between the best grid neighbours. X may be empty
// (intercept-only profile).
PowerEstimate estimate_power(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                             const std::vector<double>& grid = default_power_grid());

struct TwoStageFit {
    GlmModel model;                  // stage-2 fit on retained observations
    std::vector<bool> outlier_mask;  // true = dropped, size n
    double p_first = 1.5;
    double p_final = 1.5;
};

// Stage 1: estimate p*, fit GLM, flag observations whose working-weight
// Cook's distance exceeds cook_cutoff(n, k) (at most 5% of rows). Stage 2:
// re-estimate p on the retained set and refit.
TwoStageFit two_stage_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const std::vector<std::string>& names = {},
                          const std::vector<double>& grid = default_power_grid());

// Working-weight Cook's distances of a fitted GLM (one-step approximation).
Eigen::VectorXd cooks_distance(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const GlmModel& model);

} // namespace agristab::tweedie
