#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace agristab::boosting {

struct BoostConfig {
    int max_trees = 3000;
    double learning_rate = 0.05;
    int max_depth = 3;
    int min_node_size = 10;
    double subsample = 1.0;     // stochastic boosting off by default
    std::uint64_t seed = 0;

    void validate() const;
};

struct TreeNode {
    int feature = -1;           // -1 marks a leaf
    double threshold = 0.0;     // go left when x[feature] <= threshold
    double value = 0.0;         // leaf score (already learning-rate damped)
    int left = -1;
    int right = -1;
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root
    double predict(const Eigen::VectorXd& x) const;
};

struct BoostModel {
    double f0 = 0.0;            // log of the (weighted) mean response
    std::vector<Tree> trees;
    double p = 1.5;
    std::vector<std::string> names;
    std::vector<int> feature_split_counts;
    std::vector<double> train_deviance;   // per round, starting at round 0
    Eigen::VectorXd train_scores;         // final scores of the training rows

    Eigen::VectorXd predict(const Eigen::MatrixXd& X, int n_trees = -1) const;
};

// Gradient boosting on the Tweedie deviance with log link. F0 = log mean(y);
// each round fits a depth-bounded tree to the negative deviance gradient and
// sets each leaf to the exact in-leaf deviance minimizer, damped by the
// learning rate.
BoostModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double p,
               const BoostConfig& config, const std::vector<std::string>& names = {});

struct TreeCvResult {
    int best_m = 0;                       // effective tree count
    std::vector<double> mean_rmse;        // per m = 0..max_trees
};

// M* = argmin over m of mean out-of-fold RMSE, stratified on zero/non-zero.
TreeCvResult select_trees_by_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                double p, const BoostConfig& config, int folds,
                                std::uint64_t seed);

struct FeatureUsage {
    std::string name;
    int splits = 0;
};

// Features appearing in at least one split, with split counts, descending.
std::vector<FeatureUsage> selected_features(const BoostModel& model);

std::string to_json(const BoostModel& model);

} // namespace agristab::boosting
