#include "agristab/boosting.hpp"

#include "agristab/panel.hpp"
#include "agristab/rng.hpp"
#include "agristab/tweedie.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace agristab::boosting {

namespace {

constexpr double kLeafClamp = 10.0;
constexpr double kMinGain = 1e-12;

double logsumexp(const std::vector<double>& terms) {
    if (terms.empty()) return -std::numeric_limits<double>::infinity();
    const double peak = *std::max_element(terms.begin(), terms.end());
    if (!std::isfinite(peak)) return peak;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - peak);
    return peak + std::log(acc);
}

} // namespace

void BoostConfig::validate() const {
    if (max_trees < 0) throw std::invalid_argument("max_trees must be >= 0");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
        throw std::invalid_argument("learning_rate must lie in (0,1]");
    if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
    if (min_node_size < 1) throw std::invalid_argument("min_node_size must be >= 1");
    if (!(subsample > 0.0 && subsample <= 1.0))
        throw std::invalid_argument("subsample must lie in (0,1]");
}

double Tree::predict(const Eigen::VectorXd& x) const {
    int at = 0;
    while (nodes[at].feature >= 0)
        at = x(nodes[at].feature) <= nodes[at].threshold ? nodes[at].left
                                                         : nodes[at].right;
    return nodes[at].value;
}

Eigen::VectorXd BoostModel::predict(const Eigen::MatrixXd& X, int n_trees) const {
    if (!names.empty() && X.cols() != static_cast<Eigen::Index>(names.size()))
        throw std::invalid_argument("boost predict: feature count mismatch");
    const std::size_t use =
        n_trees < 0 ? trees.size() : std::min<std::size_t>(n_trees, trees.size());
    Eigen::VectorXd mu(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double f = f0;
        const Eigen::VectorXd row = X.row(i).transpose();
        for (std::size_t m = 0; m < use; ++m) f += trees[m].predict(row);
        mu(i) = std::exp(std::clamp(f, -250.0, 250.0));
    }
    return mu;
}

BoostModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double p,
               const BoostConfig& config, const std::vector<std::string>& names) {
    config.validate();
    if (!((p > 1.0 && p < 2.0) || p == 2.0))
        throw std::invalid_argument("boosting requires p in (1,2]");
    const Eigen::Index n = y.size();
    const Eigen::Index k = X.cols();
    if (X.rows() != n) throw std::invalid_argument("boost fit: X rows do not match y");
    if ((y.array() < 0.0).any()) throw std::invalid_argument("boost fit: y must be >= 0");
    if (!(y.mean() > 0.0))
        throw std::runtime_error("boost fit: all-zero response has no log-link minimizer");

    BoostModel model;
    model.p = p;
    model.names = names.size() == static_cast<std::size_t>(k)
                      ? names
                      : [&] {
                            std::vector<std::string> out;
                            for (Eigen::Index j = 0; j < k; ++j)
                                out.push_back("x" + std::to_string(j + 1));
                            return out;
                        }();
    model.feature_split_counts.assign(static_cast<std::size_t>(k), 0);
    model.f0 = std::log(y.mean());

    Eigen::VectorXd score = Eigen::VectorXd::Constant(n, model.f0);
    auto deviance_now = [&] {
        double d = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            d += tweedie::unit_deviance(y(i), std::exp(std::clamp(score(i), -250.0, 250.0)), p);
        return d;
    };
    model.train_deviance.push_back(deviance_now());

    // presorted feature orders, ties broken by row index
    std::vector<std::vector<int>> order(static_cast<std::size_t>(k));
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(k); ++j) {
        auto& ord = order[j];
        ord.resize(n);
        std::iota(ord.begin(), ord.end(), 0);
        std::stable_sort(ord.begin(), ord.end(), [&X, j](int a, int b) {
            return X(a, static_cast<Eigen::Index>(j)) < X(b, static_cast<Eigen::Index>(j));
        });
    }

    auto rng = make_rng(config.seed, 0x60057u);
    std::vector<int> rows(n);
    std::iota(rows.begin(), rows.end(), 0);

    struct Best {
        double gain = 0.0;
        int feature = -1;
        double threshold = 0.0;
    };

    for (int m = 0; m < config.max_trees; ++m) {
        std::vector<char> in_bag(n, 1);
        if (config.subsample < 1.0) {
            std::fill(in_bag.begin(), in_bag.end(), 0);
            std::shuffle(rows.begin(), rows.end(), rng);
            const auto take = static_cast<std::size_t>(config.subsample * n);
            for (std::size_t i = 0; i < std::max<std::size_t>(take, 1); ++i)
                in_bag[rows[i]] = 1;
        }

        // negative gradient of the deviance w.r.t. the score
        Eigen::VectorXd grad(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double f = std::clamp(score(i), -250.0, 250.0);
            grad(i) = y(i) * std::exp((1.0 - p) * f) - std::exp((2.0 - p) * f);
        }

        Tree tree;
        tree.nodes.push_back(TreeNode{});
        // node assignment; -1 = out of bag
        std::vector<int> node_of(n, -1);
        for (Eigen::Index i = 0; i < n; ++i)
            if (in_bag[i]) node_of[i] = 0;

        std::vector<int> level = {0};
        for (int depth = 0; depth < config.max_depth && !level.empty(); ++depth) {
            const int n_open = static_cast<int>(level.size());
            std::vector<int> slot_of_node(tree.nodes.size(), -1);
            for (int s = 0; s < n_open; ++s) slot_of_node[level[s]] = s;

            std::vector<double> total_sum(n_open, 0.0);
            std::vector<long> total_cnt(n_open, 0);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (node_of[i] < 0) continue;
                const int s = slot_of_node[node_of[i]];
                if (s < 0) continue;
                total_sum[s] += grad(i);
                total_cnt[s] += 1;
            }

            // best split per (feature, open node), features in parallel
            std::vector<std::vector<Best>> per_feature(
                static_cast<std::size_t>(k), std::vector<Best>(n_open));
#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(k); ++j) {
                std::vector<double> left_sum(n_open, 0.0);
                std::vector<long> left_cnt(n_open, 0);
                std::vector<double> prev_val(n_open, 0.0);
                std::vector<char> has_prev(n_open, 0);
                auto& best = per_feature[j];
                for (int idx : order[j]) {
                    if (node_of[idx] < 0) continue;
                    const int s = slot_of_node[node_of[idx]];
                    if (s < 0) continue;
                    const double v = X(idx, static_cast<Eigen::Index>(j));
                    if (has_prev[s] && v != prev_val[s] &&
                        left_cnt[s] >= config.min_node_size &&
                        total_cnt[s] - left_cnt[s] >= config.min_node_size) {
                        const double rs = total_sum[s] - left_sum[s];
                        const long rc = total_cnt[s] - left_cnt[s];
                        const double gain =
                            left_sum[s] * left_sum[s] / static_cast<double>(left_cnt[s]) +
                            rs * rs / static_cast<double>(rc) -
                            total_sum[s] * total_sum[s] / static_cast<double>(total_cnt[s]);
                        if (gain > best[s].gain + kMinGain ||
                            (best[s].feature < 0 && gain > kMinGain)) {
                            best[s] = {gain, static_cast<int>(j), prev_val[s]};
                        }
                    }
                    left_sum[s] += grad(idx);
                    left_cnt[s] += 1;
                    prev_val[s] = v;
                    has_prev[s] = 1;
                }
            }

            // deterministic reduction over features in index order; ties by
            // lowest feature index then lowest threshold
            std::vector<Best> chosen(n_open);
            for (int j = 0; j < k; ++j)
                for (int s = 0; s < n_open; ++s) {
                    const auto& cand = per_feature[j][s];
                    if (cand.feature < 0) continue;
                    auto& cur = chosen[s];
                    if (cand.gain > cur.gain + kMinGain || cur.feature < 0)
                        cur = cand;
                }

            std::vector<int> next_level;
            for (int s = 0; s < n_open; ++s) {
                const int node_id = level[s];
                if (chosen[s].feature < 0) continue;
                const int left_id = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(TreeNode{});
                tree.nodes.push_back(TreeNode{});
                auto& node = tree.nodes[node_id];
                node.feature = chosen[s].feature;
                node.threshold = chosen[s].threshold;
                node.left = left_id;
                node.right = left_id + 1;
                next_level.push_back(left_id);
                next_level.push_back(left_id + 1);
                model.feature_split_counts[node.feature] += 1;
            }
            if (next_level.empty()) break;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (node_of[i] < 0) continue;
                const auto& node = tree.nodes[node_of[i]];
                if (node.feature < 0) continue;
                node_of[i] = X(i, node.feature) <= node.threshold ? node.left : node.right;
            }
            level = std::move(next_level);
        }

        // leaf values: exact in-leaf minimizer in log space, then damping
        std::vector<std::vector<double>> log_num(tree.nodes.size());
        std::vector<std::vector<double>> log_den(tree.nodes.size());
        for (Eigen::Index i = 0; i < n; ++i) {
            if (node_of[i] < 0) continue;
            const int leaf = node_of[i];
            const double f = std::clamp(score(i), -250.0, 250.0);
            if (y(i) > 0.0) log_num[leaf].push_back(std::log(y(i)) + (1.0 - p) * f);
            log_den[leaf].push_back((2.0 - p) * f);
        }
        for (std::size_t t = 0; t < tree.nodes.size(); ++t) {
            auto& node = tree.nodes[t];
            if (node.feature >= 0) continue;
            double gamma;
            if (log_num[t].empty())
                gamma = log_den[t].empty() ? 0.0 : -kLeafClamp;
            else
                gamma = std::clamp(logsumexp(log_num[t]) - logsumexp(log_den[t]),
                                   -kLeafClamp, kLeafClamp);
            node.value = config.learning_rate * gamma;
        }

        for (Eigen::Index i = 0; i < n; ++i)
            score(i) += tree.predict(X.row(i).transpose());
        model.trees.push_back(std::move(tree));
        model.train_deviance.push_back(deviance_now());
    }

    model.train_scores = score;
    return model;
}

TreeCvResult select_trees_by_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                double p, const BoostConfig& config, int folds,
                                std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("select_trees_by_cv requires folds >= 2");
    const Eigen::Index n = y.size();
    std::vector<double> labels(y.data(), y.data() + n);
    auto fold_of = stratified_folds(labels, folds, seed);

    std::vector<std::vector<double>> fold_sse(
        folds, std::vector<double>(static_cast<std::size_t>(config.max_trees) + 1, 0.0));
    std::vector<long> fold_count(folds, 0);
    std::vector<char> fold_ok(folds, 1);

#pragma omp parallel for schedule(dynamic)
    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> train_idx, test_idx;
        for (Eigen::Index i = 0; i < n; ++i)
            (fold_of[i] == f ? test_idx : train_idx).push_back(i);
        Eigen::MatrixXd Xtr(train_idx.size(), X.cols()), Xte(test_idx.size(), X.cols());
        Eigen::VectorXd ytr(train_idx.size()), yte(test_idx.size());
        for (std::size_t i = 0; i < train_idx.size(); ++i) {
            Xtr.row(i) = X.row(train_idx[i]);
            ytr(i) = y(train_idx[i]);
        }
        for (std::size_t i = 0; i < test_idx.size(); ++i) {
            Xte.row(i) = X.row(test_idx[i]);
            yte(i) = y(test_idx[i]);
        }
        if (!(ytr.mean() > 0.0)) {
            fold_ok[f] = 0;
            continue;
        }
        BoostConfig cfg = config;
        cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(f));
        BoostModel m = fit(Xtr, ytr, p, cfg);

        // staged test scores
        Eigen::VectorXd fscore = Eigen::VectorXd::Constant(yte.size(), m.f0);
        auto accumulate = [&](int stage) {
            double sse = 0.0;
            for (Eigen::Index i = 0; i < yte.size(); ++i) {
                const double e =
                    yte(i) - std::exp(std::clamp(fscore(i), -250.0, 250.0));
                sse += e * e;
            }
            fold_sse[f][stage] = sse;
        };
        accumulate(0);
        for (std::size_t t = 0; t < m.trees.size(); ++t) {
            for (Eigen::Index i = 0; i < yte.size(); ++i)
                fscore(i) += m.trees[t].predict(Xte.row(i).transpose());
            accumulate(static_cast<int>(t) + 1);
        }
        for (std::size_t t = m.trees.size(); t < static_cast<std::size_t>(config.max_trees); ++t)
            fold_sse[f][t + 1] = fold_sse[f][t];
        fold_count[f] = yte.size();
    }

    TreeCvResult result;
    result.mean_rmse.assign(static_cast<std::size_t>(config.max_trees) + 1, 0.0);
    long total = 0;
    for (int f = 0; f < folds; ++f)
        if (fold_ok[f]) total += fold_count[f];
    if (total == 0) throw std::runtime_error("select_trees_by_cv: all folds skipped");
    for (std::size_t t = 0; t <= static_cast<std::size_t>(config.max_trees); ++t) {
        double sse = 0.0;
        for (int f = 0; f < folds; ++f)
            if (fold_ok[f]) sse += fold_sse[f][t];
        result.mean_rmse[t] = std::sqrt(sse / static_cast<double>(total));
    }
    result.best_m = static_cast<int>(
        std::min_element(result.mean_rmse.begin(), result.mean_rmse.end()) -
        result.mean_rmse.begin());
    return result;
}

std::vector<FeatureUsage> selected_features(const BoostModel& model) {
    std::vector<FeatureUsage> out;
    for (std::size_t j = 0; j < model.feature_split_counts.size(); ++j)
        if (model.feature_split_counts[j] > 0)
            out.push_back({model.names[j], model.feature_split_counts[j]});
    std::stable_sort(out.begin(), out.end(),
                     [](const FeatureUsage& a, const FeatureUsage& b) {
                         return a.splits > b.splits;
                     });
    return out;
}

namespace {

nlohmann::json node_to_json(const Tree& tree, int at) {
    const auto& node = tree.nodes[at];
    nlohmann::json j;
    if (node.feature < 0) {
        j["value"] = node.value;
    } else {
        j["feature"] = node.feature;
        j["threshold"] = node.threshold;
        j["left"] = node_to_json(tree, node.left);
        j["right"] = node_to_json(tree, node.right);
    }
    return j;
}

} // namespace

std::string to_json(const BoostModel& model) {
    nlohmann::json j;
    j["f0"] = model.f0;
    j["p"] = model.p;
    j["names"] = model.names;
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) trees.push_back(node_to_json(t, 0));
    j["trees"] = trees;
    return j.dump();
}

} // namespace agristab::boosting
