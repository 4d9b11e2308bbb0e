#include "agristab/shrink.hpp"

#include "agristab/panel.hpp"
#include "agristab/tweedie.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace agristab::shrink {

void PenaltyConfig::validate() const {
    if (!(alpha_mix > 0.0 && alpha_mix <= 1.0))
        throw std::invalid_argument("alpha_mix must lie in (0,1]");
    if (path_length < 1) throw std::invalid_argument("path_length must be >= 1");
    if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0))
        throw std::invalid_argument("lambda_min_ratio must lie in (0,1)");
    for (std::size_t i = 0; i + 1 < lambda_path.size(); ++i)
        if (!(lambda_path[i] > lambda_path[i + 1]) || lambda_path[i + 1] <= 0.0)
            throw std::invalid_argument("lambda path must be strictly decreasing and positive");
}

double soft_threshold(double z, double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("soft threshold requires gamma >= 0");
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

namespace {

struct Standardized {
    Eigen::MatrixXd X;              // centered/scaled copy, dropped columns removed
    Eigen::VectorXd center;         // per original column
    Eigen::VectorXd scale;
    std::vector<int> kept;          // original column index per standardized column
    std::vector<Group> groups;      // remapped to standardized columns
};

Standardized standardize(const Eigen::MatrixXd& X, const std::vector<Group>& groups,
                         const Eigen::VectorXd& w) {
    const Eigen::Index n = X.rows(), k = X.cols();
    const double wsum = w.sum();
    Standardized out;
    out.center.resize(k);
    out.scale.resize(k);
    std::vector<bool> keep(static_cast<std::size_t>(k), true);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double m = w.dot(X.col(j)) / wsum;
        double ss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double c = X(i, j) - m;
            ss += w(i) * c * c;
        }
        const double s = std::sqrt(ss / wsum);
        out.center(j) = m;
        out.scale(j) = s;
        if (!(s > 0.0)) {
            keep[static_cast<std::size_t>(j)] = false;
            std::cerr << "shrink: dropping constant column " << j << "\n";
        }
    }
    for (Eigen::Index j = 0; j < k; ++j)
        if (keep[static_cast<std::size_t>(j)]) out.kept.push_back(static_cast<int>(j));
    out.X.resize(n, static_cast<Eigen::Index>(out.kept.size()));
    for (std::size_t c = 0; c < out.kept.size(); ++c) {
        const Eigen::Index j = out.kept[c];
        out.X.col(static_cast<Eigen::Index>(c)) =
            (X.col(j).array() - out.center(j)) / out.scale(j);
    }
    std::vector<int> new_index(static_cast<std::size_t>(k), -1);
    for (std::size_t c = 0; c < out.kept.size(); ++c) new_index[out.kept[c]] = static_cast<int>(c);
    for (const auto& g : groups) {
        Group ng;
        ng.name = g.name;
        for (int col : g.columns)
            if (new_index[col] >= 0) ng.columns.push_back(new_index[col]);
        if (!ng.columns.empty()) out.groups.push_back(std::move(ng));
    }
    return out;
}

struct WorkingState {
    Eigen::VectorXd eta;     // current linear predictor (standardized scale)
    Eigen::VectorXd v;       // IRLS weights (include observation weights)
    Eigen::VectorXd r;       // working residual z - eta
};

// Refresh the IRLS quadratic approximation around the current coefficients.
// Identity-link Gaussian when p == 0, log link otherwise.
void reweight(const Eigen::VectorXd& y, const Eigen::VectorXd& w, double p,
              WorkingState& st) {
    const Eigen::Index n = y.size();
    st.v.resize(n);
    st.r.resize(n);
    if (p == 0.0) {
        for (Eigen::Index i = 0; i < n; ++i) {
            st.v(i) = w(i);
            st.r(i) = y(i) - st.eta(i);
        }
        return;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = std::exp(std::clamp(st.eta(i), -250.0, 250.0));
        st.v(i) = std::max(w(i) * std::pow(mu, 2.0 - p), 1e-300);
        st.r(i) = (y(i) - mu) / mu;
    }
}

double objective(const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                 const Eigen::VectorXd& eta, double p, double lambda, double alpha,
                 const std::vector<Group>& groups, const std::vector<double>& gw,
                 const Eigen::VectorXd& beta) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double mu = p == 0.0 ? eta(i) : std::exp(std::clamp(eta(i), -250.0, 250.0));
        dev += w(i) * tweedie::unit_deviance(y(i), mu, p);
    }
    double pen = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        double nrm2 = 0.0;
        for (int c : groups[g].columns) nrm2 += beta(c) * beta(c);
        const double nrm = std::sqrt(nrm2);
        pen += gw[g] * (alpha * nrm + 0.5 * (1.0 - alpha) * nrm2);
    }
    return dev / (2.0 * static_cast<double>(y.size())) + lambda * pen;
}

} // namespace

double lambda_max(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& y,
                  const std::vector<Group>& groups, double alpha_mix, double p,
                  const Eigen::VectorXd* weights) {
    if (!(alpha_mix > 0.0)) throw std::domain_error("lambda_max requires alpha_mix > 0");
    const Eigen::Index n = y.size();
    Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
    const double wsum = w.sum();
    const double ybar = w.dot(y) / wsum;

    // gradient of the deviance part at the intercept-only solution
    Eigen::VectorXd grad_src(n);
    if (p == 0.0) {
        for (Eigen::Index i = 0; i < n; ++i) grad_src(i) = w(i) * (y(i) - ybar);
    } else {
        const double mu_pow = std::pow(ybar, 1.0 - p);
        for (Eigen::Index i = 0; i < n; ++i) grad_src(i) = w(i) * mu_pow * (y(i) - ybar);
    }
    Eigen::VectorXd g = Xs.transpose() * grad_src / static_cast<double>(n);

    double best = 0.0;
    for (const auto& group : groups) {
        double nrm2 = 0.0;
        for (int c : group.columns) nrm2 += g(c) * g(c);
        const double gw = std::sqrt(static_cast<double>(group.columns.size()));
        best = std::max(best, std::sqrt(nrm2) / gw);
    }
    return best / alpha_mix;
}

Eigen::VectorXd ShrinkModel::predict(const Eigen::MatrixXd& X, int path_index) const {
    const auto& b = betas.at(path_index);
    Eigen::VectorXd eta = (X * b).array() + intercepts.at(path_index);
    if (p == 0.0) return eta;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        eta(i) = std::exp(std::clamp(eta(i), -250.0, 250.0));
    return eta;
}

std::vector<int> ShrinkModel::selected_groups(int path_index) const {
    std::vector<int> out;
    const auto& b = betas.at(path_index);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        bool any = false;
        for (int c : groups[g].columns)
            if (b(c) != 0.0) any = true;
        if (any) out.push_back(static_cast<int>(g));
    }
    return out;
}

std::string ShrinkModel::to_json() const {
    nlohmann::json j;
    j["alpha_mix"] = alpha_mix;
    j["p"] = p;
    j["phi"] = phi;
    j["lambda_path"] = lambda_path;
    j["chosen"] = chosen;
    j["names"] = names;
    nlohmann::json path = nlohmann::json::array();
    for (std::size_t l = 0; l < betas.size(); ++l) {
        nlohmann::json entry;
        entry["lambda"] = lambda_path[l];
        entry["intercept"] = intercepts[l];
        std::vector<double> b(betas[l].data(), betas[l].data() + betas[l].size());
        entry["beta"] = b;
        path.push_back(std::move(entry));
    }
    j["path"] = path;
    if (chosen >= 0) {
        nlohmann::json sel = nlohmann::json::array();
        for (int g : selected_groups(chosen)) sel.push_back(groups[g].name);
        j["selected_groups"] = sel;
    }
    return j.dump(2);
}

ShrinkModel fit_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const std::vector<Group>& groups, const PenaltyConfig& config,
                     double p, const std::vector<std::string>& names,
                     const Eigen::VectorXd* weights) {
    config.validate();
    if (p != 0.0 && !(p >= 1.0))
        throw std::invalid_argument("fit_path supports p = 0 or p >= 1");
    const Eigen::Index n = y.size();
    if (X.rows() != n) throw std::invalid_argument("fit_path: X rows do not match y");
    Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);

    auto std_x = standardize(X, groups, w);
    const Eigen::Index kk = std_x.X.cols();
    const auto& G = std_x.groups;
    std::vector<double> gw(G.size());
    for (std::size_t g = 0; g < G.size(); ++g)
        gw[g] = std::sqrt(static_cast<double>(G[g].columns.size()));

    ShrinkModel model;
    model.names = names.size() == static_cast<std::size_t>(X.cols())
                      ? names
                      : [&] {
                            std::vector<std::string> out;
                            for (Eigen::Index j = 0; j < X.cols(); ++j)
                                out.push_back("x" + std::to_string(j + 1));
                            return out;
                        }();
    model.groups = groups;
    model.alpha_mix = config.alpha_mix;
    model.p = p;

    std::vector<double> path = config.lambda_path;
    if (path.empty()) {
        const double lmax = lambda_max(std_x.X, y, G, config.alpha_mix, p, &w);
        const double lmin = std::max(lmax * config.lambda_min_ratio, 1e-300);
        path.resize(config.path_length);
        if (config.path_length == 1) {
            path[0] = lmax;
        } else {
            const double step = (std::log(lmax) - std::log(lmin)) /
                                static_cast<double>(config.path_length - 1);
            for (std::size_t l = 0; l < config.path_length; ++l)
                path[l] = std::exp(std::log(lmax) - step * static_cast<double>(l));
        }
    }
    model.lambda_path = path;

    const double wsum = w.sum();
    const double ybar = w.dot(y) / wsum;
    double intercept = p == 0.0 ? ybar : std::log(std::max(ybar, 1e-300));
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(kk);

    WorkingState st;
    st.eta = Eigen::VectorXd::Constant(n, intercept);

    for (std::size_t l = 0; l < path.size(); ++l) {
        const double lambda = path[l];
        const double l1 = lambda * config.alpha_mix;
        const double l2 = lambda * (1.0 - config.alpha_mix);

        double prev_obj = objective(y, w, st.eta, p, lambda, config.alpha_mix, G, gw, beta);
        bool converged = kk == 0;
        int outer = 0;
        const int max_outer = p == 0.0 ? 1 : 50;
        // Gaussian-identity case: the problem is already quadratic, a single
        // outer pass with full coordinate convergence is exact.
        for (outer = 0; outer < std::max(1, max_outer) && !converged; ++outer) {
            const Eigen::VectorXd beta_snapshot = beta;
            const Eigen::VectorXd eta_snapshot = st.eta;
            const double intercept_snapshot = intercept;
            reweight(y, w, p, st);

            // weight-scaled columns, fixed within one outer iteration
            Eigen::MatrixXd VX(n, kk);
            for (Eigen::Index c = 0; c < kk; ++c)
                VX.col(c) = st.v.cwiseProduct(std_x.X.col(c));

            // majorization constant per group: largest eigenvalue of the
            // weighted block Gram matrix (exact for singletons)
            std::vector<double> major(G.size());
            for (std::size_t g = 0; g < G.size(); ++g) {
                const auto& cols = G[g].columns;
                if (cols.size() == 1) {
                    major[g] = VX.col(cols[0]).dot(std_x.X.col(cols[0])) /
                               static_cast<double>(n);
                } else {
                    const auto bs = static_cast<Eigen::Index>(cols.size());
                    Eigen::MatrixXd gram(bs, bs);
                    for (Eigen::Index a = 0; a < bs; ++a)
                        for (Eigen::Index b = a; b < bs; ++b) {
                            gram(a, b) = VX.col(cols[a]).dot(std_x.X.col(cols[b])) /
                                         static_cast<double>(n);
                            gram(b, a) = gram(a, b);
                        }
                    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
                    major[g] = eig.eigenvalues().maxCoeff();
                }
                major[g] = std::max(major[g], 1e-12);
            }

            // intercept step on the working problem
            {
                const double num = st.v.dot(st.r);
                const double den = st.v.sum();
                const double delta = num / den;
                intercept += delta;
                st.eta.array() += delta;
                st.r.array() -= delta;
            }

            // block coordinate passes with active-set cycling
            std::vector<bool> active(G.size(), true);
            for (int cycle = 0; cycle < config.max_cycles; ++cycle) {
                double max_change = 0.0;
                for (std::size_t g = 0; g < G.size(); ++g) {
                    if (!active[g]) continue;
                    const auto& cols = G[g].columns;
                    Eigen::VectorXd u(static_cast<Eigen::Index>(cols.size()));
                    for (std::size_t c = 0; c < cols.size(); ++c)
                        u(static_cast<Eigen::Index>(c)) =
                            major[g] * beta(cols[c]) +
                            VX.col(cols[c]).dot(st.r) / static_cast<double>(n);
                    const double unorm = u.norm();
                    const double thresh = l1 * gw[g];
                    Eigen::VectorXd nb;
                    if (unorm <= thresh) {
                        nb = Eigen::VectorXd::Zero(u.size());
                    } else {
                        nb = u * ((1.0 - thresh / unorm) / (major[g] + l2 * gw[g]));
                    }
                    double change = 0.0;
                    for (std::size_t c = 0; c < cols.size(); ++c) {
                        const double d = nb(static_cast<Eigen::Index>(c)) - beta(cols[c]);
                        if (d != 0.0) {
                            st.eta += d * std_x.X.col(cols[c]);
                            st.r -= d * std_x.X.col(cols[c]);
                            beta(cols[c]) = nb(static_cast<Eigen::Index>(c));
                        }
                        change = std::max(change, std::abs(d));
                    }
                    max_change = std::max(max_change, change);
                }
                if (max_change < config.tol) {
                    // reactivate everything once; stop when nothing moves
                    bool all_active = std::all_of(active.begin(), active.end(),
                                                  [](bool a) { return a; });
                    if (all_active) break;
                    std::fill(active.begin(), active.end(), true);
                } else {
                    for (std::size_t g = 0; g < G.size(); ++g) {
                        bool nonzero = false;
                        for (int c : G[g].columns)
                            if (beta(c) != 0.0) nonzero = true;
                        active[g] = nonzero;
                    }
                }
                if (cycle + 1 == config.max_cycles) {
                    std::ostringstream msg;
                    msg << "fit_path: no convergence at lambda index " << l;
                    throw std::runtime_error(msg.str());
                }
            }

            const double obj =
                objective(y, w, st.eta, p, lambda, config.alpha_mix, G, gw, beta);
            if (p == 0.0) {
                converged = true;
            } else if (obj > prev_obj + 1e-9 * std::max(1.0, std::abs(prev_obj))) {
                // reject a reweighting step that worsened the true objective
                beta = beta_snapshot;
                st.eta = eta_snapshot;
                intercept = intercept_snapshot;
                converged = true;
            } else if (std::abs(prev_obj - obj) <
                       1e-8 * std::max(1.0, std::abs(prev_obj))) {
                converged = true;
                prev_obj = obj;
            } else {
                prev_obj = obj;
            }
        }

        // de-standardize
        Eigen::VectorXd full = Eigen::VectorXd::Zero(X.cols());
        double b0 = intercept;
        for (std::size_t c = 0; c < std_x.kept.size(); ++c) {
            const int j = std_x.kept[c];
            full(j) = beta(static_cast<Eigen::Index>(c)) / std_x.scale(j);
            b0 -= full(j) * std_x.center(j);
        }
        model.intercepts.push_back(b0);
        model.betas.push_back(full);
    }
    return model;
}

CvResult cross_validate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const std::vector<Group>& groups,
                        const std::vector<double>& alpha_grid,
                        const PenaltyConfig& config, double p, int folds,
                        std::uint64_t seed, const std::vector<std::string>& names) {
    if (folds < 2) throw std::invalid_argument("cross_validate requires folds >= 2");
    if (alpha_grid.empty()) throw std::invalid_argument("cross_validate: empty alpha grid");
    const Eigen::Index n = y.size();

    std::vector<double> labels(y.data(), y.data() + n);
    auto fold_of = stratified_folds(labels, folds, seed);

    // fix the lambda path on the full data per alpha so folds share it
    std::vector<std::vector<double>> paths(alpha_grid.size());
    for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
        PenaltyConfig cfg = config;
        cfg.alpha_mix = alpha_grid[a];
        if (cfg.lambda_path.empty()) {
            Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
            auto std_x = standardize(X, groups, w);
            const double lmax =
                lambda_max(std_x.X, y, std_x.groups, cfg.alpha_mix, p, &w);
            const double lmin = std::max(lmax * cfg.lambda_min_ratio, 1e-300);
            paths[a].resize(cfg.path_length);
            if (cfg.path_length == 1) {
                paths[a][0] = lmax;
            } else {
                const double step = (std::log(lmax) - std::log(lmin)) /
                                    static_cast<double>(cfg.path_length - 1);
                for (std::size_t l = 0; l < cfg.path_length; ++l)
                    paths[a][l] = std::exp(std::log(lmax) - step * static_cast<double>(l));
            }
        } else {
            paths[a] = cfg.lambda_path;
        }
    }

    // out-of-fold squared error and deviance per (alpha, lambda)
    std::vector<std::vector<double>> sse(alpha_grid.size()),
        dev(alpha_grid.size());
    std::vector<std::vector<long>> counts(alpha_grid.size());
    for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
        sse[a].assign(paths[a].size(), 0.0);
        dev[a].assign(paths[a].size(), 0.0);
        counts[a].assign(paths[a].size(), 0);
    }

    struct Cell {
        std::size_t alpha;
        int fold;
    };
    std::vector<Cell> cells;
    for (std::size_t a = 0; a < alpha_grid.size(); ++a)
        for (int f = 0; f < folds; ++f) cells.push_back({a, f});

    std::vector<std::vector<std::vector<double>>> cell_sse(
        cells.size());  // per cell: per lambda sums
    std::vector<std::vector<std::vector<double>>> cell_dev(cells.size());
    std::vector<std::vector<long>> cell_cnt(cells.size());
    std::vector<bool> cell_skipped(cells.size(), false);

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(cells.size()); ++c) {
        const auto [a, f] = cells[c];
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
        if (p != 0.0 && (ytr.array() == 0.0).all()) {
#pragma omp critical
            std::cerr << "cross_validate: fold " << f
                      << " skipped (all-zero training response)\n";
            cell_skipped[c] = true;
            continue;
        }

        PenaltyConfig cfg = config;
        cfg.alpha_mix = alpha_grid[a];
        cfg.lambda_path = paths[a];
        ShrinkModel m = fit_path(Xtr, ytr, groups, cfg, p, names);

        auto& s = cell_sse[c];
        auto& d = cell_dev[c];
        s.assign(1, std::vector<double>(paths[a].size(), 0.0));
        d.assign(1, std::vector<double>(paths[a].size(), 0.0));
        cell_cnt[c].assign(paths[a].size(), 0);
        for (std::size_t l = 0; l < paths[a].size(); ++l) {
            Eigen::VectorXd mu = m.predict(Xte, static_cast<int>(l));
            for (Eigen::Index i = 0; i < yte.size(); ++i) {
                const double e = yte(i) - mu(i);
                s[0][l] += e * e;
                d[0][l] += tweedie::unit_deviance(yte(i),
                                                  p == 0.0 ? std::max(mu(i), 1e-300)
                                                           : mu(i),
                                                  p == 0.0 ? 0.0 : p);
            }
            cell_cnt[c][l] = yte.size();
        }
    }

    for (std::size_t c = 0; c < cells.size(); ++c) {
        if (cell_skipped[c] || cell_cnt[c].empty()) continue;
        const auto a = cells[c].alpha;
        for (std::size_t l = 0; l < paths[a].size(); ++l) {
            sse[a][l] += cell_sse[c][0][l];
            dev[a][l] += cell_dev[c][0][l];
            counts[a][l] += cell_cnt[c][l];
        }
    }

    CvResult result;
    bool any = false;
    double best_rmse = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
        for (std::size_t l = 0; l < paths[a].size(); ++l) {
            if (counts[a][l] == 0) continue;
            any = true;
            CvCell cell;
            cell.lambda = paths[a][l];
            cell.alpha = alpha_grid[a];
            cell.rmse = std::sqrt(sse[a][l] / static_cast<double>(counts[a][l]));
            cell.deviance = dev[a][l] / static_cast<double>(counts[a][l]);
            result.table.push_back(cell);
            const bool better =
                cell.rmse < best_rmse ||
                (cell.rmse == best_rmse &&
                 (cell.lambda > result.lambda_star ||
                  (cell.lambda == result.lambda_star && cell.alpha > result.alpha_star)));
            if (better) {
                best_rmse = cell.rmse;
                result.lambda_star = cell.lambda;
                result.alpha_star = cell.alpha;
                result.lambda_index = static_cast<int>(l);
            }
        }
    }
    if (!any) throw std::runtime_error("cross_validate: all folds skipped");

    PenaltyConfig cfg = config;
    cfg.alpha_mix = result.alpha_star;
    for (std::size_t a = 0; a < alpha_grid.size(); ++a)
        if (alpha_grid[a] == result.alpha_star) cfg.lambda_path = paths[a];
    result.model = fit_path(X, y, groups, cfg, p, names);
    result.model.chosen = result.lambda_index;
    {
        Eigen::VectorXd mu = result.model.predict(X, result.lambda_index);
        double d = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            d += tweedie::unit_deviance(y(i), mu(i), p);
        const auto k_sel = static_cast<double>(
            result.model.selected_groups(result.lambda_index).size());
        result.model.phi = d / std::max(1.0, static_cast<double>(n) - k_sel - 1.0);
    }
    return result;
}

} // namespace agristab::shrink
