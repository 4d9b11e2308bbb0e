#include "agristab/tweedie.hpp"

#include "agristab/panel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace agristab::tweedie {

namespace {

constexpr double kEtaClamp = 250.0;

Eigen::VectorXd clamp_exp(const Eigen::VectorXd& eta) {
    Eigen::VectorXd mu(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        mu(i) = std::exp(std::clamp(eta(i), -kEtaClamp, kEtaClamp));
    return mu;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd A(X.rows(), X.cols() + 1);
    A.col(0).setOnes();
    if (X.cols() > 0) A.rightCols(X.cols()) = X;
    return A;
}

std::vector<std::string> default_names(Eigen::Index k) {
    std::vector<std::string> names;
    names.reserve(k + 1);
    names.emplace_back("(intercept)");
    for (Eigen::Index j = 0; j < k; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

} // namespace

Eigen::VectorXd GlmModel::predict(const Eigen::MatrixXd& X) const {
    if (X.cols() + 1 != beta.size())
        throw std::invalid_argument("glm predict: feature count mismatch");
    return clamp_exp(with_intercept(X) * beta);
}

std::string GlmModel::to_json() const {
    nlohmann::json j;
    nlohmann::json coef = nlohmann::json::object();
    for (Eigen::Index i = 0; i < beta.size(); ++i) coef[names[i]] = beta(i);
    j["coefficients"] = coef;
    j["p"] = p;
    j["phi"] = phi;
    j["deviance"] = deviance;
    j["n_iter"] = iterations;
    return j.dump(2);
}

GlmModel GlmModel::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    GlmModel m;
    m.p = j.at("p").get<double>();
    m.phi = j.at("phi").get<double>();
    m.deviance = j.at("deviance").get<double>();
    m.iterations = j.at("n_iter").get<int>();
    const auto& coef = j.at("coefficients");
    m.beta.resize(static_cast<Eigen::Index>(coef.size()));
    Eigen::Index i = 0;
    for (auto it = coef.begin(); it != coef.end(); ++it, ++i) {
        m.names.push_back(it.key());
        m.beta(i) = it.value().get<double>();
    }
    // intercept leads regardless of JSON key order
    for (std::size_t k = 0; k < m.names.size(); ++k)
        if (m.names[k] == "(intercept)" && k != 0) {
            std::swap(m.names[0], m.names[k]);
            std::swap(m.beta(0), m.beta(static_cast<Eigen::Index>(k)));
        }
    return m;
}

GlmModel fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double p,
                 const std::vector<std::string>& names,
                 const Eigen::VectorXd* weights, const GlmOptions& options) {
    const Eigen::Index n = y.size();
    if (X.rows() != 0 && X.rows() != n)
        throw std::invalid_argument("glm: X rows do not match y");
    if ((y.array() < 0.0).any()) throw std::invalid_argument("glm: y must be >= 0");

    Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
    const double wsum = w.sum();
    if (!(wsum > 0.0)) throw std::invalid_argument("glm: weights sum to zero");
    const double ybar = w.dot(y) / wsum;
    if (!(ybar > 0.0)) throw std::invalid_argument("glm: mean response must be positive");

    const Eigen::MatrixXd A = with_intercept(X.rows() == 0 ? Eigen::MatrixXd(n, 0) : X);
    const Eigen::Index k = A.cols();

    // rank check, naming the dependent columns
    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        qr.setThreshold(1e-10);
        if (qr.rank() < k) {
            const auto& perm = qr.colsPermutation().indices();
            std::ostringstream msg;
            msg << "glm: rank-deficient design; dependent columns:";
            auto nm = names.size() == static_cast<std::size_t>(k)
                          ? names
                          : default_names(k - 1);
            for (Eigen::Index j = qr.rank(); j < k; ++j) msg << ' ' << nm[perm(j)];
            throw std::runtime_error(msg.str());
        }
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    beta(0) = std::log(ybar);
    Eigen::VectorXd eta = A * beta;
    Eigen::VectorXd mu = clamp_exp(eta);
    double dev = total_deviance(y, mu, p, &w);
    const double null_dev = dev;
    // a saturated fit leaves the deviance jittering at the noise floor
    const double abs_tol = 1e-10 * std::max(1.0, null_dev);

    int iter = 0;
    std::vector<double> trace = {dev};
    bool converged = false;
    for (iter = 1; iter <= options.max_iters; ++iter) {
        Eigen::VectorXd irls_w(n), z(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double wi = std::max(w(i) * std::pow(mu(i), 2.0 - p), 1e-300);
            irls_w(i) = wi;
            z(i) = eta(i) + (y(i) - mu(i)) / mu(i);
        }
        Eigen::MatrixXd AtWA = A.transpose() * irls_w.asDiagonal() * A;
        Eigen::VectorXd AtWz = A.transpose() * (irls_w.asDiagonal() * z);
        Eigen::VectorXd beta_new = AtWA.ldlt().solve(AtWz);

        // step-halving on deviance increase
        double step = 1.0;
        Eigen::VectorXd candidate;
        double dev_new = 0.0;
        for (int half = 0; half < 40; ++half) {
            candidate = beta + step * (beta_new - beta);
            eta = A * candidate;
            mu = clamp_exp(eta);
            dev_new = total_deviance(y, mu, p, &w);
            if (std::isfinite(dev_new) && dev_new <= dev * (1.0 + 1e-12) + 1e-12) break;
            step *= 0.5;
        }
        beta = candidate;
        trace.push_back(dev_new);
        const double change = std::abs(dev - dev_new);
        const double rel = change / std::max(std::abs(dev), 1e-10);
        dev = dev_new;
        if (rel < options.rel_tol || change < abs_tol) {
            converged = true;
            break;
        }
    }
    if (!converged && iter > options.max_iters && options.throw_on_nonconvergence) {
        std::ostringstream msg;
        msg << "glm: no convergence in " << options.max_iters
            << " iterations; deviance trace:";
        for (std::size_t t = std::max<std::size_t>(trace.size(), 6) - 6; t < trace.size(); ++t)
            msg << ' ' << trace[t];
        throw std::runtime_error(msg.str());
    }

    GlmModel model;
    model.names = names.size() == static_cast<std::size_t>(k) ? names : default_names(k - 1);
    model.beta = beta;
    model.p = p;
    model.deviance = dev;
    model.null_deviance = null_dev;
    model.iterations = iter;
    const double dof = static_cast<double>(n - k);
    model.phi = dof > 0.0 ? dev / dof : 1.0;
    return model;
}

Eigen::VectorXd cooks_distance(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const GlmModel& model) {
    const Eigen::Index n = y.size();
    const Eigen::MatrixXd A = with_intercept(X.rows() == 0 ? Eigen::MatrixXd(n, 0) : X);
    const Eigen::Index k = A.cols();
    Eigen::VectorXd mu = model.predict(X.rows() == 0 ? Eigen::MatrixXd(n, 0) : X);
    Eigen::VectorXd irls_w(n);
    for (Eigen::Index i = 0; i < n; ++i)
        irls_w(i) = std::pow(mu(i), 2.0 - model.p);

    Eigen::MatrixXd AtWA = A.transpose() * irls_w.asDiagonal() * A;
    Eigen::LDLT<Eigen::MatrixXd> solver(AtWA);
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd a = A.row(i).transpose();
        const double h = std::min(0.999, irls_w(i) * a.dot(solver.solve(a)));
        const double vmu = variance_function(mu(i), model.p);
        const double r2 = (y(i) - mu(i)) * (y(i) - mu(i)) / (model.phi * vmu);
        d(i) = r2 * h / (static_cast<double>(k) * (1.0 - h) * (1.0 - h));
    }
    return d;
}

std::vector<double> default_power_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 49; ++i) grid.push_back(1.0 + 0.02 * i);
    return grid;
}

namespace {

struct ProfilePoint {
    double phi = 1.0;
    double loglik = -std::numeric_limits<double>::infinity();
};

ProfilePoint profile_at(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double p) {
    ProfilePoint out;
    Eigen::VectorXd mu;
    Eigen::Index k = 1;
    if (X.cols() == 0) {
        mu = Eigen::VectorXd::Constant(y.size(), y.mean());
    } else {
        // profile fits feed a smooth likelihood comparison across p; a
        // lighter tolerance changes it far below the between-p differences
        GlmOptions profile_options{1e-6, 60, false};
        GlmModel m = fit_glm(X, y, p, {}, nullptr, profile_options);
        mu = m.predict(X);
        k = X.cols() + 1;
    }
    const double dev = total_deviance(y, mu, p);
    const double dof = std::max<double>(1.0, static_cast<double>(y.size() - k));
    out.phi = std::max(dev / dof, 1e-12);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        TweedieParams params{mu(i), out.phi, p};
        ll += log_density(y(i), params);
    }
    out.loglik = ll;
    return out;
}

} // namespace

PowerEstimate estimate_power(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                             const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("estimate_power: empty grid");
    if ((y.array() < 0.0).any())
        throw std::invalid_argument("estimate_power: y must be >= 0");
    if ((y.array() == 0.0).all())
        throw std::runtime_error("estimate_power: degenerate all-zero response");

    PowerEstimate est;
    est.grid = grid;
    est.grid_log_likelihood.assign(grid.size(), 0.0);

    std::vector<ProfilePoint> points(grid.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t g = 0; g < static_cast<std::ptrdiff_t>(grid.size()); ++g)
        points[g] = profile_at(y, X, grid[g]);
    for (std::size_t g = 0; g < grid.size(); ++g)
        est.grid_log_likelihood[g] = points[g].loglik;

    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (points[g].loglik > points[best].loglik) best = g;

    est.p = grid[best];
    est.phi = points[best].phi;
    est.log_likelihood = points[best].loglik;
    est.at_grid_edge = grid.size() > 1 && (best == 0 || best + 1 == grid.size());

    if (!est.at_grid_edge && grid.size() >= 3) {
        // parabolic vertex through the best point and its neighbours
        const double x0 = grid[best - 1], x1 = grid[best], x2 = grid[best + 1];
        const double f0 = points[best - 1].loglik, f1 = points[best].loglik,
                     f2 = points[best + 1].loglik;
        const double num = (x1 - x0) * (x1 - x0) * (f1 - f2) -
                           (x1 - x2) * (x1 - x2) * (f1 - f0);
        const double den = (x1 - x0) * (f1 - f2) - (x1 - x2) * (f1 - f0);
        if (std::abs(den) > 1e-12) {
            double refined = x1 - 0.5 * num / den;
            refined = std::clamp(refined, x0, x2);
            ProfilePoint at = profile_at(y, X, refined);
            if (at.loglik >= est.log_likelihood) {
                est.p = refined;
                est.phi = at.phi;
                est.log_likelihood = at.loglik;
            }
        }
    }
    return est;
}

TwoStageFit two_stage_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const std::vector<std::string>& names,
                          const std::vector<double>& grid) {
    const Eigen::Index n = y.size();
    TwoStageFit out;

    auto first = estimate_power(y, X, grid);
    out.p_first = first.p;
    GlmModel stage1 = fit_glm(X, y, first.p, names);
    Eigen::VectorXd influence = cooks_distance(X, y, stage1);

    const double cutoff = agristab::cook_cutoff(static_cast<std::size_t>(n),
                                                static_cast<std::size_t>(X.cols()));
    std::vector<std::size_t> flagged;
    for (Eigen::Index i = 0; i < n; ++i)
        if (influence(i) > cutoff) flagged.push_back(static_cast<std::size_t>(i));
    const auto cap = static_cast<std::size_t>(0.05 * static_cast<double>(n));
    if (flagged.size() > cap) {
        std::sort(flagged.begin(), flagged.end(),
                  [&influence](std::size_t a, std::size_t b) {
                      return influence(a) > influence(b);
                  });
        flagged.resize(cap);
    }

    out.outlier_mask.assign(static_cast<std::size_t>(n), false);
    for (auto i : flagged) out.outlier_mask[i] = true;

    const Eigen::Index kept = n - static_cast<Eigen::Index>(flagged.size());
    Eigen::MatrixXd Xk(kept, X.cols());
    Eigen::VectorXd yk(kept);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (out.outlier_mask[static_cast<std::size_t>(i)]) continue;
        if (X.cols() > 0) Xk.row(r) = X.row(i);
        yk(r) = y(i);
        ++r;
    }

    auto second = estimate_power(yk, Xk, grid);
    out.p_final = second.p;
    out.model = fit_glm(Xk, yk, second.p, names);
    return out;
}

} // namespace agristab::tweedie
