#include <doctest.h>

#include "agristab/rng.hpp"
#include "agristab/shrink.hpp"
#include "agristab/tweedie.hpp"

#include <Eigen/QR>

#include <cmath>
#include <random>
#include <stdexcept>

using namespace agristab;
using namespace agristab::shrink;

namespace {

std::vector<Group> singleton_groups(int k) {
    std::vector<Group> groups;
    for (int j = 0; j < k; ++j) groups.push_back({"x" + std::to_string(j + 1), {j}});
    return groups;
}

// centered columns, X^T X = n I exactly (up to float), unit 1/n-variance
Eigen::MatrixXd orthonormal_design(int n, int k, std::uint64_t seed) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd raw(n, k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) raw(i, j) = normal(rng);
    raw.rowwise() -= raw.colwise().mean();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
    return std::sqrt(static_cast<double>(n)) * Q;
}

} // namespace

TEST_CASE("soft threshold") {
    CHECK(soft_threshold(3.0, 1.0) == doctest::Approx(2.0));
    CHECK(soft_threshold(-0.5, 1.0) == 0.0);
    CHECK(soft_threshold(-3.0, 1.0) == doctest::Approx(-2.0));
    CHECK(soft_threshold(1.25, 0.0) == doctest::Approx(1.25));
    CHECK_THROWS_AS(soft_threshold(1.0, -0.1), std::invalid_argument);
}

TEST_CASE("lambda_max gives the exact null boundary") {
    const int n = 300, k = 12;
    Eigen::MatrixXd X = orthonormal_design(n, k, 3);
    auto rng = make_rng(4);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i)
        y(i) = 5.0 + 0.8 * X(i, 0) - 0.5 * X(i, 1) + normal(rng);

    const auto groups = singleton_groups(k);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    const double lmax = lambda_max(X, y, groups, 1.0, 0.0, &w);

    PenaltyConfig cfg;
    cfg.lambda_path = {lmax * 1.01, lmax, lmax * 0.99};
    const auto model = fit_path(X, y, groups, cfg, 0.0);
    CHECK(model.betas[0].cwiseAbs().maxCoeff() == 0.0);  // above the boundary
    CHECK(model.betas[1].cwiseAbs().maxCoeff() == 0.0);  // at the boundary
    CHECK(model.betas[2].cwiseAbs().maxCoeff() > 0.0);   // just below

    // an uncorrelated response needs a much smaller boundary than a signal one
    Eigen::VectorXd noise(n);
    for (int i = 0; i < n; ++i) noise(i) = 5.0 + normal(rng);
    CHECK(lambda_max(X, noise, groups, 1.0, 0.0, &w) < 0.5 * lmax);

    CHECK_THROWS_AS(lambda_max(X, y, groups, 0.0, 0.0, &w), std::domain_error);
}

TEST_CASE("orthonormal gaussian lasso matches the soft-threshold closed form") {
    const int n = 400, k = 10;
    Eigen::MatrixXd X = orthonormal_design(n, k, 7);
    auto rng = make_rng(8);
    std::normal_distribution<double> normal(0.0, 0.5);
    Eigen::VectorXd beta_true(k);
    beta_true << 1.2, -0.8, 0.5, 0.0, 0.0, 0.3, -0.2, 0.0, 0.05, -0.6;
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = 2.0 + X.row(i).dot(beta_true) + normal(rng);

    const Eigen::VectorXd beta_ols = X.transpose() * (y - Eigen::VectorXd::Constant(n, y.mean())) /
                                     static_cast<double>(n);
    const auto groups = singleton_groups(k);
    PenaltyConfig cfg;
    cfg.tol = 1e-12;
    for (double lambda : {0.6, 0.25, 0.08, 0.01}) {
        cfg.lambda_path = {lambda};
        const auto model = fit_path(X, y, groups, cfg, 0.0);
        for (int j = 0; j < k; ++j)
            CHECK(model.betas[0](j) ==
                  doctest::Approx(soft_threshold(beta_ols(j), lambda)).epsilon(1e-8));
    }
}

TEST_CASE("grouped categorical blocks enter and leave together along the path") {
    const int n = 500;
    auto rng = make_rng(9);
    std::uniform_int_distribution<int> level(0, 2);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, 5);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const int l = level(rng);
        X(i, l) = 1.0;  // 3-level one-hot block
        X(i, 3) = normal(rng);
        X(i, 4) = normal(rng);
        const double mu = std::exp(0.5 + 0.5 * (l == 2 ? 1.0 : 0.0) + 0.3 * X(i, 3));
        y(i) = tweedie::sample({mu, 0.8, 1.5}, 1, 100 + static_cast<std::uint64_t>(i))[0];
    }
    std::vector<Group> groups = {{"cat", {0, 1, 2}}, {"a", {3}}, {"b", {4}}};
    PenaltyConfig cfg;
    cfg.path_length = 40;
    const auto model = fit_path(X, y, groups, cfg, 1.5);
    for (std::size_t l = 0; l < model.lambda_path.size(); ++l) {
        const auto& b = model.betas[l];
        const bool any = b(0) != 0.0 || b(1) != 0.0 || b(2) != 0.0;
        const bool all = b(0) != 0.0 && b(1) != 0.0 && b(2) != 0.0;
        CHECK(any == all);
    }
}

TEST_CASE("an effectively unpenalized path point matches the glm fit") {
    const int n = 600, k = 5;
    auto rng = make_rng(10);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd X(n, k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) X(i, j) = normal(rng);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const double mu = std::exp(0.8 + 0.3 * X(i, 0) - 0.2 * X(i, 1) + 0.1 * X(i, 2));
        y(i) = tweedie::sample({mu, 0.6, 1.5}, 1, 500 + static_cast<std::uint64_t>(i))[0];
    }
    const auto glm = tweedie::fit_glm(X, y, 1.5);

    PenaltyConfig cfg;
    cfg.tol = 1e-10;
    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    const double lmax = lambda_max(X, y, singleton_groups(k), 1.0, 1.5, &w);
    cfg.lambda_path = {lmax, lmax * 1e-2, lmax * 1e-9};
    const auto model = fit_path(X, y, singleton_groups(k), cfg, 1.5);
    CHECK(model.intercepts[2] == doctest::Approx(glm.beta(0)).epsilon(1e-5));
    for (int j = 0; j < k; ++j)
        CHECK(std::abs(model.betas[2](j) - glm.beta(j + 1)) < 1e-5);
}

TEST_CASE("standardization is an internal detail: affine feature maps do not change predictions") {
    const int n = 250, k = 4;
    auto rng = make_rng(12);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd X(n, k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) X(i, j) = normal(rng);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const double mu = std::exp(0.4 + 0.5 * X(i, 0));
        y(i) = tweedie::sample({mu, 1.0, 1.6}, 1, 700 + static_cast<std::uint64_t>(i))[0];
    }
    Eigen::MatrixXd X2 = X;
    Eigen::VectorXd scale(k), shift(k);
    scale << 3.0, 0.05, 10.0, 1.7;
    shift << 100.0, -4.0, 0.5, 33.0;
    for (int j = 0; j < k; ++j)
        X2.col(j) = scale(j) * X.col(j) + Eigen::VectorXd::Constant(n, shift(j));

    PenaltyConfig cfg;
    cfg.path_length = 20;
    const auto a = fit_path(X, y, singleton_groups(k), cfg, 1.6);
    const auto b = fit_path(X2, y, singleton_groups(k), cfg, 1.6);
    for (std::size_t l = 0; l < a.lambda_path.size(); l += 5) {
        const auto mu_a = a.predict(X, static_cast<int>(l));
        const auto mu_b = b.predict(X2, static_cast<int>(l));
        for (int i = 0; i < n; i += 17)
            CHECK(mu_a(i) == doctest::Approx(mu_b(i)).epsilon(1e-10));
    }
}

TEST_CASE("constant columns are dropped with a warning and zero coefficient") {
    const int n = 100;
    Eigen::MatrixXd X(n, 3);
    auto rng = make_rng(14);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = normal(rng);
        X(i, 1) = 7.0;  // constant
        X(i, 2) = normal(rng);
    }
    Eigen::VectorXd y = (X.col(0).array() * 0.5 + 2.0).matrix();
    PenaltyConfig cfg;
    cfg.path_length = 5;
    const auto model = fit_path(X, y, singleton_groups(3), cfg, 0.0);
    for (const auto& b : model.betas) CHECK(b(1) == 0.0);
}

TEST_CASE("cross_validate: pure noise keeps lambda near the top of the path") {
    const int n = 200, k = 20;
    int near_null = 0;
    const int runs = 50;
    for (int run = 0; run < runs; ++run) {
        auto rng = make_rng(3000 + run);
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::MatrixXd X(n, k);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j) X(i, j) = normal(rng);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y(i) = 5.0 + normal(rng);
        PenaltyConfig cfg;
        cfg.path_length = 50;
        const auto cv = cross_validate(X, y, singleton_groups(k), {1.0}, cfg, 0.0, 5,
                                       9000 + run);
        if (cv.lambda_index < 5) ++near_null;  // top decile of a 50-point path
    }
    CHECK(near_null >= 45);
}

TEST_CASE("cross_validate: strong sparse signal keeps its support") {
    const int n = 300, k = 50;
    int recovered = 0;
    const int runs = 20;
    for (int run = 0; run < runs; ++run) {
        auto rng = make_rng(500 + run);
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::MatrixXd X(n, k);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j) X(i, j) = normal(rng);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i)
            y(i) = 2.0 * X(i, 0) - 1.5 * X(i, 1) + 1.8 * X(i, 2) + normal(rng);
        PenaltyConfig cfg;
        cfg.path_length = 50;
        const auto cv = cross_validate(X, y, singleton_groups(k), {1.0}, cfg, 0.0, 5,
                                       700 + run);
        const auto selected = cv.model.selected_groups(cv.model.chosen);
        const bool has_all = std::find(selected.begin(), selected.end(), 0) != selected.end() &&
                             std::find(selected.begin(), selected.end(), 1) != selected.end() &&
                             std::find(selected.begin(), selected.end(), 2) != selected.end();
        if (has_all) ++recovered;
    }
    CHECK(recovered >= 18);
}

TEST_CASE("cross_validate: single alpha grid returns that alpha and reruns identically") {
    const int n = 150, k = 8;
    auto rng = make_rng(16);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd X(n, k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) X(i, j) = normal(rng);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const double mu = std::exp(0.2 + 0.4 * X(i, 0));
        y(i) = tweedie::sample({mu, 1.0, 1.5}, 1, 40 + static_cast<std::uint64_t>(i))[0];
    }
    PenaltyConfig cfg;
    cfg.path_length = 30;
    const auto a = cross_validate(X, y, singleton_groups(k), {0.35}, cfg, 1.5, 4, 77);
    CHECK(a.alpha_star == doctest::Approx(0.35));
    const auto b = cross_validate(X, y, singleton_groups(k), {0.35}, cfg, 1.5, 4, 77);
    CHECK(a.lambda_star == b.lambda_star);
    CHECK(a.lambda_index == b.lambda_index);
    REQUIRE(a.table.size() == b.table.size());
    for (std::size_t i = 0; i < a.table.size(); ++i)
        CHECK(a.table[i].rmse == b.table[i].rmse);
}

TEST_CASE("objective decreases along the path solutions at fixed lambda") {
    // deviance + penalty at the returned solution never exceeds the
    // null-model objective at the same lambda
    const int n = 200, k = 6;
    auto rng = make_rng(18);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd X(n, k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) X(i, j) = normal(rng);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const double mu = std::exp(0.6 + 0.5 * X(i, 0));
        y(i) = tweedie::sample({mu, 0.8, 1.5}, 1, 60 + static_cast<std::uint64_t>(i))[0];
    }
    PenaltyConfig cfg;
    cfg.path_length = 25;
    const auto model = fit_path(X, y, singleton_groups(k), cfg, 1.5);

    const double ybar = y.mean();
    const double null_dev =
        tweedie::total_deviance(y, Eigen::VectorXd::Constant(n, ybar), 1.5);
    for (std::size_t l = 0; l < model.lambda_path.size(); ++l) {
        const auto mu = model.predict(X, static_cast<int>(l));
        double dev = tweedie::total_deviance(y, mu, 1.5);
        double pen = 0.0;
        for (int j = 0; j < k; ++j) pen += std::abs(model.betas[l](j));
        // compare on the standardized scale is not possible post hoc, so use
        // the weaker but implementation-independent bound against the null
        CHECK(dev / (2.0 * n) <= null_dev / (2.0 * n) + 1e-9);
        (void)pen;
    }
}
