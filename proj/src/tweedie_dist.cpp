#include "agristab/tweedie.hpp"

#include "agristab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace agristab::tweedie {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool legal_power(double p) { return p <= 0.0 || p >= 1.0; }

// log sum of the Dunn-Smyth series W_j for the (1,2) branch, expanded in
// both directions from the dominating index until terms fall below 1e-17
// of the running sum.
double log_series_sum(double y, double phi, double p) {
    const double p1 = p - 1.0, p2 = 2.0 - p;
    const double alpha = p2 / p1;                     // gamma shape per claim
    const double logz = alpha * std::log(y) - alpha * std::log(p1) -
                        (1.0 + alpha) * std::log(phi) - std::log(p2);
    const double jmax = std::max(1.0, std::pow(y, p2) / (phi * p2));

    auto log_term = [&](double j) {
        return j * logz - std::lgamma(1.0 + j) - std::lgamma(alpha * j);
    };

    const double j0 = std::max(1.0, std::round(jmax));
    const double log_peak = log_term(j0);
    double sum = 1.0;  // the j0 term, scaled by exp(-log_peak)
    constexpr double kRelTol = 1e-17;
    constexpr long kMaxTerms = 200000;

    for (long step = 1; step <= kMaxTerms; ++step) {
        const double term = std::exp(log_term(j0 + step) - log_peak);
        sum += term;
        if (term < kRelTol * sum) break;
    }
    for (long step = 1; step <= kMaxTerms; ++step) {
        const double j = j0 - step;
        if (j < 1.0) break;
        const double term = std::exp(log_term(j) - log_peak);
        sum += term;
        if (term < kRelTol * sum) break;
    }
    return log_peak + std::log(sum);
}

double log_density_poisson_lattice(double y, double mu, double phi) {
    // support is the lattice {0, phi, 2 phi, ...}
    const double k = y / phi;
    const double kr = std::round(k);
    if (kr < 0.0 || std::abs(k - kr) > 1e-8 * std::max(1.0, std::abs(k))) return kNegInf;
    const double rate = mu / phi;
    return kr * std::log(rate) - rate - std::lgamma(kr + 1.0);
}

} // namespace

void TweedieParams::validate() const {
    if (!(mu > 0.0)) throw std::invalid_argument("tweedie mu must be positive");
    if (!(phi > 0.0)) throw std::invalid_argument("tweedie phi must be positive");
    if (!legal_power(p))
        throw std::invalid_argument("tweedie power must lie in (-inf,0] u [1,inf)");
}

double variance_function(double mu, double p) {
    if (!(mu > 0.0)) throw std::domain_error("variance function requires mu > 0");
    return std::pow(mu, p);
}

double zero_mass(double mu, double phi, double p) {
    if (!(p > 1.0 && p < 2.0))
        throw std::domain_error("zero mass exists only for p in (1,2)");
    if (!(mu > 0.0 && phi > 0.0)) throw std::domain_error("zero mass requires mu, phi > 0");
    const double lambda = std::pow(mu, 2.0 - p) / (phi * (2.0 - p));
    return std::exp(-lambda);
}

double log_density(double y, const TweedieParams& params) {
    params.validate();
    const double mu = params.mu, phi = params.phi, p = params.p;

    if (p == 0.0) {  // normal
        const double r = y - mu;
        return -0.5 * r * r / phi - 0.5 * std::log(2.0 * M_PI * phi);
    }
    if (p == 1.0) return log_density_poisson_lattice(y, mu, phi);
    if (p == 2.0) {  // gamma, shape 1/phi, scale phi*mu
        if (!(y > 0.0)) return kNegInf;
        const double shape = 1.0 / phi;
        const double scale = phi * mu;
        return (shape - 1.0) * std::log(y) - y / scale - std::lgamma(shape) -
               shape * std::log(scale);
    }
    if (p == 3.0) {  // inverse Gaussian, lambda = 1/phi
        if (!(y > 0.0)) return kNegInf;
        const double lam = 1.0 / phi;
        const double r = y - mu;
        return 0.5 * (std::log(lam) - std::log(2.0 * M_PI) - 3.0 * std::log(y)) -
               lam * r * r / (2.0 * mu * mu * y);
    }
    if (p > 1.0 && p < 2.0) {
        if (y < 0.0) return kNegInf;
        const double p1 = p - 1.0, p2 = 2.0 - p;
        const double kappa_term = std::pow(mu, p2) / (phi * p2);
        if (y == 0.0) return -kappa_term;  // the atom
        const double theta_term = y / (phi * p1 * std::pow(mu, p1));
        return -theta_term - kappa_term - std::log(y) + log_series_sum(y, phi, p);
    }
    throw std::domain_error("density not implemented for this power");
}

double density(double y, const TweedieParams& params) {
    const double ld = log_density(y, params);
    return ld == kNegInf ? 0.0 : std::exp(ld);
}

double unit_deviance(double y, double mu, double p) {
    if (!(mu > 0.0) && p != 0.0)
        throw std::domain_error("unit deviance requires mu > 0");
    if (p == 0.0) {
        const double r = y - mu;
        return r * r;
    }
    if (p == 1.0) {
        const double ylogy = y > 0.0 ? y * std::log(y / mu) : 0.0;
        return 2.0 * (ylogy - (y - mu));
    }
    if (p == 2.0) {
        if (!(y > 0.0)) throw std::domain_error("gamma deviance requires y > 0");
        return 2.0 * ((y - mu) / mu - std::log(y / mu));
    }
    const double p1 = 1.0 - p, p2 = 2.0 - p;
    const double ypow = y > 0.0 ? std::pow(y, p2) : 0.0;
    const double d = 2.0 * (ypow / (p1 * p2) - y * std::pow(mu, p1) / p1 +
                            std::pow(mu, p2) / p2);
    return std::max(0.0, d);
}

double total_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                      double p, const Eigen::VectorXd* weights) {
    if (y.size() != mu.size()) throw std::invalid_argument("deviance length mismatch");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double w = weights ? (*weights)(i) : 1.0;
        sum += w * unit_deviance(y(i), mu(i), p);
    }
    return sum;
}

std::vector<double> sample(const TweedieParams& params, std::size_t n,
                           std::uint64_t seed) {
    params.validate();
    const double mu = params.mu, phi = params.phi, p = params.p;
    std::vector<double> out(n);
    auto rng = make_rng(seed);

    if (p == 0.0) {
        std::normal_distribution<double> dist(mu, std::sqrt(phi));
        for (auto& v : out) v = dist(rng);
        return out;
    }
    if (p == 1.0) {
        std::poisson_distribution<long> dist(mu / phi);
        for (auto& v : out) v = phi * static_cast<double>(dist(rng));
        return out;
    }
    if (p == 2.0) {
        std::gamma_distribution<double> dist(1.0 / phi, phi * mu);
        for (auto& v : out) v = dist(rng);
        return out;
    }
    if (p == 3.0) {
        // Michael-Schucany-Haas inverse Gaussian sampler, lambda = 1/phi
        const double lam = 1.0 / phi;
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (auto& v : out) {
            const double z = normal(rng);
            const double w = z * z;
            const double x = mu + mu * mu * w / (2.0 * lam) -
                             mu / (2.0 * lam) *
                                 std::sqrt(4.0 * mu * lam * w + mu * mu * w * w);
            v = unif(rng) <= mu / (mu + x) ? x : mu * mu / x;
        }
        return out;
    }
    if (p > 1.0 && p < 2.0) {
        const double lambda = std::pow(mu, 2.0 - p) / (phi * (2.0 - p));
        const double shape = (2.0 - p) / (p - 1.0);
        const double scale = phi * (p - 1.0) * std::pow(mu, p - 1.0);
        std::poisson_distribution<long> n_claims(lambda);
        for (auto& v : out) {
            const long k = n_claims(rng);
            if (k == 0) {
                v = 0.0;
                continue;
            }
            std::gamma_distribution<double> claim(shape * static_cast<double>(k), scale);
            v = claim(rng);
        }
        return out;
    }
    throw std::domain_error("sampling not implemented for this power");
}

} // namespace agristab::tweedie
