#include "eptest/constructors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <boost/math/tools/roots.hpp>

namespace eptest {

// ---------------------------------------------------------------------------
// Soft-rank
// ---------------------------------------------------------------------------

SoftRankResult soft_rank_evalue(const PermutationStatistics& stats) {
    const auto& resampled = stats.l_resampled;
    if (resampled.empty()) throw BadParameter("soft-rank e-value needs B >= 1 resampled statistics");
    if (!(stats.r >= 0.0) || std::isinf(stats.r))
        throw BadParameter("soft-rank temperature r must be finite and >= 0");
    if (!std::isfinite(stats.l0)) throw MalformedValue("l0", "statistic must be finite");
    for (std::size_t b = 0; b < resampled.size(); ++b)
        if (!std::isfinite(resampled[b]))
            throw MalformedValue(std::to_string(b + 1), "statistic must be finite");

    const std::size_t n = resampled.size() + 1;  // B + 1
    const double l_min = std::min(stats.l0, *std::min_element(resampled.begin(), resampled.end()));
    const double l_max = std::max(stats.l0, *std::max_element(resampled.begin(), resampled.end()));

    SoftRankResult out;
    if (l_max == l_min) {
        out.degenerate = true;
        return out;  // E = 1, P = 1
    }

    const double r = stats.r;
    const double span = l_max - l_min;
    // R_b up to the common positive factor exp(r L_*) / r, which cancels.
    auto transform = [&](double l) {
        const double d = l - l_min;
        if (r == 0.0) return d;
        if (r * span < 700.0) return std::expm1(r * d);
        return std::exp(r * (d - span)) - std::exp(-r * span);
    };

    std::vector<double> R;
    R.reserve(n);
    R.push_back(transform(stats.l0));
    for (double l : resampled) R.push_back(transform(l));
    const double r0 = R.front();

    // Summing in sorted order makes the result independent of the order of
    // the resampled statistics.
    std::sort(R.begin(), R.end());
    const double total = std::accumulate(R.begin(), R.end(), 0.0);

    std::size_t at_least = 1;  // b = 0
    for (double l : resampled)
        if (l >= stats.l0) ++at_least;

    out.e = EValue(static_cast<double>(n) * r0 / total);
    out.p = PValue(static_cast<double>(at_least) / static_cast<double>(n));
    return out;
}

// ---------------------------------------------------------------------------
// Moderated t
// ---------------------------------------------------------------------------

void ModeratedTModel::validate() const {
    if (!(v > 0.0 && std::isfinite(v))) throw BadParameter("moderated t: v must be > 0");
    if (!(nu > 0.0 && std::isfinite(nu))) throw BadParameter("moderated t: nu must be > 0");
    if (!(nu0 > 0.0)) throw BadParameter("moderated t: nu0 must be > 0");
    if (!(s0_sq > 0.0 && std::isfinite(s0_sq))) throw BadParameter("moderated t: s0_sq must be > 0");
    // gamma = 0 is the "uninformative" sentinel produced by fit_gamma.
    if (!(gamma >= 0.0 && std::isfinite(gamma))) throw BadParameter("moderated t: gamma must be >= 0");
}

ModeratedT moderated_t(double beta_hat, double s_sq, const ModeratedTModel& model) {
    model.validate();
    if (!std::isfinite(beta_hat)) throw MalformedValue("beta_hat", "must be finite");
    if (!(s_sq >= 0.0) || std::isinf(s_sq)) throw MalformedValue("s_sq", "must be finite and >= 0");

    ModeratedT out;
    if (std::isinf(model.nu0)) {
        out.s_tilde_sq = model.s0_sq;
        out.df = kInf;
    } else {
        out.s_tilde_sq = (model.nu0 * model.s0_sq + model.nu * s_sq) / (model.nu0 + model.nu);
        out.df = model.nu0 + model.nu;
    }
    out.t_tilde = beta_hat / (std::sqrt(out.s_tilde_sq) * std::sqrt(model.v));

    const double abs_t = std::fabs(out.t_tilde);
    double p = 0.0;
    if (std::isinf(out.df)) {
        p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<>(), abs_t));
    } else {
        p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<>(out.df), abs_t));
    }
    out.p = PValue(std::min(p, 1.0));
    return out;
}

EValue moderated_t_evalue(double t_tilde, const ModeratedTModel& model) {
    model.validate();
    if (!std::isfinite(t_tilde)) throw MalformedValue("t_tilde", "must be finite");
    if (model.gamma == 0.0) return EValue(1.0);

    const double g = model.gamma / model.v;
    const double t2 = t_tilde * t_tilde;
    double log_e = -0.5 * std::log1p(g);
    if (std::isinf(model.nu0)) {
        log_e += 0.5 * g * t2 / (1.0 + g);
    } else {
        const double d = model.nu0 + model.nu;
        log_e -= 0.5 * (d + 1.0) * std::log1p(-g * t2 / ((1.0 + g) * (d + t2)));
    }
    return EValue(std::exp(log_e));
}

namespace {

double log_t_density(double x, double df) {
    if (std::isinf(df)) return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
    return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * std::numbers::pi) -
           0.5 * (df + 1.0) * std::log1p(x * x / df);
}

double log_add_exp(double a, double b) {
    const double m = std::max(a, b);
    if (std::isinf(m) && m < 0) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double broadcast(std::span<const double> x, std::size_t i) { return x.size() == 1 ? x[0] : x[i]; }

void check_broadcast(std::span<const double> x, std::size_t K, const char* name) {
    if (x.size() != 1 && x.size() != K)
        throw LengthMismatch(K, x.size());
    for (double v : x)
        if (!(v > 0.0) || !std::isfinite(v))
            throw MalformedValue(name, "must be finite and > 0");
}

}  // namespace

double moderated_t_log_density(double t_tilde, double gamma, const ModeratedTModel& model) {
    const double df = std::isinf(model.nu0) ? kInf : model.nu0 + model.nu;
    const double c = 1.0 + gamma / model.v;
    return log_t_density(t_tilde / std::sqrt(c), df) - 0.5 * std::log(c);
}

LimmaPrior fit_limma_hyperparameters(std::span<const double> s_sq, std::span<const double> nu) {
    const std::size_t K = s_sq.size();
    if (K < 2) throw BadParameter("hyperparameter fitting needs at least two variances");
    check_broadcast(nu, K, "nu");
    for (std::size_t i = 0; i < K; ++i)
        if (!(s_sq[i] >= 0.0) || std::isinf(s_sq[i]))
            throw MalformedValue(std::to_string(i), "sample variance must be finite and >= 0");

    // Exact zeros would send log s^2 to -inf; floor them at a small
    // fraction of the median.
    std::vector<double> sorted(s_sq.begin(), s_sq.end());
    std::nth_element(sorted.begin(), sorted.begin() + K / 2, sorted.end());
    const double median = sorted[K / 2];
    const double floor_value = median > 0.0 ? 1e-5 * median : 0.0;

    std::vector<double> z(K);
    double mean_trigamma = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        const double half_nu = 0.5 * broadcast(nu, i);
        const double s2 = std::max(s_sq[i], floor_value);
        if (s2 <= 0.0) {
            LimmaPrior out;
            out.degenerate = true;
            out.s0_sq = 0.0;
            return out;
        }
        z[i] = std::log(s2) - boost::math::digamma(half_nu) + std::log(half_nu);
        mean_trigamma += boost::math::trigamma(half_nu);
    }
    mean_trigamma /= static_cast<double>(K);
    const double z_mean = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(K);
    double ss = 0.0;
    for (double v : z) ss += (v - z_mean) * (v - z_mean);
    const double excess = ss / static_cast<double>(K - 1) - mean_trigamma;

    LimmaPrior out;
    if (!(excess > 0.0)) {
        out.degenerate = true;
        out.nu0 = kInf;
        out.s0_sq = std::exp(z_mean);
        return out;
    }

    // Solve trigamma(x) = excess for x = nu0 / 2; trigamma is decreasing.
    auto f = [excess](double x) { return boost::math::trigamma(x) - excess; };
    double lo = 1e-8;
    double hi = 1.0;
    while (f(hi) > 0.0 && hi < 1e300) {
        lo = hi;
        hi *= 2.0;
    }
    std::uintmax_t max_iter = 200;
    auto bracket = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(52), max_iter);
    const double half_nu0 = 0.5 * (bracket.first + bracket.second);

    out.nu0 = 2.0 * half_nu0;
    out.s0_sq = std::exp(z_mean + boost::math::digamma(half_nu0) - std::log(half_nu0));
    return out;
}

GammaFit fit_gamma(std::span<const double> t_tilde, std::span<const double> v,
                   std::span<const double> nu, double nu0) {
    const std::size_t K = t_tilde.size();
    if (K < 2) throw BadParameter("gamma fitting needs at least two statistics");
    check_broadcast(v, K, "v");
    check_broadcast(nu, K, "nu");
    if (!(nu0 > 0.0)) throw BadParameter("nu0 must be > 0");
    for (std::size_t i = 0; i < K; ++i)
        if (!std::isfinite(t_tilde[i])) throw MalformedValue(std::to_string(i), "t statistic must be finite");

    const double log_half = std::log(0.5);
    std::vector<double> log_null(K);
    double ll_null = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        const ModeratedTModel m{broadcast(v, i), broadcast(nu, i), nu0, 1.0, 0.0};
        log_null[i] = moderated_t_log_density(t_tilde[i], 0.0, m);
        ll_null += log_null[i];
    }

    GammaFit best;
    best.gamma = 0.0;
    best.log_likelihood = ll_null;
    best.uninformative = true;

    const double step = (std::log10(kGammaGridHigh) - std::log10(kGammaGridLow)) / (kGammaGridPoints - 1);
    for (int g = 0; g < kGammaGridPoints; ++g) {
        const double gamma = std::pow(10.0, std::log10(kGammaGridLow) + step * g);
        double ll = 0.0;
        for (std::size_t i = 0; i < K; ++i) {
            const ModeratedTModel m{broadcast(v, i), broadcast(nu, i), nu0, 1.0, gamma};
            const double l_alt = moderated_t_log_density(t_tilde[i], gamma, m);
            ll += log_add_exp(log_half + log_null[i], log_half + l_alt);
        }
        if (ll > best.log_likelihood) {
            best.gamma = gamma;
            best.log_likelihood = ll;
            best.uninformative = false;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Chi-square likelihood ratio
// ---------------------------------------------------------------------------

EValue chisq_lr_evalue(double s, int df, double ncp) {
    if (df < 1) throw BadParameter("chi-square df must be >= 1");
    if (!(ncp >= 0.0) || std::isinf(ncp)) throw BadParameter("noncentrality must be finite and >= 0");
    if (!(s >= 0.0)) throw MalformedValue("s", "statistic must be >= 0");
    if (ncp == 0.0) return EValue(1.0);
    if (std::isinf(s)) return EValue(kInf);

    // ratio = exp(-ncp/2) * sum_j z^j / (j! (a)_j),  a = df/2, z = ncp s / 4
    const double a = 0.5 * df;
    const double z = 0.25 * ncp * s;
    if (z == 0.0) return EValue(std::exp(-0.5 * ncp));

    // Start at the largest term: (j + 1)(a + j) ~ z.
    const double b = a + 1.0;
    const double j_peak = std::max(0.0, std::floor(0.5 * (-b + std::sqrt(b * b - 4.0 * (a - z)))));
    const auto j0 = static_cast<long>(j_peak);
    const double log_t0 = j_peak * std::log(z) - std::lgamma(j_peak + 1.0) - (std::lgamma(a + j_peak) - std::lgamma(a));

    constexpr double kRelTol = 1e-17;
    double sum = 1.0;
    double term = 1.0;
    for (long j = j0;; ++j) {
        term *= z / ((static_cast<double>(j) + 1.0) * (a + static_cast<double>(j)));
        sum += term;
        if (term < kRelTol * sum) break;
    }
    term = 1.0;
    for (long j = j0; j > 0; --j) {
        term *= static_cast<double>(j) * (a + static_cast<double>(j) - 1.0) / z;
        sum += term;
        if (term < kRelTol * sum) break;
    }
    return EValue(std::exp(-0.5 * ncp + log_t0 + std::log(sum)));
}

EValue shift_evalue(EValue e, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw BadLambda(lambda);
    if (lambda == 1.0) return EValue(1.0);
    return EValue(lambda + (1.0 - lambda) * e.value());
}

}  // namespace eptest
