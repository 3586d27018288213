#pragma once
// Building e-values from data: soft-rank permutation e-values, moderated-t
// e-values for replicated microarray summaries, chi-square likelihood
// ratios, and the shift amendment.

#include "eptest/core.hpp"

#include <span>
#include <vector>

namespace eptest {

// ---------------------------------------------------------------------------
// Soft-rank permutation e-value
// ---------------------------------------------------------------------------

struct PermutationStatistics {
    double l0 = 0.0;                  // statistic on the original data
    std::vector<double> l_resampled;  // B statistics exchangeable with l0 under the null
    double r = 0.0;                   // soft-rank temperature, r >= 0
};

struct SoftRankResult {
    EValue e{1.0};
    PValue p{1.0};
    bool degenerate = false;  // all statistics equal
};

// E = (B+1) R_0 / sum_b R_b with R_b = (exp(r L_b) - exp(r L_*)) / r
// (R_b = L_b - L_* at r = 0), and the rank p-value
// P = #{b in 0..B : L_b >= L_0} / (B+1). Always P <= 1/E.
SoftRankResult soft_rank_evalue(const PermutationStatistics& stats);

// ---------------------------------------------------------------------------
// Moderated t (scaled-inverse-chi-square variance prior)
// ---------------------------------------------------------------------------

struct ModeratedTModel {
    double v = 1.0;       // design variance factor v_k
    double nu = 1.0;      // residual degrees of freedom nu_k
    double nu0 = 1.0;     // prior degrees of freedom; +inf means no heterogeneity
    double s0_sq = 1.0;   // prior scale
    double gamma = 1.0;   // alternative prior variance ratio

    void validate() const;  // throws BadParameter
};

struct ModeratedT {
    double t_tilde = 0.0;
    PValue p{1.0};
    double s_tilde_sq = 0.0;
    double df = 0.0;  // nu0 + nu (inf when nu0 is inf)
};

// s~^2 = (nu0 s0^2 + nu s^2) / (nu0 + nu), t~ = beta_hat / (s~ sqrt(v)),
// p = 2 (1 - F_{nu0 + nu}(|t~|)). Gamma is not used.
ModeratedT moderated_t(double beta_hat, double s_sq, const ModeratedTModel& model);

// Likelihood-ratio e-value of t~ under beta ~ N(0, gamma sigma^2) against
// beta = 0, with gamma_k = gamma / v.
EValue moderated_t_evalue(double t_tilde, const ModeratedTModel& model);

// Log-density of t~ when beta ~ N(0, gamma sigma^2); gamma = 0 gives the
// null t density with nu0 + nu degrees of freedom.
double moderated_t_log_density(double t_tilde, double gamma, const ModeratedTModel& model);

struct LimmaPrior {
    double nu0 = kInf;
    double s0_sq = 0.0;
    bool degenerate = false;  // no between-gene heterogeneity; nu0 = inf
};

// Moment matching on log s_k^2 with digamma/trigamma. nu may hold one value
// (shared) or one per gene.
LimmaPrior fit_limma_hyperparameters(std::span<const double> s_sq, std::span<const double> nu);

struct GammaFit {
    double gamma = 0.0;
    double log_likelihood = 0.0;
    bool uninformative = true;  // the null-only model won; gamma = 0
};

// Marginal maximum likelihood for the two-group model
// 0.5 p_0(t~) + 0.5 p_gamma(t~) over 41 log-spaced gamma in [1e-3, 1e3].
// v and nu hold one value (shared) or one per gene.
GammaFit fit_gamma(std::span<const double> t_tilde, std::span<const double> v,
                   std::span<const double> nu, double nu0);

inline constexpr double kGammaGridLow = 1e-3;
inline constexpr double kGammaGridHigh = 1e3;
inline constexpr int kGammaGridPoints = 41;

// ---------------------------------------------------------------------------
// Chi-square likelihood ratio and amendments
// ---------------------------------------------------------------------------

// f_{chi2}(s; df, ncp) / f_{chi2}(s; df) evaluated as
// exp(-ncp/2) 0F1(; df/2; ncp s / 4) by series summation (rel. tol 1e-10).
EValue chisq_lr_evalue(double s, int df, double ncp);

// lambda + (1 - lambda) e; throws BadLambda unless lambda in [0, 1].
EValue shift_evalue(EValue e, double lambda);

}  // namespace eptest
