#pragma once
// Step-up procedures on p-values, e-values, and p/e pairs.
//
// Every procedure returns the statistic it thresholded in
// RejectionResult::adjusted and rejects every hypothesis whose statistic
// clears the achieved threshold, ties included.

#include "eptest/calib.hpp"
#include "eptest/core.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eptest {

enum class EMerging { ArithmeticMean, SimesMax };

struct ProcedureConfig {
    double alpha = 0.1;
    double tau = 0.5;
    Calibrator calibrator = Calibrator::sqrt_minus_one();
    bool by_correction = false;
    EMerging merging = EMerging::ArithmeticMean;
};

// k* = max{k : K q_(k) / k <= alpha_eff}; BY divides alpha by l_K.
RejectionResult p_bh(std::span<const double> p, double alpha, bool by_correction = false);

// k* = max{k : k e_[k] / K >= 1/alpha}; computed as p_bh on 1/e so the two
// agree on every input.
RejectionResult e_bh(std::span<const double> e, double alpha);

// p_bh on min(p_k / w_k, 1) with p/0 = inf for p > 0 and 0/0 = 0.
RejectionResult weighted_p_bh(std::span<const double> p, std::span<const double> w, double alpha);

// w_k = K e_k / sum(e). Infinite e-values share the whole budget.
std::vector<double> normalized_weights(std::span<const double> e);

RejectionResult wbh_normalized(std::span<const double> p, std::span<const double> e, double alpha);

// p_bh on the quotients P_k / E_k; identical to weighted_p_bh(p, e, alpha).
RejectionResult ep_bh(std::span<const double> p, std::span<const double> e, double alpha);

// e_bh on the products h(P_k) E_k.
RejectionResult pe_bh(std::span<const double> p, std::span<const double> e, const Calibrator& h,
                      double alpha);

// (1 + #{p_k > tau}) / (K (1 - tau))
double storey_pi0(std::span<const double> p, double tau);

// Weighted BH with weights 1{p_k <= tau} w_k / pi0_hat where
// pi0_hat = (max(w) + sum w_k 1{p_k > tau}) / (K (1 - tau)). With unit
// weights this is Storey's adaptive BH.
RejectionResult weighted_storey(std::span<const double> p, std::span<const double> w, double alpha,
                                double tau);
RejectionResult storey_bh(std::span<const double> p, double alpha, double tau);

// Weighted BH with weights 1{p_k <= tau} e_k / storey_pi0(p, tau).
RejectionResult ep_storey(std::span<const double> p, std::span<const double> e, double alpha,
                          double tau);

// Rejects exactly {k : p_k / e_k <= alpha / K}.
RejectionResult ep_bonferroni(std::span<const double> p, std::span<const double> e, double alpha);

// e-merging functions
double merge_mean(std::span<const double> e);
double merge_simes(std::span<const double> e);  // max_k k e_[k] / K

// Global test with F(e) >= 1/alpha, then e_bh at K alpha / (K - 1).
// For K = 1 falls back to plain e_bh and records a warning.
RejectionResult adaptive_e_bh(std::span<const double> e, double alpha,
                              EMerging merging = EMerging::ArithmeticMean);

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

enum class Procedure {
    PBH,
    PBHBY,
    EBH,
    WBHNormalized,
    EPBH,
    PEBH,
    EPStorey,
    EPBonferroni,
    AdaptiveEBH,
    StoreyBH,
    WStoreyNormalized,
};

std::optional<Procedure> parse_procedure(std::string_view name);
std::string_view procedure_name(Procedure proc);
std::span<const Procedure> all_procedures();
bool uses_pvalues(Procedure proc);
bool uses_evalues(Procedure proc);

// Dispatch by registry entry. Unused inputs may be empty.
RejectionResult run_procedure(Procedure proc, std::span<const double> p, std::span<const double> e,
                              const ProcedureConfig& cfg);

}  // namespace eptest
