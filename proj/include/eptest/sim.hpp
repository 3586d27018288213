#pragma once
// Scenario generators and the Monte-Carlo campaign runner.

#include "eptest/core.hpp"
#include "eptest/procedures.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace eptest {

using Rng = std::mt19937_64;

// Two-sample t-test per hypothesis (n = 5 per group); the p-value is the
// equal-variance t-test p-value and the e-value is the chi-square likelihood
// ratio of the pooled sum of squares.
struct TTestScenario {
    std::size_t K = 20000;
    double null_fraction = 0.95;
    double xi = 2.0;
    int n_per_group = 5;
    int df_ssq = 9;
    double ncp = 10.0;
    double null_e_scale = 1.0;  // > 1 inflates null e-values (misspecification)

    void validate() const;
    std::string label() const;
};

// Replicated microarray summaries under the scaled-inverse-chi-square
// variance prior supply the e-values; an independent normal-means arm
// supplies the p-values.
struct MicroarrayScenario {
    std::size_t K = 10000;
    double null_fraction = 0.8;
    double xi = 0.6;
    double pi_M = 1.0;
    double nu0 = 3.64;
    double s0_sq = 0.0144;
    double effect_var_ratio = 0.5;
    int n_per_group = 20;
    // Marginal power of unweighted BH the p-value arm is calibrated to;
    // defaults to xi.
    std::optional<double> pvalue_arm_power;
    double calibration_alpha = 0.1;
    bool fix_hyperparameters = false;  // use the true (nu0, s0^2, gamma)

    void validate() const;
    std::string label() const;
    double target_power() const;
};

// All-null e-values driven by one latent uniform (comonotone coordinates).
struct AdversarialScenario {
    std::size_t K = 50;
    double level = 0.1;

    void validate() const;
    std::string label() const;
};

using Scenario = std::variant<TTestScenario, MicroarrayScenario, AdversarialScenario>;

std::string scenario_label(const Scenario& scn);
std::string_view scenario_type(const Scenario& scn);

struct ReplicateData {
    std::vector<double> p;
    std::vector<double> e;
    std::vector<bool> is_null;
};

ReplicateData generate_ttest_replicate(const TTestScenario& scn, Rng& rng);
ReplicateData generate_microarray_replicate(const MicroarrayScenario& scn, Rng& rng);
ReplicateData generate_adversarial_replicate(const AdversarialScenario& scn, Rng& rng);
ReplicateData generate_replicate(const Scenario& scn, Rng& rng);

// e_k = (1 / a_k) 1{u <= a_k}: each coordinate has mean exactly 1 when u is
// uniform, and all coordinates are functions of the same u.
std::vector<double> comonotone_null_evalues(std::span<const double> thresholds, double u);

// Draws u and applies comonotone_null_evalues with every threshold equal to
// level, the configuration at which e-BH attains FDR = level.
std::vector<double> adversarial_null_evalues(std::size_t K, Rng& rng, double level = 0.1);

// Shift of the normal-means p-value arm at which the large-K limit of
// unweighted BH at level alpha has the requested power.
double calibrate_pvalue_arm_shift(double target_power, double null_fraction, double alpha);

// Large-K power of unweighted BH when non-null z-scores are N(+-shift, 1).
double asymptotic_bh_power(double shift, double null_fraction, double alpha);

// splitmix64-based child seed for (master, scenario, replicate).
std::uint64_t child_seed(std::uint64_t master, std::uint64_t scenario, std::uint64_t replicate);

// ---------------------------------------------------------------------------
// Campaigns
// ---------------------------------------------------------------------------

struct CampaignConfig {
    std::size_t replicates = 500;
    std::size_t parallelism = 1;
    std::uint64_t master_seed = 1;
    ProcedureConfig procedure;
};

// Per-replicate outcomes kept for paired comparisons.
struct ReplicateOutcomes {
    std::vector<double> fdp;
    std::vector<double> power;
    std::vector<double> false_discoveries;
};

struct CampaignRow {
    std::size_t scenario_index = 0;
    Procedure procedure = Procedure::PBH;
    ErrorMetrics metrics;
    ReplicateOutcomes outcomes;
};

struct ScenarioAudit {
    std::size_t scenario_index = 0;
    double null_e_mean = 0.0;  // mean over replicates of the per-replicate null e mean
    double null_e_se = 0.0;
    double null_p_ks = 0.0;    // one-sided KS statistic sup_u (F_n(u) - u)
    double ks_threshold = 0.0;
    std::size_t null_count = 0;
    bool e_ok = true;
    bool p_ok = true;
};

struct CampaignResult {
    std::vector<Scenario> scenarios;
    std::vector<CampaignRow> rows;
    std::vector<ScenarioAudit> audits;
    std::size_t replicates = 0;
    double wall_seconds = 0.0;

    const CampaignRow& row(std::size_t scenario_index, Procedure proc) const;
};

// Runs every procedure on every replicate of every scenario. Replicate r of
// scenario s draws from Rng(child_seed(master, s, r)), and aggregation is
// done in replicate order, so results do not depend on parallelism.
CampaignResult run_campaign(std::span<const Scenario> scenarios, std::span<const Procedure> procedures,
                            const CampaignConfig& cfg);

ErrorMetrics summarize(const ReplicateOutcomes& outcomes);

// One row per (scenario, procedure) with every ErrorMetrics field.
std::string campaign_csv(const CampaignResult& result, double alpha);

}  // namespace eptest
