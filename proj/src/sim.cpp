#include "eptest/sim.hpp"

#include "eptest/constructors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace eptest {

namespace {

std::size_t null_count(std::size_t K, double null_fraction) {
    return static_cast<std::size_t>(std::llround(null_fraction * static_cast<double>(K)));
}

void check_fraction(double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) throw BadParameter(std::string(name) + " must lie in [0, 1]");
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenario validation and labels
// ---------------------------------------------------------------------------

void TTestScenario::validate() const {
    if (K < 1) throw BadParameter("ttest: K must be >= 1");
    check_fraction(null_fraction, "ttest: null_fraction");
    if (!std::isfinite(xi)) throw BadParameter("ttest: xi must be finite");
    // The pooled sum of squares is chi-square with 9 df for n = 5 per group;
    // other group sizes are not supported.
    if (n_per_group != 5 || df_ssq != 9)
        throw BadParameter("ttest: only n_per_group = 5 with df_ssq = 9 is supported");
    if (!(ncp >= 0.0) || std::isinf(ncp)) throw BadParameter("ttest: ncp must be finite and >= 0");
    if (!(null_e_scale > 0.0) || std::isinf(null_e_scale))
        throw BadParameter("ttest: null_e_scale must be finite and > 0");
}

std::string TTestScenario::label() const {
    std::ostringstream os;
    os << "ttest;K=" << K << ";null_fraction=" << format_real(null_fraction) << ";xi=" << format_real(xi)
       << ";n_per_group=" << n_per_group << ";df_ssq=" << df_ssq << ";ncp=" << format_real(ncp)
       << ";null_e_scale=" << format_real(null_e_scale);
    return os.str();
}

void MicroarrayScenario::validate() const {
    if (K < 2) throw BadParameter("microarray: K must be >= 2");
    check_fraction(null_fraction, "microarray: null_fraction");
    check_fraction(pi_M, "microarray: pi_M");
    if (!(xi >= 0.0) || std::isinf(xi)) throw BadParameter("microarray: xi must be finite and >= 0");
    if (!(nu0 > 0.0)) throw BadParameter("microarray: nu0 must be > 0");
    if (!(s0_sq > 0.0) || std::isinf(s0_sq)) throw BadParameter("microarray: s0_sq must be > 0");
    if (!(effect_var_ratio > 0.0) || std::isinf(effect_var_ratio))
        throw BadParameter("microarray: effect_var_ratio must be > 0");
    if (n_per_group < 2) throw BadParameter("microarray: n_per_group must be >= 2");
    const double tp = target_power();
    if (!(tp > 0.0 && tp < 1.0)) throw BadParameter("microarray: p-value arm power must lie in (0, 1)");
    check_alpha(calibration_alpha);
}

double MicroarrayScenario::target_power() const { return pvalue_arm_power.value_or(xi); }

std::string MicroarrayScenario::label() const {
    std::ostringstream os;
    os << "microarray;K=" << K << ";null_fraction=" << format_real(null_fraction) << ";xi=" << format_real(xi)
       << ";pi_M=" << format_real(pi_M) << ";nu0=" << format_real(nu0) << ";s0_sq=" << format_real(s0_sq)
       << ";effect_var_ratio=" << format_real(effect_var_ratio) << ";n_per_group=" << n_per_group
       << ";pvalue_arm_power=" << format_real(target_power())
       << ";fix_hyperparameters=" << (fix_hyperparameters ? 1 : 0);
    return os.str();
}

void AdversarialScenario::validate() const {
    if (K < 2) throw BadParameter("adversarial: K must be >= 2");
    if (!(level > 0.0 && level <= 1.0)) throw BadParameter("adversarial: level must lie in (0, 1]");
}

std::string AdversarialScenario::label() const {
    return "adversarial;K=" + std::to_string(K) + ";level=" + format_real(level);
}

std::string scenario_label(const Scenario& scn) {
    return std::visit([](const auto& s) { return s.label(); }, scn);
}

std::string_view scenario_type(const Scenario& scn) {
    switch (scn.index()) {
        case 0:
            return "ttest";
        case 1:
            return "microarray";
        default:
            return "adversarial";
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

ReplicateData generate_ttest_replicate(const TTestScenario& scn, Rng& rng) {
    scn.validate();
    const std::size_t K = scn.K;
    const std::size_t K0 = null_count(K, scn.null_fraction);
    const int n = scn.n_per_group;
    const double nd = static_cast<double>(n);
    const boost::math::students_t_distribution<> t_dist(2.0 * nd - 2.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    ReplicateData out;
    out.p.resize(K);
    out.e.resize(K);
    out.is_null.assign(K, false);

    std::vector<double> x(n), y(n);
    for (std::size_t k = 0; k < K; ++k) {
        const bool is_null = k < K0;
        out.is_null[k] = is_null;
        const double mu_x = is_null ? 0.0 : scn.xi;
        for (auto& v : y) v = normal(rng);
        for (auto& v : x) v = mu_x + normal(rng);

        const double mean_x = std::accumulate(x.begin(), x.end(), 0.0) / nd;
        const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / nd;
        double ss_x = 0.0, ss_y = 0.0;
        for (double v : x) ss_x += (v - mean_x) * (v - mean_x);
        for (double v : y) ss_y += (v - mean_y) * (v - mean_y);
        const double var_x = ss_x / (nd - 1.0);
        const double var_y = ss_y / (nd - 1.0);

        const double t = std::sqrt(nd) * (mean_y - mean_x) / std::sqrt(var_x + var_y);
        out.p[k] = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(t_dist, std::fabs(t))));

        const double mean_pooled = 0.5 * (mean_x + mean_y);
        double s = 0.0;
        for (double v : x) s += (v - mean_pooled) * (v - mean_pooled);
        for (double v : y) s += (v - mean_pooled) * (v - mean_pooled);

        double e = chisq_lr_evalue(s, scn.df_ssq, scn.ncp).value();
        if (is_null) e *= scn.null_e_scale;
        out.e[k] = e;
    }
    return out;
}

double asymptotic_bh_power(double shift, double null_fraction, double alpha) {
    const boost::math::normal_distribution<> std_normal;
    const double pi1 = 1.0 - null_fraction;
    if (pi1 <= 0.0) return 0.0;

    auto alt_cdf = [&](double u) {
        const double z = boost::math::quantile(boost::math::complement(std_normal, 0.5 * u));
        return boost::math::cdf(std_normal, shift - z) + boost::math::cdf(std_normal, -shift - z);
    };
    // BH threshold: largest u in (0, alpha] with alpha * G(u) >= u,
    // G(u) = pi0 u + pi1 F1(u).
    auto excess = [&](double u) { return alpha * (null_fraction * u + pi1 * alt_cdf(u)) - u; };

    if (excess(alpha) >= 0.0) return alt_cdf(alpha);
    double hi = alpha;
    double lo = alpha;
    bool found = false;
    for (int i = 0; i < 2000; ++i) {
        lo = hi * 0.95;
        if (lo < 1e-300) break;
        if (excess(lo) >= 0.0) {
            found = true;
            break;
        }
        hi = lo;
    }
    if (!found) return 0.0;
    // excess(lo) >= 0 > excess(hi); bisect in log space.
    for (int i = 0; i < 200; ++i) {
        const double mid = std::sqrt(lo * hi);
        if (excess(mid) >= 0.0)
            lo = mid;
        else
            hi = mid;
        if (hi / lo - 1.0 < 1e-14) break;
    }
    return alt_cdf(lo);
}

double calibrate_pvalue_arm_shift(double target_power, double null_fraction, double alpha) {
    if (!(target_power > 0.0 && target_power < 1.0))
        throw BadParameter("target power must lie in (0, 1)");
    check_alpha(alpha);
    if (!(null_fraction < 1.0)) return 0.0;

    double lo = 0.0, hi = 1.0;
    while (asymptotic_bh_power(hi, null_fraction, alpha) < target_power) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e3) throw BadParameter("target power not attainable");
    }
    for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (asymptotic_bh_power(mid, null_fraction, alpha) < target_power)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

ReplicateData generate_microarray_replicate(const MicroarrayScenario& scn, Rng& rng) {
    scn.validate();
    const std::size_t K = scn.K;
    const std::size_t K0 = null_count(K, scn.null_fraction);
    const double v = 2.0 / static_cast<double>(scn.n_per_group);
    const double nu = 2.0 * static_cast<double>(scn.n_per_group) - 2.0;
    const double shift = calibrate_pvalue_arm_shift(scn.target_power(), scn.null_fraction, scn.calibration_alpha);

    std::normal_distribution<double> normal(0.0, 1.0);
    std::chi_squared_distribution<double> chi_prior(scn.nu0);
    std::chi_squared_distribution<double> chi_resid(nu);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    ReplicateData out;
    out.is_null.assign(K, false);
    std::fill(out.is_null.begin(), out.is_null.begin() + static_cast<std::ptrdiff_t>(K0), true);
    std::shuffle(out.is_null.begin(), out.is_null.end(), rng);

    std::vector<double> beta_hat(K), s_sq(K);
    out.p.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double sigma_sq = scn.nu0 * scn.s0_sq / chi_prior(rng);
        double beta = 0.0;
        if (!out.is_null[k] && unif(rng) < scn.pi_M)
            beta = std::sqrt(scn.effect_var_ratio * sigma_sq) * normal(rng);
        beta_hat[k] = beta + std::sqrt(v * sigma_sq) * normal(rng);
        s_sq[k] = sigma_sq * chi_resid(rng) / nu;

        // independent p-value arm
        double z = normal(rng);
        if (!out.is_null[k]) z += (unif(rng) < 0.5 ? -shift : shift);
        out.p[k] = std::min(1.0, std::erfc(std::fabs(z) / std::sqrt(2.0)));
    }

    ModeratedTModel model{v, nu, scn.nu0, scn.s0_sq, scn.effect_var_ratio};
    if (!scn.fix_hyperparameters) {
        const std::vector<double> nu_vec{nu};
        const auto prior = fit_limma_hyperparameters(s_sq, nu_vec);
        model.nu0 = prior.nu0;
        model.s0_sq = prior.s0_sq;
    }

    std::vector<double> t_tilde(K);
    for (std::size_t k = 0; k < K; ++k) t_tilde[k] = moderated_t(beta_hat[k], s_sq[k], model).t_tilde;

    if (!scn.fix_hyperparameters) {
        const std::vector<double> v_vec{v}, nu_vec{nu};
        model.gamma = fit_gamma(t_tilde, v_vec, nu_vec, model.nu0).gamma;
    }

    out.e.resize(K);
    for (std::size_t k = 0; k < K; ++k) out.e[k] = moderated_t_evalue(t_tilde[k], model).value();
    return out;
}

std::vector<double> comonotone_null_evalues(std::span<const double> thresholds, double u) {
    std::vector<double> e(thresholds.size());
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        const double a = thresholds[k];
        if (!(a > 0.0 && a <= 1.0)) throw BadParameter("comonotone thresholds must lie in (0, 1]");
        e[k] = u <= a ? 1.0 / a : 0.0;
    }
    return e;
}

std::vector<double> adversarial_null_evalues(std::size_t K, Rng& rng, double level) {
    if (K < 2) throw BadParameter("adversarial e-values need K >= 2");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    const std::vector<double> thresholds(K, level);
    return comonotone_null_evalues(thresholds, u);
}

ReplicateData generate_adversarial_replicate(const AdversarialScenario& scn, Rng& rng) {
    scn.validate();
    ReplicateData out;
    out.e = adversarial_null_evalues(scn.K, rng, scn.level);
    out.is_null.assign(scn.K, true);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    out.p.resize(scn.K);
    for (auto& p : out.p) p = unif(rng);
    return out;
}

ReplicateData generate_replicate(const Scenario& scn, Rng& rng) {
    return std::visit(
        [&rng](const auto& s) -> ReplicateData {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, TTestScenario>)
                return generate_ttest_replicate(s, rng);
            else if constexpr (std::is_same_v<T, MicroarrayScenario>)
                return generate_microarray_replicate(s, rng);
            else
                return generate_adversarial_replicate(s, rng);
        },
        scn);
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t child_seed(std::uint64_t master, std::uint64_t scenario, std::uint64_t replicate) {
    return splitmix64(splitmix64(splitmix64(master) ^ scenario) ^ replicate);
}

// ---------------------------------------------------------------------------
// Campaigns
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kKsBins = 1u << 16;

double mean_of(const std::vector<double>& x) {
    return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double se_of(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    const double m = mean_of(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

}  // namespace

ErrorMetrics summarize(const ReplicateOutcomes& o) {
    ErrorMetrics m;
    m.replicates = o.fdp.size();
    m.fdr = mean_of(o.fdp);
    m.se_fdr = se_of(o.fdp);
    m.power = mean_of(o.power);
    m.se_power = se_of(o.power);
    std::vector<double> any(o.false_discoveries.size());
    for (std::size_t i = 0; i < any.size(); ++i) any[i] = o.false_discoveries[i] >= 1.0 ? 1.0 : 0.0;
    m.fwer = mean_of(any);
    m.se_fwer = se_of(any);
    m.pfer = mean_of(o.false_discoveries);
    m.se_pfer = se_of(o.false_discoveries);
    return m;
}

const CampaignRow& CampaignResult::row(std::size_t scenario_index, Procedure proc) const {
    for (const auto& r : rows)
        if (r.scenario_index == scenario_index && r.procedure == proc) return r;
    throw BadParameter("no campaign row for scenario " + std::to_string(scenario_index) + " and procedure " +
                       std::string(procedure_name(proc)));
}

CampaignResult run_campaign(std::span<const Scenario> scenarios, std::span<const Procedure> procedures,
                            const CampaignConfig& cfg) {
    if (cfg.replicates == 0) throw BadParameter("campaign needs at least one replicate");
    if (scenarios.empty()) throw BadParameter("campaign needs at least one scenario");
    if (procedures.empty()) throw BadParameter("campaign needs at least one procedure");
    check_alpha(cfg.procedure.alpha);
    for (const auto& s : scenarios) std::visit([](const auto& x) { x.validate(); }, s);

    const auto start = std::chrono::steady_clock::now();
    const std::size_t S = scenarios.size();
    const std::size_t P = procedures.size();
    const std::size_t R = cfg.replicates;
    const std::size_t units = S * R;

    // outcome storage [scenario][procedure]
    std::vector<ReplicateOutcomes> outcomes(S * P);
    for (auto& o : outcomes) {
        o.fdp.assign(R, 0.0);
        o.power.assign(R, 0.0);
        o.false_discoveries.assign(R, 0.0);
    }
    std::vector<double> null_e_means(S * R, 0.0);
    std::vector<unsigned char> has_nulls(S * R, 0);
    std::vector<std::string> errors(units);
    std::atomic<bool> failed{false};
    std::atomic<std::size_t> next{0};

    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.parallelism, units));
    std::vector<std::vector<std::uint64_t>> histograms(workers, std::vector<std::uint64_t>(S * kKsBins, 0));

    auto work = [&](std::size_t worker) {
        auto& hist = histograms[worker];
        for (;;) {
            if (failed.load(std::memory_order_relaxed)) return;
            const std::size_t unit = next.fetch_add(1);
            if (unit >= units) return;
            const std::size_t s = unit / R;
            const std::size_t r = unit % R;
            try {
                Rng rng(child_seed(cfg.master_seed, s, r));
                const auto data = generate_replicate(scenarios[s], rng);

                double e_sum = 0.0;
                std::size_t n_null = 0;
                for (std::size_t k = 0; k < data.is_null.size(); ++k) {
                    if (!data.is_null[k]) continue;
                    ++n_null;
                    e_sum += data.e[k];
                    const auto bin = std::min(kKsBins - 1, static_cast<std::size_t>(data.p[k] * kKsBins));
                    ++hist[s * kKsBins + bin];
                }
                if (n_null > 0) {
                    null_e_means[unit] = e_sum / static_cast<double>(n_null);
                    has_nulls[unit] = 1;
                }

                for (std::size_t j = 0; j < P; ++j) {
                    const auto res = run_procedure(procedures[j], data.p, data.e, cfg.procedure);
                    const auto fp = fdp_and_power(res.rejected, data.is_null);
                    auto& o = outcomes[s * P + j];
                    o.fdp[r] = fp.fdp;
                    o.power[r] = fp.power;
                    o.false_discoveries[r] = static_cast<double>(fp.false_discoveries);
                }
            } catch (const std::exception& ex) {
                errors[unit] = ex.what();
                failed = true;
                return;
            }
        }
    };

    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    }

    for (std::size_t u = 0; u < units; ++u)
        if (!errors[u].empty())
            throw Error("scenario " + std::to_string(u / R) + " replicate " + std::to_string(u % R) + ": " +
                        errors[u]);

    CampaignResult result;
    result.scenarios.assign(scenarios.begin(), scenarios.end());
    result.replicates = R;
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t j = 0; j < P; ++j) {
            CampaignRow row;
            row.scenario_index = s;
            row.procedure = procedures[j];
            row.outcomes = std::move(outcomes[s * P + j]);
            row.metrics = summarize(row.outcomes);
            result.rows.push_back(std::move(row));
        }

        ScenarioAudit audit;
        audit.scenario_index = s;
        std::vector<double> means;
        for (std::size_t r = 0; r < R; ++r)
            if (has_nulls[s * R + r]) means.push_back(null_e_means[s * R + r]);
        audit.null_e_mean = mean_of(means);
        audit.null_e_se = se_of(means);
        audit.e_ok = means.empty() || audit.null_e_mean <= 1.0 + 4.0 * audit.null_e_se;

        std::vector<std::uint64_t> counts(kKsBins, 0);
        for (const auto& h : histograms)
            for (std::size_t b = 0; b < kKsBins; ++b) counts[b] += h[s * kKsBins + b];
        const std::uint64_t n = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
        audit.null_count = n;
        if (n > 0) {
            // Upper bound of sup_u (F_n(u) - u) from the binned counts.
            std::uint64_t cum = 0;
            double d_plus = 0.0;
            for (std::size_t b = 0; b < kKsBins; ++b) {
                cum += counts[b];
                const double left = static_cast<double>(b) / kKsBins;
                d_plus = std::max(d_plus, static_cast<double>(cum) / static_cast<double>(n) - left);
            }
            audit.null_p_ks = d_plus;
            audit.ks_threshold = std::sqrt(std::log(1000.0) / (2.0 * static_cast<double>(n))) + 1.0 / kKsBins;
            audit.p_ok = d_plus <= audit.ks_threshold;
        }
        result.audits.push_back(audit);
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string campaign_csv(const CampaignResult& result, double alpha) {
    std::ostringstream os;
    os << "scenario_index,scenario_type,scenario,K,null_fraction,xi,pi_M,procedure,alpha,replicates,"
          "fdr,se_fdr,power,se_power,fwer,se_fwer,pfer,se_pfer\n";
    for (const auto& row : result.rows) {
        const auto& scn = result.scenarios.at(row.scenario_index);
        std::size_t K = 0;
        double null_fraction = 1.0, xi = 0.0;
        std::string pi_m;
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                K = s.K;
                if constexpr (!std::is_same_v<T, AdversarialScenario>) {
                    null_fraction = s.null_fraction;
                    xi = s.xi;
                }
                if constexpr (std::is_same_v<T, MicroarrayScenario>) pi_m = format_real(s.pi_M);
            },
            scn);
        const auto& m = row.metrics;
        os << row.scenario_index << ',' << scenario_type(scn) << ',' << scenario_label(scn) << ',' << K << ','
           << format_real(null_fraction) << ',' << format_real(xi) << ',' << pi_m << ','
           << procedure_name(row.procedure) << ',' << format_real(alpha) << ',' << m.replicates << ','
           << format_real(m.fdr) << ',' << format_real(m.se_fdr) << ',' << format_real(m.power) << ','
           << format_real(m.se_power) << ',' << format_real(m.fwer) << ',' << format_real(m.se_fwer) << ','
           << format_real(m.pfer) << ',' << format_real(m.se_pfer) << '\n';
    }
    return os.str();
}

}  // namespace eptest
