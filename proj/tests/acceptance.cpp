// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include "eptest/calib.hpp"
#include "eptest/constructors.hpp"
#include "eptest/procedures.hpp"
#include "eptest/sim.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

using namespace eptest;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail, double seconds) {
    std::printf("%s [%2d] %s: %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++failures;
}

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

double pooled(double a, double b) { return std::sqrt(a * a + b * b); }

bool subset(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

struct Accumulator {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    void add(double x) {
        sum += x;
        sq += x * x;
        ++n;
    }
    MeanSe get() const {
        const double m = sum / static_cast<double>(n);
        const double var = (sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
        return {m, std::sqrt(std::max(var, 0.0) / static_cast<double>(n))};
    }
};

// Ratio of mean powers with a delta-method standard error from the paired
// per-replicate outcomes.
MeanSe power_ratio(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    const double ratio = ma / mb;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double infl = (a[i] - ratio * b[i]) / mb;
        ss += infl * infl;
    }
    return {ratio, std::sqrt(ss / (n - 1) / n)};
}

struct Instance {
    std::vector<double> p, e;
};

Instance random_instance(std::mt19937_64& rng, std::size_t K) {
    std::uniform_real_distribution<double> u;
    Instance in{std::vector<double>(K), std::vector<double>(K)};
    for (std::size_t i = 0; i < K; ++i) {
        const double r = u(rng);
        in.p[i] = r < 0.02 ? 0.0 : r < 0.2 ? std::round(u(rng) * 40) / 800 : std::pow(u(rng), 3);
        const double s = u(rng);
        in.e[i] = s < 0.02 ? 0.0 : s < 0.04 ? kInf : s < 0.15 ? 1.0 : std::exp(8 * u(rng) - 3);
    }
    return in;
}

// Density of sqrt(c) * T_d by integrating the normal scale mixture over the
// chi-square mixing variable.
double mixture_density(double t, double c, double d) {
    const boost::math::chi_squared_distribution<> chi(d);
    auto integrand = [&](double w) {
        const double var = c / w;
        const double normal = std::exp(-0.5 * t * t / var) / std::sqrt(2.0 * std::numbers::pi * var);
        return normal * d * boost::math::pdf(chi, d * w);
    };
    const double head = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, 1.0, 12, 1e-12);
    boost::math::quadrature::exp_sinh<double> es;
    return head + es.integrate([&](double x) { return integrand(1.0 + x); }, 1e-12);
}

constexpr double kAlpha = 0.1;

}  // namespace

int main() {
    std::printf("acceptance suite\n");

    // ---------------------------------------------------------------------
    // 1. e-BH under arbitrary dependence
    {
        Timer tm;
        const std::vector<Scenario> scns{AdversarialScenario{50, kAlpha}};
        CampaignConfig cfg;
        cfg.replicates = 10000;
        cfg.master_seed = 101;
        const auto res = run_campaign(scns, std::vector<Procedure>{Procedure::EBH}, cfg);
        const auto& m = res.row(0, Procedure::EBH).metrics;
        const double bound = kAlpha + 3 * m.se_fdr;
        report(1, "e-BH FDR under arbitrary dependence", m.fdr <= bound,
               "FDR=" + fmt(m.fdr) + " <= " + fmt(bound), tm.seconds());
    }

    // ---------------------------------------------------------------------
    // 2, 6, 7, 8, 12 share one t-test campaign at K = 2000, 500 replicates.
    std::vector<Scenario> ttest_scns;
    for (double xi : {1.5, 2.0, 2.5}) {
        TTestScenario s;
        s.K = 2000;
        s.xi = xi;
        ttest_scns.push_back(s);
    }
    {
        TTestScenario s;
        s.K = 2000;
        s.xi = 2.5;
        s.null_e_scale = 1.5;
        ttest_scns.push_back(s);
    }
    const std::vector<Procedure> ttest_procs{Procedure::PBH, Procedure::EPBH, Procedure::WBHNormalized,
                                             Procedure::EPStorey, Procedure::WStoreyNormalized};
    CampaignConfig ttest_cfg;
    ttest_cfg.replicates = 500;
    ttest_cfg.master_seed = 202;
    Timer ttest_timer;
    const auto ttest = run_campaign(ttest_scns, ttest_procs, ttest_cfg);
    const double ttest_seconds = ttest_timer.seconds();
    const std::size_t kXi25 = 2, kMisspec = 3;

    {
        const auto& m = ttest.row(kXi25, Procedure::EPBH).metrics;
        const double bound = kAlpha * 0.95 + 3 * m.se_fdr;
        report(2, "ep-BH FDR under independence", m.fdr <= bound, "FDR=" + fmt(m.fdr) + " <= " + fmt(bound),
               ttest_seconds);
    }

    // ---------------------------------------------------------------------
    // 3. pe-BH dominated by ep-BH
    {
        Timer tm;
        std::mt19937_64 rng(303);
        const std::vector<Calibrator> cals{Calibrator::sqrt_minus_one(), Calibrator::power(0.05),
                                           Calibrator::power(0.25), Calibrator::power(0.5), Calibrator::power(0.75),
                                           Calibrator::power(0.95)};
        std::size_t violations = 0, checks = 0, pe_rejections = 0;
        for (int t = 0; t < 1000; ++t) {
            const auto in = random_instance(rng, 1 + rng() % 50);
            const auto ep = ep_bh(in.p, in.e, kAlpha);
            for (const auto& h : cals) {
                const auto pe = pe_bh(in.p, in.e, h, kAlpha);
                pe_rejections += pe.rejected.size();
                ++checks;
                if (!subset(pe.rejected, ep.rejected)) ++violations;
            }
        }
        report(3, "pe-BH rejections contained in ep-BH", violations == 0,
               std::to_string(violations) + " violations in " + std::to_string(checks) + " checks (" +
                   std::to_string(pe_rejections) + " pe-BH rejections)",
               tm.seconds());
    }

    // ---------------------------------------------------------------------
    // 4. adaptive e-BH dominates e-BH
    {
        Timer tm;
        std::mt19937_64 rng(404);
        std::size_t violations = 0, strict = 0;
        for (int t = 0; t < 1000; ++t) {
            const auto in = random_instance(rng, 1 + rng() % 50);
            const auto base = e_bh(in.e, kAlpha);
            const auto adaptive = adaptive_e_bh(in.e, kAlpha, EMerging::ArithmeticMean);
            if (!subset(base.rejected, adaptive.rejected)) ++violations;
            if (adaptive.rejected.size() > base.rejected.size()) ++strict;
        }
        report(4, "e-BH rejections contained in adaptive e-BH", violations == 0,
               std::to_string(violations) + " violations in 1000 instances (" + std::to_string(strict) +
                   " strictly larger)",
               tm.seconds());
    }

    // ---------------------------------------------------------------------
    // 5. ep-Bonferroni PFER and FWER on a full null
    {
        Timer tm;
        TTestScenario s;
        s.K = 500;
        s.null_fraction = 1.0;
        CampaignConfig cfg;
        cfg.replicates = 10000;
        cfg.master_seed = 505;
        const auto res = run_campaign(std::vector<Scenario>{s}, std::vector<Procedure>{Procedure::EPBonferroni}, cfg);
        const auto& m = res.row(0, Procedure::EPBonferroni).metrics;
        const double bound = kAlpha + 3 * m.se_pfer;
        report(5, "ep-Bonferroni PFER and FWER", m.pfer <= bound && m.fwer <= m.pfer,
               "PFER=" + fmt(m.pfer) + " <= " + fmt(bound) + ", FWER=" + fmt(m.fwer), tm.seconds());
    }

    // ---------------------------------------------------------------------
    // 6. ep-Storey FDR
    {
        const auto& m = ttest.row(kXi25, Procedure::EPStorey).metrics;
        const double bound = kAlpha + 3 * m.se_fdr;
        report(6, "ep-Storey FDR", m.fdr <= bound, "FDR=" + fmt(m.fdr) + " <= " + fmt(bound), 0.0);
    }

    // ---------------------------------------------------------------------
    // 7. power ordering ep-BH > BH > wBH-normalized
    {
        bool pass = true;
        std::ostringstream detail;
        for (std::size_t s = 0; s < 3; ++s) {
            const auto& ep = ttest.row(s, Procedure::EPBH).metrics;
            const auto& bh = ttest.row(s, Procedure::PBH).metrics;
            const auto& wbh = ttest.row(s, Procedure::WBHNormalized).metrics;
            const double gap1 = ep.power - bh.power, se1 = pooled(ep.se_power, bh.se_power);
            const double gap2 = bh.power - wbh.power, se2 = pooled(bh.se_power, wbh.se_power);
            const bool ok = gap1 > 2 * se1 && gap2 > 2 * se2;
            pass = pass && ok;
            detail << (s ? "; " : "") << "xi=" << std::get<TTestScenario>(ttest_scns[s]).xi << " ep=" << fmt(ep.power)
                   << " bh=" << fmt(bh.power) << " wbh=" << fmt(wbh.power) << " gaps/SE=" << fmt(gap1 / se1) << ","
                   << fmt(gap2 / se2);
        }
        report(7, "power ep-BH > BH > wBH-normalized", pass, detail.str(), 0.0);
    }

    // ---------------------------------------------------------------------
    // 8. Storey adaptivity helps the normalized weighting more
    {
        const auto r_w = power_ratio(ttest.row(kXi25, Procedure::WStoreyNormalized).outcomes.power,
                                     ttest.row(kXi25, Procedure::WBHNormalized).outcomes.power);
        const auto r_ep = power_ratio(ttest.row(kXi25, Procedure::EPStorey).outcomes.power,
                                      ttest.row(kXi25, Procedure::EPBH).outcomes.power);
        const double gap = r_w.mean - r_ep.mean;
        const double se = pooled(r_w.se, r_ep.se);
        report(8, "Storey adaptivity ratio", gap > 2 * se,
               "weighted-Storey/wBH=" + fmt(r_w.mean) + " ep-Storey/ep-BH=" + fmt(r_ep.mean) +
                   " gap/SE=" + fmt(gap / se),
               0.0);
    }

    // ---------------------------------------------------------------------
    // 9. moderated-t e-value validity and closed form
    {
        Timer tm;
        // gamma_k = gamma / v = 1 keeps Var(E) finite (about 0.72)
        const ModeratedTModel m{1.0, 38.0, 3.64, 0.0144, 1.0};
        std::mt19937_64 rng(909);
        std::chi_squared_distribution<double> chi0(m.nu0), chi(m.nu);
        std::normal_distribution<double> z;
        Accumulator acc;
        for (int i = 0; i < 100000; ++i) {
            const double sigma_sq = m.nu0 * m.s0_sq / chi0(rng);
            const double beta_hat = z(rng) * std::sqrt(sigma_sq * m.v);
            const double s_sq = sigma_sq * chi(rng) / m.nu;
            acc.add(moderated_t_evalue(moderated_t(beta_hat, s_sq, m).t_tilde, m).value());
        }
        const auto ms = acc.get();
        const double d = m.nu0 + m.nu;
        const double c = 1.0 + m.gamma / m.v;
        double worst = 0.0;
        for (int i = 0; i <= 240; ++i) {
            const double t = -6.0 + 0.05 * i;
            const double ratio = mixture_density(t, c, d) / mixture_density(t, 1.0, d);
            worst = std::max(worst, std::abs(moderated_t_evalue(t, m).value() - ratio) / ratio);
        }
        const bool pass = std::abs(ms.mean - 1.0) <= 4 * ms.se && worst <= 1e-6;
        report(9, "moderated-t e-value validity", pass,
               "mean=" + fmt(ms.mean) + " (|dev|/SE=" + fmt(std::abs(ms.mean - 1.0) / ms.se) +
                   "), max rel err vs density ratio=" + fmt(worst),
               tm.seconds());
    }

    // ---------------------------------------------------------------------
    // 10. soft-rank validity and P <= 1/E
    {
        Timer tm;
        std::mt19937_64 rng(1010);
        std::normal_distribution<double> z;
        bool pass = true;
        std::ostringstream detail;
        for (double r : {0.0, 0.5, 1.0}) {
            Accumulator acc;
            std::size_t ineq_fail = 0;
            PermutationStatistics s;
            s.r = r;
            s.l_resampled.resize(19);
            for (int i = 0; i < 100000; ++i) {
                s.l0 = z(rng);
                for (auto& l : s.l_resampled) l = z(rng);
                const auto out = soft_rank_evalue(s);
                acc.add(out.e.value());
                if (out.p.value() > 1.0 / out.e.value()) ++ineq_fail;
            }
            const auto ms = acc.get();
            const bool ok = std::abs(ms.mean - 1.0) <= 4 * ms.se && ineq_fail == 0;
            pass = pass && ok;
            detail << (r > 0 ? "; " : "") << "r=" << r << " mean=" << fmt(ms.mean)
                   << " |dev|/SE=" << fmt(std::abs(ms.mean - 1.0) / ms.se) << " P>1/E=" << ineq_fail;
        }
        report(10, "soft-rank validity and P <= 1/E", pass, detail.str(), tm.seconds());
    }

    // ---------------------------------------------------------------------
    // 11. calibrator mass
    {
        Timer tm;
        boost::math::quadrature::tanh_sinh<double> ts;
        double worst = 0.0;
        std::string worst_name;
        for (const auto& h : {Calibrator::sqrt_minus_one(), Calibrator::power(0.05), Calibrator::power(0.25),
                              Calibrator::power(0.5), Calibrator::power(0.75), Calibrator::power(0.95)}) {
            const double eps = 1e-8;
            const double mass = ts.integrate([&](double u) { return h(u); }, eps, 1.0, 1e-14) + h.tail_mass(eps);
            if (std::abs(mass - 1.0) >= worst) {
                worst = std::abs(mass - 1.0);
                worst_name = h.name();
            }
        }
        report(11, "calibrator mass", worst <= 1e-8, "max |mass-1|=" + fmt(worst) + " (" + worst_name + ")",
               tm.seconds());
    }

    // ---------------------------------------------------------------------
    // 12. misspecified null e-values
    {
        const auto& m = ttest.row(kMisspec, Procedure::EPBH).metrics;
        const double bound = 1.5 * kAlpha * 0.95 + 3 * m.se_fdr;
        report(12, "ep-BH FDR with null e-values scaled by 1.5", m.fdr <= bound,
               "FDR=" + fmt(m.fdr) + " <= " + fmt(bound), 0.0);
    }

    // ---------------------------------------------------------------------
    // 13. microarray contrast
    std::vector<Scenario> micro_scns;
    for (double pi_m : {0.0, 1.0}) {
        MicroarrayScenario s;
        s.K = 2000;
        s.xi = 0.6;
        s.pi_M = pi_m;
        micro_scns.push_back(s);
    }
    const std::vector<Procedure> micro_procs{Procedure::PBH, Procedure::EPBH, Procedure::WBHNormalized};
    CampaignConfig micro_cfg;
    micro_cfg.replicates = 100;
    micro_cfg.master_seed = 1313;
    {
        Timer tm;
        const auto res = run_campaign(micro_scns, micro_procs, micro_cfg);
        const auto& ep0 = res.row(0, Procedure::EPBH).metrics;
        const auto& w0 = res.row(0, Procedure::WBHNormalized).metrics;
        const auto& ep1 = res.row(1, Procedure::EPBH).metrics;
        const auto& bh1 = res.row(1, Procedure::PBH).metrics;
        const double d0 = std::abs(ep0.power - w0.power), s0 = pooled(ep0.se_power, w0.se_power);
        const double d1 = ep1.power - bh1.power, s1 = pooled(ep1.se_power, bh1.se_power);
        report(13, "microarray contrast", d0 < 3 * s0 && d1 > 2 * s1,
               "pi_M=0: ep=" + fmt(ep0.power) + " wbh=" + fmt(w0.power) + " |gap|/SE=" + fmt(d0 / s0) +
                   "; pi_M=1: ep=" + fmt(ep1.power) + " bh=" + fmt(bh1.power) + " gap/SE=" + fmt(d1 / s1),
               tm.seconds());
    }

    // ---------------------------------------------------------------------
    // 14. determinism across parallelism
    {
        Timer tm;
        bool pass = true;
        CampaignConfig cfg = micro_cfg;
        cfg.parallelism = 1;
        const auto a = campaign_csv(run_campaign(micro_scns, micro_procs, cfg), kAlpha);
        cfg.parallelism = 3;
        const auto b = campaign_csv(run_campaign(micro_scns, micro_procs, cfg), kAlpha);
        pass = pass && a == b;

        std::vector<Scenario> small(ttest_scns.begin(), ttest_scns.begin() + 1);
        CampaignConfig tcfg = ttest_cfg;
        tcfg.replicates = 100;
        tcfg.parallelism = 1;
        const auto c = campaign_csv(run_campaign(small, ttest_procs, tcfg), kAlpha);
        tcfg.parallelism = 4;
        const auto d = campaign_csv(run_campaign(small, ttest_procs, tcfg), kAlpha);
        pass = pass && c == d;
        report(14, "byte-identical CSV across parallelism", pass,
               std::string("microarray 1 vs 3 workers ") + (a == b ? "identical" : "DIFFER") +
                   ", t-test 1 vs 4 workers " + (c == d ? "identical" : "DIFFER"),
               tm.seconds());
    }

    std::printf("%d of 14 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
