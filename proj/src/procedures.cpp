#include "eptest/procedures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace eptest {

namespace {

void check_same_length(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw LengthMismatch(a.size(), b.size());
}

void check_tau(double tau) {
    if (!(tau > 0.0 && tau < 1.0))
        throw BadParameter("tau must lie in (0, 1), got " + std::to_string(tau));
}

void check_weights(std::span<const double> w) {
    for (std::size_t i = 0; i < w.size(); ++i)
        if (std::isnan(w[i]) || w[i] < 0.0)
            throw MalformedValue(std::to_string(i), "weight must be nonnegative");
}

// Step-up on arbitrary nonnegative statistics q (smaller is more significant).
// Returns the rejected indices in ascending order and k*.
RejectionResult step_up(std::span<const double> q, double alpha_eff) {
    const std::size_t K = q.size();
    RejectionResult res;
    if (K == 0) return res;

    const auto order = order_ascending(q);
    const double Kd = static_cast<double>(K);
    std::size_t k_star = 0;
    for (std::size_t k = K; k >= 1; --k) {
        if (Kd * q[order[k - 1]] / static_cast<double>(k) <= alpha_eff) {
            k_star = k;
            break;
        }
    }
    res.threshold_index = k_star;
    if (k_star == 0) return res;

    const double threshold = q[order[k_star - 1]];
    for (std::size_t i = 0; i < K; ++i)
        if (q[i] <= threshold) res.rejected.push_back(i);
    return res;
}

std::vector<double> reciprocals(std::span<const double> e) {
    std::vector<double> q(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (e[i] == 0.0)
            q[i] = kInf;
        else if (std::isinf(e[i]))
            q[i] = 0.0;
        else
            q[i] = 1.0 / e[i];
    }
    return q;
}

std::vector<double> weighted_quotients(std::span<const double> p, std::span<const double> w) {
    std::vector<double> q(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        q[i] = std::min(detail::quotient_uncapped(p[i], w[i]), 1.0);
    return q;
}

}  // namespace

RejectionResult p_bh(std::span<const double> p, double alpha, bool by_correction) {
    check_alpha(alpha);
    check_pvalues(p);
    const double alpha_eff = by_correction ? alpha / harmonic_number(p.size()) : alpha;
    auto res = step_up(p, alpha_eff);
    res.adjusted.assign(p.begin(), p.end());
    return res;
}

RejectionResult e_bh(std::span<const double> e, double alpha) {
    check_alpha(alpha);
    check_evalues(e);
    const auto q = reciprocals(e);
    auto res = step_up(q, alpha);
    res.adjusted.assign(e.begin(), e.end());
    return res;
}

RejectionResult weighted_p_bh(std::span<const double> p, std::span<const double> w, double alpha) {
    check_alpha(alpha);
    check_same_length(p, w);
    check_pvalues(p);
    check_weights(w);
    auto q = weighted_quotients(p, w);
    auto res = step_up(q, alpha);
    res.adjusted = std::move(q);
    return res;
}

std::vector<double> normalized_weights(std::span<const double> e) {
    check_evalues(e);
    const std::size_t K = e.size();
    std::vector<double> w(K, 0.0);
    if (K == 0) return w;

    const auto n_inf = static_cast<std::size_t>(
        std::count_if(e.begin(), e.end(), [](double v) { return std::isinf(v); }));
    if (n_inf > 0) {
        for (std::size_t i = 0; i < K; ++i)
            if (std::isinf(e[i])) w[i] = static_cast<double>(K) / static_cast<double>(n_inf);
        return w;
    }
    const double total = std::accumulate(e.begin(), e.end(), 0.0);
    if (total == 0.0) return w;
    for (std::size_t i = 0; i < K; ++i) w[i] = static_cast<double>(K) * e[i] / total;
    return w;
}

RejectionResult wbh_normalized(std::span<const double> p, std::span<const double> e, double alpha) {
    check_same_length(p, e);
    const auto w = normalized_weights(e);
    return weighted_p_bh(p, w, alpha);
}

RejectionResult ep_bh(std::span<const double> p, std::span<const double> e, double alpha) {
    check_evalues(e);
    return weighted_p_bh(p, e, alpha);
}

RejectionResult pe_bh(std::span<const double> p, std::span<const double> e, const Calibrator& h,
                      double alpha) {
    check_same_length(p, e);
    check_pvalues(p);
    check_evalues(e);
    std::vector<double> e_star(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) e_star[i] = detail::product(h(p[i]), e[i]);
    return e_bh(e_star, alpha);
}

double storey_pi0(std::span<const double> p, double tau) {
    check_tau(tau);
    if (p.empty()) throw EmptyInput();
    const auto above = std::count_if(p.begin(), p.end(), [tau](double v) { return v > tau; });
    return (1.0 + static_cast<double>(above)) / (static_cast<double>(p.size()) * (1.0 - tau));
}

RejectionResult weighted_storey(std::span<const double> p, std::span<const double> w, double alpha,
                                double tau) {
    check_tau(tau);
    check_same_length(p, w);
    check_pvalues(p);
    check_weights(w);
    if (p.empty()) throw EmptyInput();

    const double w_max = *std::max_element(w.begin(), w.end());
    double mass_above = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > tau) mass_above += w[i];
    const double pi0 = (w_max + mass_above) / (static_cast<double>(p.size()) * (1.0 - tau));

    // all-zero weights leave nothing to reweight
    std::vector<double> adaptive_w(p.size(), 0.0);
    if (w_max > 0.0)
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] <= tau) adaptive_w[i] = w[i] / pi0;
    return weighted_p_bh(p, adaptive_w, alpha);
}

RejectionResult storey_bh(std::span<const double> p, double alpha, double tau) {
    const std::vector<double> ones(p.size(), 1.0);
    return weighted_storey(p, ones, alpha, tau);
}

RejectionResult ep_storey(std::span<const double> p, std::span<const double> e, double alpha,
                          double tau) {
    check_same_length(p, e);
    check_pvalues(p);
    check_evalues(e);
    const double pi0 = storey_pi0(p, tau);
    std::vector<double> w(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] <= tau) w[i] = e[i] / pi0;
    return weighted_p_bh(p, w, alpha);
}

RejectionResult ep_bonferroni(std::span<const double> p, std::span<const double> e, double alpha) {
    check_alpha(alpha);
    check_same_length(p, e);
    check_pvalues(p);
    check_evalues(e);

    RejectionResult res;
    const double cutoff = alpha / static_cast<double>(p.size());
    res.adjusted.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        res.adjusted[i] = detail::quotient_uncapped(p[i], e[i]);
        if (res.adjusted[i] <= cutoff) res.rejected.push_back(i);
    }
    res.threshold_index = res.rejected.size();
    return res;
}

double merge_mean(std::span<const double> e) {
    if (e.empty()) throw EmptyInput();
    return std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
}

double merge_simes(std::span<const double> e) {
    if (e.empty()) throw EmptyInput();
    std::vector<double> sorted(e.begin(), e.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double K = static_cast<double>(e.size());
    double best = 0.0;
    for (std::size_t k = 1; k <= sorted.size(); ++k)
        best = std::max(best, static_cast<double>(k) * sorted[k - 1] / K);
    return best;
}

RejectionResult adaptive_e_bh(std::span<const double> e, double alpha, EMerging merging) {
    check_alpha(alpha);
    check_evalues(e);
    if (e.empty()) throw EmptyInput();

    const std::size_t K = e.size();
    if (K == 1) {
        auto res = e_bh(e, alpha);
        res.warnings.emplace_back("adaptive e-BH needs K >= 2; fell back to plain e-BH");
        return res;
    }

    const double merged = merging == EMerging::ArithmeticMean ? merge_mean(e) : merge_simes(e);
    if (merged < 1.0 / alpha) {
        RejectionResult res;
        res.adjusted.assign(e.begin(), e.end());
        return res;
    }
    const double Kd = static_cast<double>(K);
    const double alpha_prime = Kd * alpha / (Kd - 1.0);
    // alpha' may reach or exceed 1 for small K; the step-up itself is still
    // well defined there, so bypass the (0, 1) check of e_bh.
    const auto q = reciprocals(e);
    auto res = step_up(q, alpha_prime);
    res.adjusted.assign(e.begin(), e.end());
    return res;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

namespace {

struct Entry {
    Procedure proc;
    std::string_view name;
    bool p;
    bool e;
};

constexpr std::array<Entry, 11> kRegistry{{
    {Procedure::PBH, "p-bh", true, false},
    {Procedure::PBHBY, "p-bh-by", true, false},
    {Procedure::EBH, "e-bh", false, true},
    {Procedure::WBHNormalized, "wbh-normalized", true, true},
    {Procedure::EPBH, "ep-bh", true, true},
    {Procedure::PEBH, "pe-bh", true, true},
    {Procedure::EPStorey, "ep-storey", true, true},
    {Procedure::EPBonferroni, "ep-bonferroni", true, true},
    {Procedure::AdaptiveEBH, "adaptive-e-bh", false, true},
    {Procedure::StoreyBH, "storey-bh", true, false},
    {Procedure::WStoreyNormalized, "wstorey-normalized", true, true},
}};

constexpr std::array<Procedure, kRegistry.size()> kAll = [] {
    std::array<Procedure, kRegistry.size()> a{};
    for (std::size_t i = 0; i < kRegistry.size(); ++i) a[i] = kRegistry[i].proc;
    return a;
}();

const Entry& entry(Procedure proc) {
    for (const auto& en : kRegistry)
        if (en.proc == proc) return en;
    throw BadParameter("unregistered procedure");
}

}  // namespace

std::optional<Procedure> parse_procedure(std::string_view name) {
    for (const auto& en : kRegistry)
        if (en.name == name) return en.proc;
    return std::nullopt;
}

std::string_view procedure_name(Procedure proc) { return entry(proc).name; }
std::span<const Procedure> all_procedures() { return kAll; }
bool uses_pvalues(Procedure proc) { return entry(proc).p; }
bool uses_evalues(Procedure proc) { return entry(proc).e; }

RejectionResult run_procedure(Procedure proc, std::span<const double> p, std::span<const double> e,
                              const ProcedureConfig& cfg) {
    switch (proc) {
        case Procedure::PBH:
            return p_bh(p, cfg.alpha, cfg.by_correction);
        case Procedure::PBHBY:
            return p_bh(p, cfg.alpha, true);
        case Procedure::EBH:
            return e_bh(e, cfg.alpha);
        case Procedure::WBHNormalized:
            return wbh_normalized(p, e, cfg.alpha);
        case Procedure::EPBH:
            return ep_bh(p, e, cfg.alpha);
        case Procedure::PEBH:
            return pe_bh(p, e, cfg.calibrator, cfg.alpha);
        case Procedure::EPStorey:
            return ep_storey(p, e, cfg.alpha, cfg.tau);
        case Procedure::EPBonferroni:
            return ep_bonferroni(p, e, cfg.alpha);
        case Procedure::AdaptiveEBH:
            return adaptive_e_bh(e, cfg.alpha, cfg.merging);
        case Procedure::StoreyBH:
            return storey_bh(p, cfg.alpha, cfg.tau);
        case Procedure::WStoreyNormalized: {
            check_same_length(p, e);
            const auto w = normalized_weights(e);
            return weighted_storey(p, w, cfg.alpha, cfg.tau);
        }
    }
    throw BadParameter("unregistered procedure");
}

}  // namespace eptest
