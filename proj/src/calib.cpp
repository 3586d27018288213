#include "eptest/calib.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace eptest {

Calibrator Calibrator::power(double kappa) {
    if (!(kappa > 0.0 && kappa < 1.0))
        throw BadParameter("calibrator kappa must lie in (0, 1), got " + std::to_string(kappa));
    return Calibrator(Family::PowerKappa, kappa);
}

double Calibrator::operator()(double p) const {
    if (p <= 0.0) return kInf;
    switch (family_) {
        case Family::SqrtMinusOne:
            return 1.0 / std::sqrt(p) - 1.0;
        case Family::PowerKappa:
            return kappa_ * std::pow(p, kappa_ - 1.0);
    }
    return kInf;
}

double Calibrator::tail_mass(double eps) const {
    if (eps <= 0.0) return 0.0;
    switch (family_) {
        case Family::SqrtMinusOne:
            return 2.0 * std::sqrt(eps) - eps;
        case Family::PowerKappa:
            return std::pow(eps, kappa_);
    }
    return 0.0;
}

std::string Calibrator::name() const {
    if (family_ == Family::SqrtMinusOne) return "sqrt";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, kappa_);
    return "kappa:" + std::string(buf, res.ptr);
}

Calibrator parse_calibrator(std::string_view spec) {
    if (spec == "sqrt") return Calibrator::sqrt_minus_one();
    constexpr std::string_view prefix = "kappa:";
    if (spec.substr(0, prefix.size()) == prefix) {
        const auto body = spec.substr(prefix.size());
        double kappa = 0.0;
        auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), kappa);
        if (ec != std::errc() || ptr != body.data() + body.size())
            throw BadParameter("cannot parse calibrator parameter in '" + std::string(spec) + "'");
        return Calibrator::power(kappa);
    }
    throw BadParameter("unknown calibrator '" + std::string(spec) + "' (expected sqrt or kappa:<value>)");
}

namespace detail {

double product(double hp, double e) noexcept {
    if ((hp == 0.0 && std::isinf(e)) || (std::isinf(hp) && e == 0.0)) return kInf;
    return hp * e;
}

double quotient_uncapped(double p, double e) noexcept {
    if (p == 0.0) return 0.0;  // includes 0/0
    if (e == 0.0) return kInf;
    return p / e;  // p/inf = 0
}

}  // namespace detail

EValue calibrate_p_to_e(const Calibrator& h, PValue p) { return EValue(h(p.value())); }

PValue calibrate_e_to_p(EValue e) {
    const double v = e.value();
    if (v <= 1.0) return PValue(1.0);
    return PValue(1.0 / v);
}

EValue combine_product(const Calibrator& h, PValue p, EValue e) {
    return EValue(detail::product(h(p.value()), e.value()));
}

PValue combine_quotient(PValue p, EValue e) {
    return PValue(std::min(detail::quotient_uncapped(p.value(), e.value()), 1.0));
}

EValue combine_mean(const Calibrator& h, double lambda, PValue p, EValue e) {
    if (!(lambda > 0.0 && lambda < 1.0)) throw BadLambda(lambda);
    return EValue(lambda * h(p.value()) + (1.0 - lambda) * e.value());
}

PValue combine_bonferroni(PValue p, EValue e) {
    const double inv_e = e.value() == 0.0 ? kInf : 1.0 / e.value();
    return PValue(std::min(2.0 * std::min(p.value(), inv_e), 1.0));
}

}  // namespace eptest
