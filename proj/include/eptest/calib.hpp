#pragma once
// p/e calibrators, the e/p calibrator, and the four p-value/e-value
// combiners (product, quotient, mean, Bonferroni).

#include "eptest/core.hpp"

#include <string>
#include <string_view>

namespace eptest {

// Admissible p-to-e calibrator: a decreasing h on [0, 1] with h(0) = inf
// and unit integral.
//   SqrtMinusOne:  h(p) = p^{-1/2} - 1
//   PowerKappa:    h(p) = kappa * p^{kappa - 1},  kappa in (0, 1)
class Calibrator {
public:
    enum class Family { SqrtMinusOne, PowerKappa };

    static Calibrator sqrt_minus_one() { return Calibrator(Family::SqrtMinusOne, 0.0); }
    static Calibrator power(double kappa);

    Family family() const noexcept { return family_; }
    double kappa() const noexcept { return kappa_; }

    // h(p); +inf at p = 0.
    double operator()(double p) const;

    // Closed-form integral of h over [0, eps].
    double tail_mass(double eps) const;

    // "sqrt" or "kappa:<value>"
    std::string name() const;

    friend bool operator==(const Calibrator&, const Calibrator&) = default;

private:
    Calibrator(Family f, double kappa) : family_(f), kappa_(kappa) {}
    Family family_;
    double kappa_;
};

// Parses "sqrt" or "kappa:<value>"; throws BadParameter otherwise.
Calibrator parse_calibrator(std::string_view spec);

EValue calibrate_p_to_e(const Calibrator& h, PValue p);

// min(1/e, 1); e = inf maps to 0.
PValue calibrate_e_to_p(EValue e);

// h(p) * e with 0 * inf = inf.
EValue combine_product(const Calibrator& h, PValue p, EValue e);

// min(p/e, 1) with p/0 = inf for p > 0 and 0/0 = 0.
PValue combine_quotient(PValue p, EValue e);

// lambda * h(p) + (1 - lambda) * e; throws BadLambda unless lambda in (0, 1).
EValue combine_mean(const Calibrator& h, double lambda, PValue p, EValue e);

// min(2 * min(p, 1/e), 1).
PValue combine_bonferroni(PValue p, EValue e);

// Raw-double kernels shared with the vector procedures.
namespace detail {
double product(double hp, double e) noexcept;
double quotient_uncapped(double p, double e) noexcept;
}  // namespace detail

}  // namespace eptest
