#pragma once
// Domain types, validation, order statistics and error-rate accounting
// shared by every procedure in the toolkit.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eptest {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyInput : public Error {
public:
    EmptyInput() : Error("empty input: at least one hypothesis is required") {}
};

// Raised with the identifier (record id or index) of the offending value.
class MalformedValue : public Error {
public:
    MalformedValue(std::string id, const std::string& what)
        : Error("malformed value for '" + id + "': " + what), id_(std::move(id)) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class LengthMismatch : public Error {
public:
    LengthMismatch(std::size_t expected, std::size_t got)
        : Error("length mismatch: expected " + std::to_string(expected) + ", got " +
                std::to_string(got)) {}
};

class BadParameter : public Error {
public:
    using Error::Error;
};

class BadLambda : public BadParameter {
public:
    explicit BadLambda(double lambda)
        : BadParameter("lambda out of range: " + std::to_string(lambda)) {}
};

// ---------------------------------------------------------------------------
// Scalar value types
// ---------------------------------------------------------------------------

// A realized p-value in [0, 1].
class PValue {
public:
    explicit PValue(double v) : v_(v) {
        if (std::isnan(v) || v < 0.0 || v > 1.0)
            throw MalformedValue("p", "p-value must lie in [0, 1], got " + std::to_string(v));
    }
    double value() const noexcept { return v_; }
    friend bool operator==(PValue, PValue) = default;

private:
    double v_;
};

// A realized e-value in [0, +inf]. Infinity is a legitimate value.
class EValue {
public:
    explicit EValue(double v) : v_(v) {
        if (std::isnan(v) || v < 0.0)
            throw MalformedValue("e", "e-value must lie in [0, inf], got " + std::to_string(v));
    }
    double value() const noexcept { return v_; }
    friend bool operator==(EValue, EValue) = default;

private:
    double v_;
};

// ---------------------------------------------------------------------------
// Records and results
// ---------------------------------------------------------------------------

struct HypothesisRecord {
    std::string id;
    std::optional<double> p;
    std::optional<double> e;
    std::optional<bool> is_null;  // simulation ground truth
};

struct NormalizedInputs {
    std::vector<double> p;  // NaN where the record had no p-value
    std::vector<double> e;  // missing e-values replaced by 1
    std::size_t K = 0;
    bool all_p_present = true;
};

struct RejectionResult {
    std::vector<std::size_t> rejected;  // ascending 0-based indices
    std::size_t threshold_index = 0;    // k* (0 means no rejections)
    std::vector<double> adjusted;       // statistic the decision was made on
    std::vector<std::string> warnings;

    bool is_rejected(std::size_t i) const;
    std::vector<bool> mask(std::size_t K) const;
};

struct ErrorMetrics {
    double fdr = 0.0;
    double power = 0.0;
    double fwer = 0.0;
    double pfer = 0.0;
    double se_fdr = 0.0;
    double se_power = 0.0;
    double se_fwer = 0.0;
    double se_pfer = 0.0;
    std::size_t replicates = 0;
};

struct FdpPower {
    double fdp = 0.0;
    double power = 0.0;
    std::size_t false_discoveries = 0;
    std::size_t discoveries = 0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Checks every record and returns dense vectors in input order. Missing
// e-values become 1; missing p-values are recorded as NaN and flagged in
// all_p_present so that p-consuming callers can refuse them.
NormalizedInputs validate_inputs(std::span<const HypothesisRecord> records);

// Validates raw vectors; throws MalformedValue naming the index.
void check_pvalues(std::span<const double> p);
void check_evalues(std::span<const double> e);
void check_alpha(double alpha);

// FDP = F/R and power = (R - F)/(K - K0), both with 0/0 = 0.
// is_null[i] is true for true null hypotheses.
FdpPower fdp_and_power(std::span<const std::size_t> rejected, const std::vector<bool>& is_null);

// Stable argsorts: ascending (p-values) and descending (e-values).
std::vector<std::size_t> order_ascending(std::span<const double> x);
std::vector<std::size_t> order_descending(std::span<const double> x);

// Harmonic number l_K = sum_{k=1}^K 1/k.
double harmonic_number(std::size_t K);

// Locale-independent shortest-exact formatting with 17 significant digits;
// infinities print as "inf".
std::string format_real(double x);

}  // namespace eptest
