#include "eptest/core.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

namespace eptest {

bool RejectionResult::is_rejected(std::size_t i) const {
    return std::binary_search(rejected.begin(), rejected.end(), i);
}

std::vector<bool> RejectionResult::mask(std::size_t K) const {
    std::vector<bool> m(K, false);
    for (auto i : rejected) m.at(i) = true;
    return m;
}

NormalizedInputs validate_inputs(std::span<const HypothesisRecord> records) {
    if (records.empty()) throw EmptyInput();

    NormalizedInputs out;
    out.K = records.size();
    out.p.reserve(out.K);
    out.e.reserve(out.K);

    for (const auto& rec : records) {
        if (!rec.p && !rec.e)
            throw MalformedValue(rec.id, "record has neither a p-value nor an e-value");
        if (rec.p) {
            const double p = *rec.p;
            if (std::isnan(p) || p < 0.0 || p > 1.0)
                throw MalformedValue(rec.id, "p-value must lie in [0, 1]");
            out.p.push_back(p);
        } else {
            out.p.push_back(std::numeric_limits<double>::quiet_NaN());
            out.all_p_present = false;
        }
        if (rec.e) {
            const double e = *rec.e;
            if (std::isnan(e) || e < 0.0)
                throw MalformedValue(rec.id, "e-value must lie in [0, inf]");
            out.e.push_back(e);
        } else {
            out.e.push_back(1.0);
        }
    }
    return out;
}

void check_pvalues(std::span<const double> p) {
    for (std::size_t i = 0; i < p.size(); ++i)
        if (std::isnan(p[i]) || p[i] < 0.0 || p[i] > 1.0)
            throw MalformedValue(std::to_string(i), "p-value must lie in [0, 1]");
}

void check_evalues(std::span<const double> e) {
    for (std::size_t i = 0; i < e.size(); ++i)
        if (std::isnan(e[i]) || e[i] < 0.0)
            throw MalformedValue(std::to_string(i), "e-value must lie in [0, inf]");
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw BadParameter("alpha must lie in (0, 1), got " + std::to_string(alpha));
}

FdpPower fdp_and_power(std::span<const std::size_t> rejected, const std::vector<bool>& is_null) {
    const std::size_t K = is_null.size();
    const auto K0 = static_cast<std::size_t>(std::count(is_null.begin(), is_null.end(), true));

    FdpPower out;
    for (auto i : rejected) {
        if (i >= K) throw LengthMismatch(K, i + 1);
        if (is_null[i]) ++out.false_discoveries;
    }
    out.discoveries = rejected.size();
    if (out.discoveries > 0)
        out.fdp = static_cast<double>(out.false_discoveries) / static_cast<double>(out.discoveries);
    if (K > K0)
        out.power = static_cast<double>(out.discoveries - out.false_discoveries) /
                    static_cast<double>(K - K0);
    return out;
}

std::vector<std::size_t> order_ascending(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    return idx;
}

std::vector<std::size_t> order_descending(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
    return idx;
}

double harmonic_number(std::size_t K) {
    double s = 0.0;
    // summed from the small terms up for accuracy
    for (std::size_t k = K; k >= 1; --k) s += 1.0 / static_cast<double>(k);
    return s;
}

std::string format_real(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (std::isnan(x)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

}  // namespace eptest
