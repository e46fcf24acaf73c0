#pragma once

// Error-function family and the odd/even series phi1, psi1, phi2, psi2 used
// by the Ornstein-Uhlenbeck exit-time formulas.
//
//   phi1(x) = int_0^x e^{t^2} dt                           (odd)
//   psi1(x) = 2 int_0^x e^{t^2} int_0^t e^{-u^2} du dt     (even)
//   phi2(x) = 2 int_0^x e^{t2^2} int_0^t2 e^{-u2^2} phi1(u2) du2 dt2       (odd)
//   psi2(x) = 4 int_0^x e^{t2^2} int_0^t2 e^{-u2^2} int_0^u2 e^{t1^2}
//                 int_0^t1 e^{-u1^2} du1 dt1 du2 dt2                     (even)
//
// All four are evaluated from their Maclaurin series. Every series has terms
// of a single sign for a given x, so there is no cancellation; the only
// concern is overflow of e^{x^2}, hence the domain bound.

#include <cmath>
#include <concepts>
#include <numbers>
#include <sstream>
#include <string_view>
#include <utility>

#include "ou_statarb/errors.hpp"

namespace ou_statarb::specialfn {

struct SeriesConfig {
    double rel_tol = 1e-14;
    int max_terms = 300;
    double domain_bound = 8.0;

    void validate() const {
        if (!(rel_tol > 0.0 && rel_tol < 1e-6))
            throw DomainError("SeriesConfig: rel_tol must lie in (0, 1e-6)");
        if (max_terms < 50) throw DomainError("SeriesConfig: max_terms must be >= 50");
        if (!(domain_bound > 0.0)) throw DomainError("SeriesConfig: domain_bound must be positive");
    }
};

namespace detail {

/// Neumaier compensated accumulator.
template <std::floating_point Real>
class CompensatedSum {
public:
    void add(Real v) {
        const Real t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    [[nodiscard]] Real value() const { return sum_ + comp_; }

private:
    Real sum_{0};
    Real comp_{0};
};

template <std::floating_point Real>
void check_domain(std::string_view name, Real x, const SeriesConfig& cfg) {
    if (!(std::abs(x) <= static_cast<Real>(cfg.domain_bound))) {
        std::ostringstream os;
        os << name << ": |x| = " << std::abs(x) << " exceeds domain bound " << cfg.domain_bound;
        throw DomainError(os.str());
    }
}

[[noreturn]] inline void throw_no_convergence(std::string_view name, double x, int terms) {
    std::ostringstream os;
    os << name << "(" << x << "): series did not converge within " << terms << " terms";
    throw ConvergenceError(os.str());
}

// Sums sum_n base_n * weight_n where base_{n+1} = base_n * ratio(n) and the
// weights are supplied per index. Stops once a term is negligible relative to
// the partial sum.
template <std::floating_point Real, typename Ratio, typename Weight>
Real positive_series(std::string_view name, Real x, Real base0, Ratio ratio, Weight weight,
                     const SeriesConfig& cfg) {
    if (base0 == Real(0)) return Real(0);
    CompensatedSum<Real> acc;
    Real base = base0;
    for (int n = 0; n < cfg.max_terms; ++n) {
        const Real term = base * weight(n);
        acc.add(term);
        if (std::abs(term) <= static_cast<Real>(cfg.rel_tol) * std::abs(acc.value())) return acc.value();
        base *= ratio(n);
    }
    throw_no_convergence(name, static_cast<double>(x), cfg.max_terms);
}

}  // namespace detail

template <std::floating_point Real>
Real erf(Real x, const SeriesConfig& cfg = {}) {
    detail::check_domain("erf", x, cfg);
    return std::erf(x);
}

/// Imaginary error function, (2/sqrt(pi)) int_0^x e^{t^2} dt, from its
/// Maclaurin series sum x^{2n+1} / (n! (2n+1)). The Dawson-type confluent
/// form alternates and loses everything to cancellation near the domain
/// bound, so it is not used.
template <std::floating_point Real>
Real erfi(Real x, const SeriesConfig& cfg = {}) {
    detail::check_domain("erfi", x, cfg);
    const Real x2 = x * x;
    const Real s = detail::positive_series<Real>(
        "erfi", x, x, [x2](int n) { return x2 / Real(n + 1); },
        [](int n) { return Real(1) / Real(2 * n + 1); }, cfg);
    return Real(2) / std::sqrt(std::numbers::pi_v<Real>) * s;
}

/// Erfid(x, y) = Erfi(x/sqrt2) - Erfi(y/sqrt2) = sqrt(2/pi) int_y^x e^{t^2/2} dt.
template <std::floating_point Real>
Real erfid(Real x, Real y, const SeriesConfig& cfg = {}) {
    // the bound applies to the erfi arguments x/sqrt2 and y/sqrt2
    if (x == y) return Real(0);
    const Real r2 = std::numbers::sqrt2_v<Real>;
    return erfi(x / r2, cfg) - erfi(y / r2, cfg);
}

/// sum x^{2n+1} / (n! (2n+1))
template <std::floating_point Real>
Real phi1(Real x, const SeriesConfig& cfg = {}) {
    detail::check_domain("phi1", x, cfg);
    const Real x2 = x * x;
    return detail::positive_series<Real>(
        "phi1", x, x, [x2](int n) { return x2 / Real(n + 1); }, [](int n) { return Real(1) / Real(2 * n + 1); },
        cfg);
}

/// sum 2^n x^{2n+2} / ((2n+1)!! (n+1))
template <std::floating_point Real>
Real psi1(Real x, const SeriesConfig& cfg = {}) {
    detail::check_domain("psi1", x, cfg);
    const Real x2 = x * x;
    return detail::positive_series<Real>(
        "psi1", x, x2, [x2](int n) { return Real(2) * x2 / Real(2 * n + 3); },
        [](int n) { return Real(1) / Real(n + 1); }, cfg);
}

/// sum x^{2n+3} / ((n+1)! (2n+3)) * sum_{k<=n} 1/(2k+1)
template <std::floating_point Real>
Real phi2(Real x, const SeriesConfig& cfg = {}) {
    detail::check_domain("phi2", x, cfg);
    const Real x2 = x * x;
    // The inner sum is carried along with the outer index.
    Real harmonic_odd = 0;
    return detail::positive_series<Real>(
        "phi2", x, x * x2, [x2](int n) { return x2 / Real(n + 2); },
        [&harmonic_odd](int n) {
            harmonic_odd += Real(1) / Real(2 * n + 1);
            return harmonic_odd / Real(2 * n + 3);
        },
        cfg);
}

/// sum 2^n x^{2n+4} / ((2n+3)!! (n+2)) * sum_{k<=n} 1/(k+1)
template <std::floating_point Real>
Real psi2(Real x, const SeriesConfig& cfg = {}) {
    detail::check_domain("psi2", x, cfg);
    const Real x2 = x * x;
    Real harmonic = 0;
    return detail::positive_series<Real>(
        "psi2", x, x2 * x2 / Real(3), [x2](int n) { return Real(2) * x2 / Real(2 * n + 5); },
        [&harmonic](int n) {
            harmonic += Real(1) / Real(n + 1);
            return harmonic / Real(n + 2);
        },
        cfg);
}

/// (chi_1(z), chi_2(z)) rebuilt from the odd/even parts. Test hook.
template <std::floating_point Real>
std::pair<Real, Real> chi_decomposition_check(Real z, const SeriesConfig& cfg = {}) {
    const Real sqrt_pi = std::sqrt(std::numbers::pi_v<Real>);
    const Real p1 = phi1(z, cfg);
    const Real chi1 = sqrt_pi * p1 + psi1(z, cfg);
    const Real chi2 = sqrt_pi * (phi2(z, cfg) - std::numbers::ln2_v<Real> * p1) + psi2(z, cfg);
    return {chi1, chi2};
}

}  // namespace ou_statarb::specialfn
