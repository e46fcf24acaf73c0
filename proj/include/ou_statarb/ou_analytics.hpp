#pragma once

// Closed-form exit statistics of the zero-mean Ornstein-Uhlenbeck process
//
//     dX = -kappa X dt + sigma dB
//
// for the channel (l, u) entered at d. Levels are in units of the stationary
// deviation Sigma = sigma / sqrt(2 kappa), times in units of theta = 1/kappa.
// In those units every formula is parameter free; OuParams converts at the
// boundary.

#include <cmath>
#include <numbers>
#include <sstream>

#include "ou_statarb/errors.hpp"
#include "ou_statarb/special_functions.hpp"

namespace ou_statarb {

struct OuParams {
    double kappa = 1.0;  ///< mean-reversion rate, 1/time
    double eta = 0.0;    ///< stationary mean, log-price
    double sigma = 1.0;  ///< diffusion, log-price / sqrt(time)

    [[nodiscard]] double theta() const { return 1.0 / kappa; }
    [[nodiscard]] double stationary_sd() const { return sigma / std::sqrt(2.0 * kappa); }

    void validate() const {
        if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("OuParams: kappa must be positive");
        if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("OuParams: sigma must be positive");
        if (!std::isfinite(eta)) throw DomainError("OuParams: eta must be finite");
    }
};

/// Stop-loss, entry and exit bands in Sigma units, plus round-trip cost c in
/// log-price units and leverage f.
struct BandSpec {
    double l = -1.96;
    double d = -0.5;
    double u = 0.5;
    double c = 0.0;
    double f = 1.0;
};

struct ExitStats {
    double p_plus = 0.0;
    double p_minus = 0.0;
    double e_tau_plus_exit = 0.0;   ///< E[FET | exit at u]
    double e_tau_minus_exit = 0.0;  ///< E[FET | exit at l]
    double e_fpt_up = 0.0;          ///< E[FPT l -> d]
    double e_fpt_down = 0.0;        ///< E[FPT u -> d]
    double e_trade_length = 0.0;
};

/// Level -> Sigma units.
inline double rescale(const OuParams& params, double level) {
    return (level - params.eta) / params.stationary_sd();
}

/// Sigma units -> level.
inline double unscale(const OuParams& params, double z) { return params.eta + z * params.stationary_sd(); }

namespace ou {

inline void check_channel(double l, double d, double u) {
    if (!(l < u) || !(l <= d) || !(d <= u) || !std::isfinite(l) || !std::isfinite(u)) {
        std::ostringstream os;
        os << "channel ordering violated: need l <= d <= u with l < u, got (" << l << ", " << d << ", " << u
           << ")";
        throw BandError(os.str());
    }
}

namespace detail {

struct SeriesAt {
    double phi1;
    double psi1;
    double phi2;
};

inline SeriesAt series_at(double level, const specialfn::SeriesConfig& cfg) {
    const double a = level / std::numbers::sqrt2;
    return {specialfn::phi1(a, cfg), specialfn::psi1(a, cfg), specialfn::phi2(a, cfg)};
}

// Symmetric kernel of the conditional first-exit moments:
//   K(a, b) = [phi2(a) - phi2(b) - psi1(a) phi1(b) + psi1(b) phi1(a)] / [phi1(a) - phi1(b)]
inline double exit_kernel(const SeriesAt& a, const SeriesAt& b) {
    return (a.phi2 - b.phi2 - a.psi1 * b.phi1 + b.psi1 * a.phi1) / (a.phi1 - b.phi1);
}

inline double upward_fpt(const SeriesAt& from, const SeriesAt& to) {
    constexpr double sqrt_pi = 1.7724538509055160273;
    return sqrt_pi * (to.phi1 - from.phi1) + (to.psi1 - from.psi1);
}

}  // namespace detail

/// P[exit at u before l | start at d].
inline double exit_prob_up(double l, double d, double u, const specialfn::SeriesConfig& cfg = {}) {
    check_channel(l, d, u);
    if (d == u) return 1.0;
    if (d == l) return 0.0;
    return specialfn::erfid(d, l, cfg) / specialfn::erfid(u, l, cfg);
}

inline double exit_prob_down(double l, double d, double u, const specialfn::SeriesConfig& cfg = {}) {
    check_channel(l, d, u);
    if (d == u) return 0.0;
    if (d == l) return 1.0;
    return specialfn::erfid(u, d, cfg) / specialfn::erfid(u, l, cfg);
}

/// E[first exit time | exit through u], start at d.
inline double expected_fet_up(double l, double d, double u, double theta,
                              const specialfn::SeriesConfig& cfg = {}) {
    check_channel(l, d, u);
    if (d == u || d == l) return 0.0;
    const auto sl = detail::series_at(l, cfg);
    const auto sd = detail::series_at(d, cfg);
    const auto su = detail::series_at(u, cfg);
    return theta * (detail::exit_kernel(su, sl) - detail::exit_kernel(sd, sl));
}

/// E[first exit time | exit through l], start at d.
inline double expected_fet_down(double l, double d, double u, double theta,
                                const specialfn::SeriesConfig& cfg = {}) {
    check_channel(l, d, u);
    if (d == u || d == l) return 0.0;
    const auto sl = detail::series_at(l, cfg);
    const auto sd = detail::series_at(d, cfg);
    const auto su = detail::series_at(u, cfg);
    return theta * (detail::exit_kernel(su, sl) - detail::exit_kernel(su, sd));
}

/// E[first passage time from -> to]; upward and downward passages are mirror
/// images of each other.
inline double expected_fpt(double from, double to, double theta, const specialfn::SeriesConfig& cfg = {}) {
    if (from == to) return 0.0;
    if (from < to) return theta * detail::upward_fpt(detail::series_at(from, cfg), detail::series_at(to, cfg));
    return theta * detail::upward_fpt(detail::series_at(-from, cfg), detail::series_at(-to, cfg));
}

/// p+ (E[tau+_e] + E[FPT u->d]) + p- (E[tau-_e] + E[FPT l->d]) in closed form.
inline double expected_trade_length(double l, double d, double u, double theta,
                                    const specialfn::SeriesConfig& cfg = {}) {
    check_channel(l, d, u);
    if (d == u || d == l) return 0.0;
    return theta * std::numbers::pi * specialfn::erfid(d, l, cfg) * specialfn::erfid(u, d, cfg) /
           specialfn::erfid(u, l, cfg);
}

/// Everything at once, sharing the series evaluations.
inline ExitStats exit_stats(double l, double d, double u, double theta, const specialfn::SeriesConfig& cfg = {}) {
    check_channel(l, d, u);
    ExitStats s;
    s.p_plus = exit_prob_up(l, d, u, cfg);
    s.p_minus = 1.0 - s.p_plus;
    s.e_fpt_down = expected_fpt(u, d, theta, cfg);
    s.e_fpt_up = expected_fpt(l, d, theta, cfg);
    if (d != u && d != l) {
        const auto sl = detail::series_at(l, cfg);
        const auto sd = detail::series_at(d, cfg);
        const auto su = detail::series_at(u, cfg);
        const double k_ul = detail::exit_kernel(su, sl);
        s.e_tau_plus_exit = theta * (k_ul - detail::exit_kernel(sd, sl));
        s.e_tau_minus_exit = theta * (k_ul - detail::exit_kernel(su, sd));
    }
    s.e_trade_length = expected_trade_length(l, d, u, theta, cfg);
    return s;
}

}  // namespace ou

/// Exit statistics for physical parameters; bands stay in Sigma units and
/// times come back in the parameters' time unit.
inline ExitStats exit_stats(const OuParams& params, const BandSpec& bands, const specialfn::SeriesConfig& cfg = {}) {
    params.validate();
    return ou::exit_stats(bands.l, bands.d, bands.u, params.theta(), cfg);
}

}  // namespace ou_statarb
