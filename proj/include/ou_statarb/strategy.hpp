#pragma once

// Long-side mean-reversion strategy with stop-loss and leverage: buy at d,
// sell at u (profit) or l (stop), wait for the return to d, repeat with a
// constant fraction f of wealth in the risky leg.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>

#include "ou_statarb/errors.hpp"
#include "ou_statarb/optimizer.hpp"
#include "ou_statarb/ou_analytics.hpp"
#include "ou_statarb/special_functions.hpp"

namespace ou_statarb {

struct Payoffs {
    double v_plus = 0.0;   ///< wealth change at a target exit
    double v_minus = 0.0;  ///< wealth change at a stop exit
};

struct StrategyEvaluation {
    double v_plus = 0.0;
    double v_minus = 0.0;
    double q_plus = 0.0;
    double q_minus = 0.0;
    double alpha_plus = 0.0;  ///< ln(1 + f v+) at the evaluated f
    double alpha_minus = 0.0;
    double p_plus = 0.0;
    double trade_length = 0.0;
    double f_star = 0.0;
    double mu = 0.0;       ///< long-run return at the evaluated f
    double mu_star = 0.0;  ///< long-run return at f_star
};

/// Leverage selection for the band optimizer.
struct Leverage {
    bool optimal = false;
    double value = 1.0;

    static Leverage fixed(double f) { return {false, f}; }
    static Leverage kelly() { return {true, 0.0}; }
};

struct OptimizerConfig {
    int grid_resolution = 200;
    double tolerance = 1e-6;
    double u_max = 3.0;  ///< Sigma units
    double d_max = 0.0;  ///< Sigma units
    unsigned workers = 0;

    void validate() const {
        if (grid_resolution < 50) throw DomainError("OptimizerConfig: grid_resolution must be >= 50");
        if (!(tolerance > 0.0)) throw DomainError("OptimizerConfig: tolerance must be positive");
        if (!(u_max > d_max)) throw DomainError("OptimizerConfig: u_max must exceed d_max");
    }
};

struct BandOptimum {
    double d = 0.0;
    double u = 0.0;
    double f = 0.0;
    double mu = 0.0;
    double p_plus = 0.0;
    double trade_length = 0.0;
    bool no_trade = false;
    bool hit_box = false;  ///< optimum sits on the search box; widen u_max/d_max
    int iterations = 0;
};

inline constexpr double kRuinMargin = 1e-9;

inline Payoffs payoffs(const BandSpec& b, double stationary_sd) {
    return {std::expm1((b.u - b.d) * stationary_sd - b.c), std::expm1((b.l - b.d) * stationary_sd - b.c)};
}

/// q+ such that q+ v+ + (1 - q+) v- = 0.
inline double fair_prob_up(double v_plus, double v_minus) { return v_minus / (v_minus - v_plus); }

/// Kelly fraction for the two-outcome trade; zero unless the game favours the trader.
inline double optimal_leverage(double p_plus, double v_plus, double v_minus) {
    if (!(v_plus > 0.0) || !(v_minus < 0.0)) return 0.0;
    if (p_plus <= fair_prob_up(v_plus, v_minus)) return 0.0;
    const double p_minus = 1.0 - p_plus;
    return -(p_plus * v_plus + p_minus * v_minus) / (v_plus * v_minus);
}

namespace detail {

inline void check_strict(const BandSpec& b) {
    if (!(b.l < b.d && b.d < b.u)) {
        std::ostringstream os;
        os << "bands must satisfy l < d < u, got (" << b.l << ", " << b.d << ", " << b.u << ")";
        throw BandError(os.str());
    }
    if (!(b.f >= 0.0)) throw BandError("leverage f must be non-negative");
}

inline double log_wealth_factor(double f, double v, const char* which) {
    const double w = f * v;
    if (!(w > -1.0)) {
        std::ostringstream os;
        os << "ruin: 1 + f*v" << which << " = " << 1.0 + w << " <= 0";
        throw RuinError(os.str());
    }
    return std::log1p(w);
}

}  // namespace detail

/// Long-run growth rate in the closed form
///   mu = [ln(1+f v+)/Erfid(u,d) + ln(1+f v-)/Erfid(d,l)] / (pi theta).
inline double long_run_return(const BandSpec& b, const OuParams& params, const specialfn::SeriesConfig& cfg = {}) {
    params.validate();
    detail::check_strict(b);
    if (b.f == 0.0) return 0.0;
    const Payoffs v = payoffs(b, params.stationary_sd());
    const double a_plus = detail::log_wealth_factor(b.f, v.v_plus, "+");
    const double a_minus = detail::log_wealth_factor(b.f, v.v_minus, "-");
    return (a_plus / specialfn::erfid(b.u, b.d, cfg) + a_minus / specialfn::erfid(b.d, b.l, cfg)) /
           (std::numbers::pi * params.theta());
}

/// Renewal-reward form (p+ a+ + p- a-) / E[trade length], with the trade
/// length assembled from the conditional exit and passage times.
inline double long_run_return_general(const BandSpec& b, const OuParams& params,
                                      const specialfn::SeriesConfig& cfg = {}) {
    params.validate();
    detail::check_strict(b);
    if (b.f == 0.0) return 0.0;
    const Payoffs v = payoffs(b, params.stationary_sd());
    const double a_plus = detail::log_wealth_factor(b.f, v.v_plus, "+");
    const double a_minus = detail::log_wealth_factor(b.f, v.v_minus, "-");
    const ExitStats s = exit_stats(params, b, cfg);
    const double length = s.p_plus * (s.e_tau_plus_exit + s.e_fpt_down) +
                          s.p_minus * (s.e_tau_minus_exit + s.e_fpt_up);
    return (s.p_plus * a_plus + s.p_minus * a_minus) / length;
}

/// Kullback-Leibler form of the return at the optimal leverage.
inline double kl_return(double p_plus, double q_plus, double trade_length) {
    if (p_plus <= q_plus) return 0.0;
    const double p_minus = 1.0 - p_plus;
    const double q_minus = 1.0 - q_plus;
    return (p_plus * std::log(p_plus / q_plus) + p_minus * std::log(p_minus / q_minus)) / trade_length;
}

inline StrategyEvaluation evaluate(const BandSpec& b, const OuParams& params,
                                   const specialfn::SeriesConfig& cfg = {}) {
    params.validate();
    detail::check_strict(b);
    StrategyEvaluation e;
    const Payoffs v = payoffs(b, params.stationary_sd());
    e.v_plus = v.v_plus;
    e.v_minus = v.v_minus;
    e.q_plus = v.v_plus > 0.0 ? fair_prob_up(v.v_plus, v.v_minus) : 1.0;
    e.q_minus = 1.0 - e.q_plus;
    e.p_plus = ou::exit_prob_up(b.l, b.d, b.u, cfg);
    e.trade_length = ou::expected_trade_length(b.l, b.d, b.u, params.theta(), cfg);
    e.alpha_plus = detail::log_wealth_factor(b.f, v.v_plus, "+");
    e.alpha_minus = detail::log_wealth_factor(b.f, v.v_minus, "-");
    e.mu = b.f == 0.0 ? 0.0 : (e.p_plus * e.alpha_plus + (1.0 - e.p_plus) * e.alpha_minus) / e.trade_length;
    e.f_star = optimal_leverage(e.p_plus, v.v_plus, v.v_minus);
    e.mu_star = e.f_star > 0.0 ? kl_return(e.p_plus, e.q_plus, e.trade_length) : 0.0;
    return e;
}

/// No-stop-loss limit: ln(1 + f v+) / (pi theta Erfid(u, d)).
inline double no_stop_loss_return(double d, double u, double f, double c, const OuParams& params,
                             const specialfn::SeriesConfig& cfg = {}) {
    params.validate();
    if (!(d < u)) throw BandError("no_stop_loss_return: need d < u");
    const double v_plus = std::expm1((u - d) * params.stationary_sd() - c);
    const double a = detail::log_wealth_factor(f, v_plus, "+");
    return a / (std::numbers::pi * params.theta() * specialfn::erfid(u, d, cfg));
}

/// First-order (small Sigma) break-even cost in Sigma units:
///   cbar = p+ (u - l) - (d - l).
inline double break_even_cost(double l, double d, double u, const specialfn::SeriesConfig& cfg = {}) {
    return ou::exit_prob_up(l, d, u, cfg) * (u - l) - (d - l);
}

struct ViableCost {
    double c_star = 0.0;  ///< Sigma units
    double d = 0.0;
    double u = 0.0;
};

/// Largest cost (Sigma units) admitting a profitable strategy for stop-loss l.
inline ViableCost max_viable_cost(double l, OptimizerConfig cfg = {}, const specialfn::SeriesConfig& scfg = {}) {
    if (!(l < 0.0)) throw BandError("max_viable_cost: stop-loss must be negative");
    cfg.validate();
    const double u_max = std::max(cfg.u_max, -l);
    auto objective = [&](double d, double u) {
        if (!(d > l && d <= cfg.d_max && u > d && u <= u_max)) return -std::numeric_limits<double>::infinity();
        return break_even_cost(l, d, u, scfg);
    };
    const auto best =
        optim::maximize_on_triangle(objective, {l, cfg.d_max, u_max, cfg.grid_resolution}, cfg.tolerance * std::abs(l),
                                    cfg.workers);
    return {std::max(0.0, best.value), best.arg.x, best.arg.y};
}

/// Objective used by the band optimizer at one (d, u); -inf where the bands
/// are inadmissible.
inline double band_objective(double l, double d, double u, double c, const Leverage& lev, const OuParams& params,
                             const specialfn::SeriesConfig& cfg = {}) {
    constexpr double kInadmissible = -std::numeric_limits<double>::infinity();
    if (!(l < d && d < u)) return kInadmissible;
    const double sd = params.stationary_sd();
    if (!((u - d) * sd > c)) return kInadmissible;
    const BandSpec b{l, d, u, c, lev.optimal ? 0.0 : lev.value};
    const Payoffs v = payoffs(b, sd);
    try {
        if (lev.optimal) {
            const double p = ou::exit_prob_up(l, d, u, cfg);
            const double q = fair_prob_up(v.v_plus, v.v_minus);
            if (p <= q) return 0.0;
            return kl_return(p, q, ou::expected_trade_length(l, d, u, params.theta(), cfg));
        }
        if (b.f * std::abs(v.v_minus) >= 1.0 - kRuinMargin) return kInadmissible;
        return long_run_return(b, params, cfg);
    } catch (const DomainError&) {
        return kInadmissible;
    }
}

/// Maximizes the long-run return over (d, u) for a fixed stop-loss l and cost c.
inline BandOptimum optimize_bands(double l, double c, const OuParams& params, const Leverage& lev,
                                  OptimizerConfig cfg = {}, const specialfn::SeriesConfig& scfg = {}) {
    params.validate();
    cfg.validate();
    if (!(l < 0.0)) throw BandError("optimize_bands: stop-loss must be negative");
    if (!lev.optimal && !(lev.value >= 0.0)) throw BandError("optimize_bands: leverage must be non-negative");
    auto objective = [&](double d, double u) {
        if (d > cfg.d_max || u > cfg.u_max) return -std::numeric_limits<double>::infinity();
        return band_objective(l, d, u, c, lev, params, scfg);
    };
    const auto best =
        optim::maximize_on_triangle(objective, {l, cfg.d_max, cfg.u_max, cfg.grid_resolution}, cfg.tolerance,
                                    cfg.workers);
    BandOptimum out;
    if (!std::isfinite(best.value) || best.value <= 0.0 || (!lev.optimal && lev.value == 0.0)) {
        out.no_trade = true;
        out.f = 0.0;
        out.mu = 0.0;
        if (std::isfinite(best.value)) {
            out.d = best.arg.x;
            out.u = best.arg.y;
        }
        return out;
    }
    out.d = best.arg.x;
    out.u = best.arg.y;
    out.mu = best.value;
    out.iterations = best.iterations;
    out.p_plus = ou::exit_prob_up(l, out.d, out.u, scfg);
    out.trade_length = ou::expected_trade_length(l, out.d, out.u, params.theta(), scfg);
    if (lev.optimal) {
        const Payoffs v = payoffs({l, out.d, out.u, c, 0.0}, params.stationary_sd());
        out.f = optimal_leverage(out.p_plus, v.v_plus, v.v_minus);
    } else {
        out.f = lev.value;
    }
    const double edge = 10.0 * cfg.tolerance;
    out.hit_box = out.u >= cfg.u_max - edge || out.d >= cfg.d_max - edge;
    return out;
}

/// Long-run return of the mirrored short strategy: sell at -d, buy back at
/// -u (profit) or -l (stop). Evaluated directly on the reflected channel
/// (-u, -l); by symmetry of the OU law it equals the long-side return.
inline double short_side_return(const BandSpec& b, const OuParams& params, const specialfn::SeriesConfig& cfg = {}) {
    params.validate();
    detail::check_strict(b);
    if (b.f == 0.0) return 0.0;
    const double entry = -b.d, target = -b.u, stop = -b.l;
    const double sd = params.stationary_sd();
    // short gains when the price falls from entry to target
    const double v_plus = std::expm1((entry - target) * sd - b.c);
    const double v_minus = std::expm1((entry - stop) * sd - b.c);
    const double a_plus = detail::log_wealth_factor(b.f, v_plus, "+");
    const double a_minus = detail::log_wealth_factor(b.f, v_minus, "-");
    const double p_target = ou::exit_prob_down(target, entry, stop, cfg);
    const double length = ou::expected_trade_length(target, entry, stop, params.theta(), cfg);
    return (p_target * a_plus + (1.0 - p_target) * a_minus) / length;
}

}  // namespace ou_statarb
