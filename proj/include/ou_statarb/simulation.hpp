#pragma once

// Exact Ornstein-Uhlenbeck path generation, Monte Carlo oracles for the
// closed-form exit statistics, the trade-by-trade backtester and the renewal
// statistics of the realized return.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ou_statarb/errors.hpp"
#include "ou_statarb/ou_analytics.hpp"
#include "ou_statarb/parallel.hpp"
#include "ou_statarb/random.hpp"
#include "ou_statarb/strategy.hpp"

namespace ou_statarb::sim {

// ---------------------------------------------------------------------------
// Paths

struct PathConfig {
    OuParams params;
    double dt = 1e-3;
    double horizon = 1.0;
    std::uint64_t seed = 1;
    double x0 = 0.0;

    void validate() const {
        if (!(params.kappa > 0.0)) throw DomainError("PathConfig: kappa must be positive");
        if (!(params.sigma >= 0.0)) throw DomainError("PathConfig: sigma must be non-negative");
        if (!(dt > 0.0)) throw DomainError("PathConfig: dt must be positive");
        if (!(horizon >= dt)) throw DomainError("PathConfig: horizon must be at least dt");
    }
};

struct SampledPath {
    std::vector<double> times;
    std::vector<double> values;
};

/// One-step exact transition X_{t+dt} | X_t for fixed dt.
class OuStepper {
public:
    OuStepper(const OuParams& p, double dt)
        : eta_(p.eta), decay_(std::exp(-p.kappa * dt)),
          sd_(p.sigma * std::sqrt(-std::expm1(-2.0 * p.kappa * dt) / (2.0 * p.kappa))) {}

    double operator()(double x, double z) const { return eta_ + (x - eta_) * decay_ + sd_ * z; }
    [[nodiscard]] double step_sd() const { return sd_; }

private:
    double eta_;
    double decay_;
    double sd_;
};

inline SampledPath simulate_path(const PathConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(std::floor(cfg.horizon / cfg.dt + 1e-9));
    SampledPath path;
    path.times.resize(n + 1);
    path.values.resize(n + 1);
    const OuStepper step(cfg.params, cfg.dt);
    rng::Gaussian z(rng::make_engine(cfg.seed, 0));
    double x = cfg.x0;
    path.times[0] = 0.0;
    path.values[0] = x;
    for (std::size_t i = 1; i <= n; ++i) {
        x = step(x, z());
        path.times[i] = static_cast<double>(i) * cfg.dt;
        path.values[i] = x;
    }
    return path;
}

// ---------------------------------------------------------------------------
// Statistics helpers

struct McEstimate {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
    std::size_t n = 0;
};

/// Mean, variance and third central moment of a sample.
struct SampleMoments {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;
    double third_central = 0.0;

    [[nodiscard]] McEstimate estimate() const {
        McEstimate e;
        e.n = n;
        if (n > 0) e.mean = mean;
        if (n > 1) e.se = std::sqrt(variance / static_cast<double>(n));
        return e;
    }
};

inline SampleMoments sample_moments(std::span<const double> xs) {
    SampleMoments m;
    m.n = xs.size();
    if (xs.empty()) return m;
    m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(m.n);
    double s2 = 0.0;
    double s3 = 0.0;
    for (double x : xs) {
        const double e = x - m.mean;
        s2 += e * e;
        s3 += e * e * e;
    }
    if (m.n > 1) m.variance = s2 / static_cast<double>(m.n - 1);
    m.third_central = s3 / static_cast<double>(m.n);
    return m;
}

// ---------------------------------------------------------------------------
// Monte Carlo exit oracle

struct ExitOracleConfig {
    std::size_t n_paths = 100000;
    double dt = 1e-3;  ///< in units of theta
    std::uint64_t seed = 2024;
    bool bridge_correction = true;
    bool step_halving = true;
    double max_time = 1e4;  ///< per phase, units of theta
    unsigned workers = 0;
};

struct ExitEstimates {
    McEstimate p_plus;
    McEstimate e_tau_plus_exit;
    McEstimate e_tau_minus_exit;
    McEstimate e_fpt_down;  ///< u -> d
    McEstimate e_fpt_up;    ///< l -> d
    McEstimate e_trade_length;
    SampleMoments trade_length;
    SampleMoments trade_length_plus;
    SampleMoments trade_length_minus;
    std::size_t censored = 0;  ///< paths that hit max_time
};

struct ExitOracleResult {
    double dt = 0.0;
    ExitEstimates coarse;  ///< monitored every dt
    ExitEstimates fine;    ///< monitored every dt/2 on the same paths (step halving)
    bool has_fine = false;

    /// |fine - coarse| / se(coarse) for each quantity.
    struct Drift {
        double p_plus = 0, e_tau_plus_exit = 0, e_tau_minus_exit = 0, e_fpt_down = 0, e_fpt_up = 0,
               e_trade_length = 0;
        [[nodiscard]] double max() const {
            return std::max({p_plus, e_tau_plus_exit, e_tau_minus_exit, e_fpt_down, e_fpt_up, e_trade_length});
        }
    };
    [[nodiscard]] Drift drift() const {
        auto z = [](const McEstimate& a, const McEstimate& b) { return std::abs(b.mean - a.mean) / a.se; };
        return {z(coarse.p_plus, fine.p_plus),
                z(coarse.e_tau_plus_exit, fine.e_tau_plus_exit),
                z(coarse.e_tau_minus_exit, fine.e_tau_minus_exit),
                z(coarse.e_fpt_down, fine.e_fpt_down),
                z(coarse.e_fpt_up, fine.e_fpt_up),
                z(coarse.e_trade_length, fine.e_trade_length)};
    }
};

namespace detail {

// Tracks one trade cycle (exit from (l,u) started at d, then passage back to
// d) on a path observed every `stride` fine steps.
class TradeCycleMonitor {
public:
    struct Outcome {
        bool up = false;
        double fet = 0.0;
        double fpt = 0.0;
        bool censored = false;
    };

    TradeCycleMonitor(double l, double d, double u, double dt_obs, bool bridge, double max_time)
        : l_(l), d_(d), u_(u), dt_(dt_obs), bridge_(bridge), max_time_(max_time), last_(d) {}

    [[nodiscard]] bool done() const { return phase_ == Phase::Done; }
    [[nodiscard]] const Outcome& outcome() const { return out_; }

    /// Feeds the next observation, taken dt_obs after the previous one.
    template <typename Uniform>
    void observe(double x, Uniform& uniform) {
        t_ += dt_;
        const double x0 = last_;
        last_ = x;
        switch (phase_) {
            case Phase::Exit:
                if (x >= u_ || crossed_above(x0, x, u_, uniform)) {
                    out_.up = true;
                    out_.fet = t_;
                    phase_ = Phase::Return;
                    t_ = 0.0;
                } else if (x <= l_ || crossed_below(x0, x, l_, uniform)) {
                    out_.up = false;
                    out_.fet = t_;
                    phase_ = Phase::Return;
                    t_ = 0.0;
                } else if (t_ > max_time_) {
                    censor();
                }
                break;
            case Phase::Return:
                if (out_.up ? (x <= d_ || crossed_below(x0, x, d_, uniform))
                            : (x >= d_ || crossed_above(x0, x, d_, uniform))) {
                    out_.fpt = t_;
                    phase_ = Phase::Done;
                } else if (t_ > max_time_) {
                    censor();
                }
                break;
            case Phase::Done:
                break;
        }
    }

private:
    enum class Phase { Exit, Return, Done };

    // Brownian-bridge probability that the path crossed `b` between two
    // observations on the same side; variance per unit time is 2 in Sigma/theta units.
    template <typename Uniform>
    bool crossed_above(double x0, double x1, double b, Uniform& uniform) const {
        if (!bridge_) return false;
        const double e = (b - x0) * (b - x1) / dt_;
        return e < 40.0 && uniform() < std::exp(-e);
    }
    template <typename Uniform>
    bool crossed_below(double x0, double x1, double b, Uniform& uniform) const {
        if (!bridge_) return false;
        const double e = (x0 - b) * (x1 - b) / dt_;
        return e < 40.0 && uniform() < std::exp(-e);
    }
    void censor() {
        out_.censored = true;
        phase_ = Phase::Done;
    }

    double l_, d_, u_, dt_;
    bool bridge_;
    double max_time_;
    double last_;
    double t_ = 0.0;
    Phase phase_ = Phase::Exit;
    Outcome out_;
};

inline ExitEstimates summarize(const std::vector<TradeCycleMonitor::Outcome>& outs, double theta) {
    ExitEstimates e;
    std::vector<double> up, fet_up, fet_dn, fpt_dn, fpt_up, length, length_up, length_dn;
    for (const auto& o : outs) {
        if (o.censored) {
            ++e.censored;
            continue;
        }
        up.push_back(o.up ? 1.0 : 0.0);
        const double tl = (o.fet + o.fpt) * theta;
        length.push_back(tl);
        if (o.up) {
            fet_up.push_back(o.fet * theta);
            fpt_dn.push_back(o.fpt * theta);
            length_up.push_back(tl);
        } else {
            fet_dn.push_back(o.fet * theta);
            fpt_up.push_back(o.fpt * theta);
            length_dn.push_back(tl);
        }
    }
    auto p = sample_moments(up);
    e.p_plus = p.estimate();
    e.e_tau_plus_exit = sample_moments(fet_up).estimate();
    e.e_tau_minus_exit = sample_moments(fet_dn).estimate();
    e.e_fpt_down = sample_moments(fpt_dn).estimate();
    e.e_fpt_up = sample_moments(fpt_up).estimate();
    e.trade_length = sample_moments(length);
    e.e_trade_length = e.trade_length.estimate();
    e.trade_length_plus = sample_moments(length_up);
    e.trade_length_minus = sample_moments(length_dn);
    return e;
}

}  // namespace detail

/// Monte Carlo estimates of the exit statistics for channel (l, u) entered at
/// d (Sigma units). Paths are exact OU transitions; when step halving is on
/// each path is simulated at dt/2 and monitored both every step and every
/// other step, so the two estimates share their noise.
inline ExitOracleResult mc_exit_oracle(double l, double d, double u, const OuParams& params,
                                       const ExitOracleConfig& cfg = {}) {
    params.validate();
    ou::check_channel(l, d, u);
    if (!(l < d && d < u)) throw BandError("mc_exit_oracle: need l < d < u");
    if (cfg.n_paths < 2) throw DomainError("mc_exit_oracle: need at least two paths");
    const int stride = cfg.step_halving ? 2 : 1;
    const double h = cfg.dt / stride;
    const OuParams unit{1.0, 0.0, std::numbers::sqrt2};  // Sigma = 1, theta = 1
    const OuStepper step(unit, h);

    using Monitor = detail::TradeCycleMonitor;
    std::vector<Monitor::Outcome> coarse(cfg.n_paths), fine(cfg.n_paths);
    parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t i) {
        rng::Gaussian z(rng::make_engine(cfg.seed, i, 0));
        rng::Uniform01 uc(rng::make_engine(cfg.seed, i, 1));
        rng::Uniform01 uf(rng::make_engine(cfg.seed, i, 2));
        Monitor mc(l, d, u, cfg.dt, cfg.bridge_correction, cfg.max_time);
        Monitor mf(l, d, u, h, cfg.bridge_correction, cfg.max_time);
        double x = d;
        long k = 0;
        while (!mc.done() || (stride == 2 && !mf.done())) {
            x = step(x, z());
            ++k;
            if (stride == 2 && !mf.done()) mf.observe(x, uf);
            if (k % stride == 0 && !mc.done()) mc.observe(x, uc);
        }
        coarse[i] = mc.outcome();
        if (stride == 2) fine[i] = mf.outcome();
    });
    ExitOracleResult r;
    r.dt = cfg.dt * params.theta();
    r.coarse = detail::summarize(coarse, params.theta());
    if (stride == 2) {
        r.fine = detail::summarize(fine, params.theta());
        r.has_fine = true;
    }
    return r;
}

struct FptOracleResult {
    McEstimate coarse;
    McEstimate fine;
    bool has_fine = false;
};

/// Monte Carlo first-passage time from -> to (Sigma units).
inline FptOracleResult mc_fpt_oracle(double from, double to, const OuParams& params,
                                     const ExitOracleConfig& cfg = {}) {
    params.validate();
    if (from == to) return {{0.0, 0.0, cfg.n_paths}, {0.0, 0.0, cfg.n_paths}, cfg.step_halving};
    // A passage is a trade cycle whose exit phase is trivially complete:
    // reuse the monitor with a channel that the start already sits on.
    const bool upward = from < to;
    const int stride = cfg.step_halving ? 2 : 1;
    const double h = cfg.dt / stride;
    const OuParams unit{1.0, 0.0, std::numbers::sqrt2};
    const OuStepper step(unit, h);
    std::vector<double> tc(cfg.n_paths), tf(cfg.n_paths);
    parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t i) {
        rng::Gaussian z(rng::make_engine(cfg.seed, i, 0));
        rng::Uniform01 uc(rng::make_engine(cfg.seed, i, 1));
        rng::Uniform01 uf(rng::make_engine(cfg.seed, i, 2));
        auto crossed = [&](double x0, double x1, double dt_obs, rng::Uniform01& un) {
            if (upward ? x1 >= to : x1 <= to) return true;
            if (!cfg.bridge_correction) return false;
            const double e = (to - x0) * (to - x1) / dt_obs;
            return e < 40.0 && un() < std::exp(-e);
        };
        double x = from, last_c = from, last_f = from, t = 0.0;
        double hit_c = -1.0, hit_f = stride == 2 ? -1.0 : 0.0;
        long k = 0;
        while ((hit_c < 0.0 || hit_f < 0.0) && t < cfg.max_time) {
            x = step(x, z());
            ++k;
            t = static_cast<double>(k) * h;
            if (stride == 2 && hit_f < 0.0) {
                if (crossed(last_f, x, h, uf)) hit_f = t;
                last_f = x;
            }
            if (k % stride == 0 && hit_c < 0.0) {
                if (crossed(last_c, x, cfg.dt, uc)) hit_c = t;
                last_c = x;
            }
        }
        tc[i] = hit_c * params.theta();
        tf[i] = hit_f * params.theta();
    });
    auto keep = [](std::vector<double>& v) { std::erase_if(v, [](double t) { return t < 0.0; }); };
    keep(tc);
    keep(tf);
    FptOracleResult r;
    r.coarse = sample_moments(tc).estimate();
    if (stride == 2) {
        r.fine = sample_moments(tf).estimate();
        r.has_fine = true;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Backtest

enum class ExitType { Target, Stop };
enum class Side { Long, Short };

struct Trade {
    Side side = Side::Long;
    std::size_t entry_index = 0;
    std::size_t exit_index = 0;
    double entry_time = 0.0;
    double exit_time = 0.0;
    double entry_level = 0.0;  ///< observed log-price at entry
    double exit_level = 0.0;   ///< observed log-price at exit
    ExitType exit = ExitType::Target;
    double wealth_factor = 1.0;  ///< 1 + f v
};

struct BacktestConfig {
    bool short_side = false;
    bool realistic_fills = false;  ///< payoff from observed prices instead of band levels
};

struct BacktestResult {
    std::vector<Trade> trades;
    std::size_t n_plus = 0;
    std::size_t n_minus = 0;
    double alpha_plus = 0.0;
    double alpha_minus = 0.0;
    std::vector<double> wealth_times;  ///< W is piecewise constant between trades
    std::vector<double> wealth;        ///< W_0 = 1 followed by W after each trade
    double log_wealth = 0.0;           ///< ln(W_T / W_0) from the recursion
    double horizon = 0.0;
    double mu_t = 0.0;
    bool ruined = false;
};

/// Physical levels for a band spec.
struct BandLevels {
    double stop, entry, target;
};

inline BandLevels band_levels(const BandSpec& b, const OuParams& params) {
    return {unscale(params, b.l), unscale(params, b.d), unscale(params, b.u)};
}

namespace detail {

// Long-side state machine. The short side reuses it on the reflected series.
class Book {
public:
    Book(Side side, BandLevels lv, double c, double f, bool realistic)
        : side_(side), lv_(lv), c_(c), f_(f), realistic_(realistic) {}

    // Returns a completed trade through `out` when one closes at this point.
    bool step(std::size_t i, double t, double x, Trade& out) {
        switch (state_) {
            case State::Start:
                if (x == lv_.entry) {
                    open(i, t, x);
                } else {
                    state_ = x > lv_.entry ? State::WaitFromAbove : State::WaitFromBelow;
                }
                return false;
            case State::WaitFromAbove:
                if (x <= lv_.entry) open(i, t, x);
                return false;
            case State::WaitFromBelow:
                if (x >= lv_.entry) open(i, t, x);
                return false;
            case State::Open:
                if (x >= lv_.target || x <= lv_.stop) {
                    out = close(i, t, x, x >= lv_.target ? ExitType::Target : ExitType::Stop);
                    return true;
                }
                return false;
        }
        return false;
    }

private:
    enum class State { Start, WaitFromAbove, WaitFromBelow, Open };

    void open(std::size_t i, double t, double x) {
        state_ = State::Open;
        pending_.side = side_;
        pending_.entry_index = i;
        pending_.entry_time = t;
        pending_.entry_level = x;
    }

    Trade close(std::size_t i, double t, double x, ExitType type) {
        Trade tr = pending_;
        tr.exit_index = i;
        tr.exit_time = t;
        tr.exit_level = x;
        tr.exit = type;
        double move;
        if (realistic_)
            move = x - tr.entry_level;
        else
            move = (type == ExitType::Target ? lv_.target : lv_.stop) - lv_.entry;
        tr.wealth_factor = 1.0 + f_ * std::expm1(move - c_);
        state_ = type == ExitType::Target ? State::WaitFromAbove : State::WaitFromBelow;
        return tr;
    }

    Side side_;
    BandLevels lv_;
    double c_, f_;
    bool realistic_;
    State state_ = State::Start;
    Trade pending_;
};

}  // namespace detail

/// Replays the strategy on an observed log-price series: open at the first
/// observation at or beyond D, close at the first observation at or beyond U
/// (target) or L (stop), wait for the series to come back to D, repeat.
/// Wealth is updated only when a trade closes; an open position at the end
/// of the series is ignored.
inline BacktestResult backtest(std::span<const double> times, std::span<const double> values, const BandSpec& bands,
                               const OuParams& params, const BacktestConfig& cfg = {}) {
    params.validate();
    ou_statarb::detail::check_strict(bands);
    if (times.size() != values.size()) throw DataError("backtest: times and values differ in length");
    BacktestResult r;
    r.wealth.push_back(1.0);
    r.wealth_times.push_back(times.empty() ? 0.0 : times.front());
    if (times.empty()) return r;
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw DataError("backtest: timestamps must be strictly increasing");

    const Payoffs v = payoffs(bands, params.stationary_sd());
    r.alpha_plus = std::log1p(bands.f * v.v_plus);
    r.alpha_minus = bands.f * v.v_minus > -1.0 ? std::log1p(bands.f * v.v_minus)
                                               : -std::numeric_limits<double>::infinity();

    const BandLevels lv = band_levels(bands, params);
    detail::Book long_book(Side::Long, lv, bands.c, bands.f, cfg.realistic_fills);
    // the short book runs the long logic on the reflection 2 eta - x, where its
    // entry, target and stop coincide with the long-side levels
    detail::Book short_book(Side::Short, lv, bands.c, bands.f, cfg.realistic_fills);
    const double pivot = 2.0 * params.eta;

    double wealth = 1.0;
    auto record = [&](Trade tr) {
        if (!(tr.wealth_factor > 0.0)) {
            r.ruined = true;
        }
        wealth *= tr.wealth_factor;
        if (tr.exit == ExitType::Target)
            ++r.n_plus;
        else
            ++r.n_minus;
        r.wealth.push_back(wealth);
        r.wealth_times.push_back(tr.exit_time);
        r.trades.push_back(tr);
    };
    for (std::size_t i = 0; i < values.size() && !r.ruined; ++i) {
        Trade tr;
        if (long_book.step(i, times[i], values[i], tr)) record(tr);
        if (cfg.short_side && !r.ruined && short_book.step(i, times[i], pivot - values[i], tr)) {
            tr.entry_level = pivot - tr.entry_level;
            tr.exit_level = pivot - tr.exit_level;
            record(tr);
        }
    }
    r.horizon = times.back() - times.front();
    r.log_wealth = r.ruined ? -std::numeric_limits<double>::infinity() : std::log(wealth);
    r.mu_t = r.horizon > 0.0 ? r.log_wealth / r.horizon : 0.0;
    return r;
}

inline BacktestResult backtest(const SampledPath& path, const BandSpec& bands, const OuParams& params,
                               const BacktestConfig& cfg = {}) {
    return backtest(path.times, path.values, bands, params, cfg);
}

// ---------------------------------------------------------------------------
// Renewal moments

struct RenewalMoments {
    double phi1 = 0.0;     ///< mean trade length
    double phi2_sq = 0.0;  ///< trade-length variance
    double phi3 = std::numeric_limits<double>::quiet_NaN();  ///< third central moment (empirical only)
    std::size_t n = 0;
    bool insufficient = false;  ///< fewer than 30 trades in empirical mode
};

/// Mixture moments from per-scenario means and standard deviations.
inline RenewalMoments renewal_moments(double p_plus, double mean_plus, double mean_minus, double sd_plus,
                                      double sd_minus) {
    RenewalMoments m;
    const double p_minus = 1.0 - p_plus;
    m.phi1 = p_plus * mean_plus + p_minus * mean_minus;
    const double gap = mean_plus - mean_minus;
    m.phi2_sq = p_plus * p_minus * gap * gap + p_plus * sd_plus * sd_plus + p_minus * sd_minus * sd_minus;
    return m;
}

/// Sample moments of observed trade lengths.
inline RenewalMoments renewal_moments(std::span<const double> trade_lengths) {
    const SampleMoments s = sample_moments(trade_lengths);
    RenewalMoments m;
    m.n = s.n;
    m.phi1 = s.mean;
    m.phi2_sq = s.variance;
    m.phi3 = s.third_central;
    m.insufficient = s.n < 30;
    return m;
}

/// Entry-to-entry durations of the long book in a backtest.
inline std::vector<double> trade_lengths(const BacktestResult& r) {
    std::vector<double> entries;
    for (const auto& t : r.trades)
        if (t.side == Side::Long) entries.push_back(t.entry_time);
    std::vector<double> out;
    for (std::size_t i = 1; i < entries.size(); ++i) out.push_back(entries[i] - entries[i - 1]);
    return out;
}

// ---------------------------------------------------------------------------
// Variance decay of the realized return

struct VarianceDecayConfig {
    std::size_t n_paths = 500;
    std::vector<double> horizons;  ///< in units of theta, increasing
    double dt = 2e-3;              ///< units of theta
    std::uint64_t seed = 7;
    unsigned workers = 0;
};

struct VarianceDecayResult {
    std::vector<double> horizons;  ///< physical time
    std::vector<double> mean_mu;
    std::vector<double> var_mu;
    double slope = 0.0;  ///< d ln Var / d ln t
    /// t * Var[mu_t] at the largest horizon, and its renewal-theory prediction
    /// (a+ - a-)^2 p (1-p) / phi1 + abar^2 phi2^2 / phi1^3 with MC moments.
    double scaled_var_at_max = 0.0;
    double predicted_coefficient = 0.0;
    /// Var[R - mu tau] / phi1 over trade cycles: the same limit with the
    /// covariance between per-trade reward and trade length kept.
    double renewal_reward_coefficient = 0.0;
    double p_plus = 0.0;
    RenewalMoments moments;
};

/// Simulates paths that start at the entry band with a position opened at
/// t = 0 and measures Var[mu_t] across paths at each horizon.
inline VarianceDecayResult variance_decay_study(const BandSpec& bands, const OuParams& params,
                                                const VarianceDecayConfig& cfg) {
    params.validate();
    ou_statarb::detail::check_strict(bands);
    if (cfg.horizons.size() < 2) throw DomainError("variance_decay_study: need at least two horizons");
    if (!std::is_sorted(cfg.horizons.begin(), cfg.horizons.end()))
        throw DomainError("variance_decay_study: horizons must increase");
    if (std::log10(cfg.horizons.back() / cfg.horizons.front()) < 1.5)
        throw DomainError("variance_decay_study: horizons must span at least 1.5 decades");

    const std::size_t nh = cfg.horizons.size();
    const double theta = params.theta();
    const Payoffs v = payoffs(bands, params.stationary_sd());
    const double a_plus = std::log1p(bands.f * v.v_plus);
    const double a_minus = std::log1p(bands.f * v.v_minus);

    struct PathOut {
        std::vector<double> mu;
        std::vector<double> len_plus, len_minus;
    };
    std::vector<PathOut> outs(cfg.n_paths);
    const double t_end = cfg.horizons.back();
    parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t p) {
        // Sigma/theta units throughout; alphas are unit free.
        const OuParams unit{1.0, 0.0, std::numbers::sqrt2};
        const OuStepper step(unit, cfg.dt);
        rng::Gaussian z(rng::make_engine(cfg.seed, p));
        PathOut& o = outs[p];
        o.mu.assign(nh, 0.0);
        double x = bands.d;
        double log_w = 0.0;
        bool open = true;
        double last_entry = 0.0;
        bool last_closed_up = false;
        std::size_t h = 0;
        const auto n_steps = static_cast<long>(std::ceil(t_end / cfg.dt - 1e-9));
        for (long k = 1; k <= n_steps; ++k) {
            const double t = static_cast<double>(k) * cfg.dt;
            while (h < nh && cfg.horizons[h] < t) {
                o.mu[h] = log_w / (cfg.horizons[h] * theta);
                ++h;
            }
            x = step(x, z());
            if (open) {
                if (x >= bands.u || x <= bands.l) {
                    last_closed_up = x >= bands.u;
                    log_w += last_closed_up ? a_plus : a_minus;
                    open = false;
                }
            } else if (last_closed_up ? x <= bands.d : x >= bands.d) {
                (last_closed_up ? o.len_plus : o.len_minus).push_back((t - last_entry) * theta);
                open = true;
                last_entry = t;
            }
        }
        while (h < nh) {
            o.mu[h] = log_w / (cfg.horizons[h] * theta);
            ++h;
        }
    });

    VarianceDecayResult r;
    r.horizons.resize(nh);
    r.mean_mu.resize(nh);
    r.var_mu.resize(nh);
    std::vector<double> column(cfg.n_paths);
    for (std::size_t h = 0; h < nh; ++h) {
        for (std::size_t p = 0; p < cfg.n_paths; ++p) column[p] = outs[p].mu[h];
        const SampleMoments m = sample_moments(column);
        r.horizons[h] = cfg.horizons[h] * theta;
        r.mean_mu[h] = m.mean;
        r.var_mu[h] = m.variance;
    }
    // least-squares slope of ln Var against ln t
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t h = 0; h < nh; ++h) {
        const double lx = std::log(r.horizons[h]);
        const double ly = std::log(r.var_mu[h]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(nh);
    r.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    r.scaled_var_at_max = r.horizons.back() * r.var_mu.back();

    std::vector<double> lp, lm;
    for (const auto& o : outs) {
        lp.insert(lp.end(), o.len_plus.begin(), o.len_plus.end());
        lm.insert(lm.end(), o.len_minus.begin(), o.len_minus.end());
    }
    const SampleMoments mp = sample_moments(lp);
    const SampleMoments mm = sample_moments(lm);
    const double p = static_cast<double>(mp.n) / static_cast<double>(mp.n + mm.n);
    r.p_plus = p;
    r.moments = renewal_moments(p, mp.mean, mm.mean, std::sqrt(mp.variance), std::sqrt(mm.variance));
    r.moments.n = mp.n + mm.n;
    const double abar = p * a_plus + (1.0 - p) * a_minus;
    const double phi1 = r.moments.phi1;
    r.predicted_coefficient = (a_plus - a_minus) * (a_plus - a_minus) * p * (1.0 - p) / phi1 +
                              abar * abar * r.moments.phi2_sq / (phi1 * phi1 * phi1);
    const double mu = abar / phi1;
    auto cycle_var = [&](double a, const SampleMoments& m) {
        return (a - mu * m.mean) * (a - mu * m.mean) + mu * mu * m.variance;
    };
    r.renewal_reward_coefficient = (p * cycle_var(a_plus, mp) + (1.0 - p) * cycle_var(a_minus, mm)) / phi1;
    return r;
}

}  // namespace ou_statarb::sim
