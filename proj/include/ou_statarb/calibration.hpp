#pragma once

// Price-series ingestion, outlier filters, bid-ask cost estimation, exact
// discrete-time OU maximum likelihood and the parametric bootstrap.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "ou_statarb/errors.hpp"
#include "ou_statarb/ou_analytics.hpp"
#include "ou_statarb/parallel.hpp"
#include "ou_statarb/random.hpp"

namespace ou_statarb::calib {

inline constexpr double kSecondsPerYear = 365.25 * 86400.0;
inline constexpr double kHalfHourYears = 1800.0 / kSecondsPerYear;

// ---------------------------------------------------------------------------
// Timestamps

struct Timestamp {
    std::int64_t epoch_seconds = 0;
    int minute_of_day = 0;  ///< wall-clock minutes as written in the file
    std::string text;
};

/// Parses YYYY-MM-DD[T| ]HH:MM[:SS][Z]. The wall-clock time is taken as
/// market-local; no time-zone conversion is applied.
inline Timestamp parse_timestamp(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    char sep = 0;
    const int got = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &sec);
    if (got < 6 || (sep != 'T' && sep != ' ')) throw DataError("bad timestamp '" + s + "'");
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 60)
        throw DataError("bad timestamp '" + s + "'");
    const auto days = sys_days{ymd}.time_since_epoch().count();
    Timestamp t;
    t.epoch_seconds = static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + sec;
    t.minute_of_day = h * 60 + mi;
    t.text = s;
    return t;
}

inline std::string format_timestamp(std::int64_t epoch_seconds) {
    using namespace std::chrono;
    const sys_seconds tp{seconds{epoch_seconds}};
    const auto dp = floor<days>(tp);
    const year_month_day ymd{dp};
    const hh_mm_ss hms{tp - dp};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return buf;
}

// ---------------------------------------------------------------------------
// Price series

/// Two-leg bid/ask quotes. The traded quantity is the ratio of mid prices.
struct PriceSeries {
    std::vector<Timestamp> timestamps;
    std::vector<double> bid1, ask1, bid2, ask2;

    [[nodiscard]] std::size_t size() const { return timestamps.size(); }
    [[nodiscard]] bool empty() const { return timestamps.empty(); }

    [[nodiscard]] double ratio(std::size_t i) const {
        return 0.5 * (bid1[i] + ask1[i]) / (0.5 * (bid2[i] + ask2[i]));
    }
    [[nodiscard]] double log_ratio(std::size_t i) const { return std::log(ratio(i)); }

    [[nodiscard]] std::vector<double> ratios() const {
        std::vector<double> r(size());
        for (std::size_t i = 0; i < size(); ++i) r[i] = ratio(i);
        return r;
    }
    [[nodiscard]] std::vector<double> log_ratios() const {
        std::vector<double> r(size());
        for (std::size_t i = 0; i < size(); ++i) r[i] = log_ratio(i);
        return r;
    }
    /// Calendar time in years since the first observation.
    [[nodiscard]] std::vector<double> times_years() const {
        std::vector<double> t(size());
        for (std::size_t i = 0; i < size(); ++i)
            t[i] = static_cast<double>(timestamps[i].epoch_seconds - timestamps.front().epoch_seconds) /
                   kSecondsPerYear;
        return t;
    }

    void push_back(Timestamp ts, double b1, double a1, double b2, double a2) {
        timestamps.push_back(std::move(ts));
        bid1.push_back(b1);
        ask1.push_back(a1);
        bid2.push_back(b2);
        ask2.push_back(a2);
    }

    [[nodiscard]] PriceSeries subset(std::span<const std::size_t> keep) const {
        PriceSeries out;
        for (std::size_t i : keep) out.push_back(timestamps[i], bid1[i], ask1[i], bid2[i], ask2[i]);
        return out;
    }

    void validate() const {
        for (std::size_t i = 0; i < size(); ++i) {
            if (!(bid1[i] > 0 && ask1[i] > 0 && bid2[i] > 0 && ask2[i] > 0))
                throw DataError("row " + std::to_string(i) + ": prices must be positive");
            if (bid1[i] > ask1[i] || bid2[i] > ask2[i])
                throw DataError("row " + std::to_string(i) + ": bid exceeds ask");
            if (i > 0 && timestamps[i].epoch_seconds <= timestamps[i - 1].epoch_seconds)
                throw DataError("row " + std::to_string(i) + ": timestamps must be strictly increasing");
        }
    }
};

inline PriceSeries read_csv(std::istream& in) {
    PriceSeries s;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV input");
    auto trim = [](std::string v) {
        v.erase(0, v.find_first_not_of(" \t\r"));
        v.erase(v.find_last_not_of(" \t\r") + 1);
        return v;
    };
    std::vector<std::string> header;
    {
        std::stringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(trim(cell));
    }
    const std::vector<std::string> expected{"timestamp", "bid1", "ask1", "bid2", "ask2"};
    if (header != expected) throw DataError("CSV header must be timestamp,bid1,ask1,bid2,ask2");
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        std::stringstream ls(line);
        std::string cells[5];
        for (auto& c : cells)
            if (!std::getline(ls, c, ',')) throw DataError("CSV row " + std::to_string(row) + ": expected 5 columns");
        try {
            s.push_back(parse_timestamp(trim(cells[0])), std::stod(cells[1]), std::stod(cells[2]),
                        std::stod(cells[3]), std::stod(cells[4]));
        } catch (const std::invalid_argument&) {
            throw DataError("CSV row " + std::to_string(row) + ": non-numeric price");
        }
    }
    s.validate();
    return s;
}

inline PriceSeries read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return read_csv(in);
}

inline void write_csv(std::ostream& out, const PriceSeries& s) {
    out << "timestamp,bid1,ask1,bid2,ask2\n";
    out.precision(17);
    for (std::size_t i = 0; i < s.size(); ++i)
        out << s.timestamps[i].text << ',' << s.bid1[i] << ',' << s.ask1[i] << ',' << s.bid2[i] << ','
            << s.ask2[i] << '\n';
}

// ---------------------------------------------------------------------------
// Quantiles and outlier filters

/// Linear interpolation between order statistics at position p (n - 1).
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw DataError("quantile of empty sample");
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> xs, double p) {
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, p);
}

struct Quartiles {
    double q1 = 0.0;
    double q3 = 0.0;
    [[nodiscard]] double iqr() const { return q3 - q1; }
};

inline Quartiles quartiles(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    return {quantile_sorted(xs, 0.25), quantile_sorted(xs, 0.75)};
}

struct FilterResult {
    PriceSeries series;
    std::vector<std::size_t> removed;  ///< indices into the input series
};

/// Drops ratios outside [Q1 - 3 IQR, Q3 + 3 IQR].
inline FilterResult filter_extreme_outliers(const PriceSeries& s) {
    if (s.empty()) throw DataError("filter_extreme_outliers: empty series");
    const auto r = s.ratios();
    const Quartiles q = quartiles(r);
    const double lo = q.q1 - 3.0 * q.iqr();
    const double hi = q.q3 + 3.0 * q.iqr();
    std::vector<std::size_t> keep;
    FilterResult out;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] < lo || r[i] > hi)
            out.removed.push_back(i);
        else
            keep.push_back(i);
    }
    out.series = s.subset(keep);
    return out;
}

/// Fraction of IQR the next observation must recover for a jump to count
/// as antipersistent.
inline constexpr double kRecoveryFraction = 0.95;

/// Drops single-bar spikes: |R_t - R_{t-1}| > IQR and R_{t+1} back within
/// (1 - 0.95) IQR of R_{t-1}. Persistent jumps survive.
inline FilterResult filter_antipersistent_outliers(const PriceSeries& s) {
    if (s.size() < 3) throw DataError("filter_antipersistent_outliers: need at least 3 observations");
    const auto r = s.ratios();
    const double iqr = quartiles(r).iqr();
    const double band = (1.0 - kRecoveryFraction) * iqr;
    FilterResult out;
    std::vector<std::size_t> keep{0};
    for (std::size_t t = 1; t + 1 < r.size(); ++t) {
        const bool jump = std::abs(r[t] - r[t - 1]) > iqr;
        const bool recovers = std::abs(r[t + 1] - r[t - 1]) <= band;
        if (jump && recovers)
            out.removed.push_back(t);
        else
            keep.push_back(t);
    }
    keep.push_back(r.size() - 1);
    out.series = s.subset(keep);
    return out;
}

// ---------------------------------------------------------------------------
// Transaction costs

struct CostSummary {
    std::vector<double> per_instant;  ///< c_t, log-price units
    double mean = 0.0;
    double mean_sigma_units = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> bin_edges;  ///< Sigma units when Sigma is known, otherwise absolute
    std::vector<std::size_t> bin_counts;
};

/// c_t = sum over legs of ln(ask / bid). Pass the stationary deviation to
/// get the mean and histogram in Sigma units.
inline CostSummary estimate_cost(const PriceSeries& s, double stationary_sd = 0.0, int bins = 30) {
    if (s.empty()) throw DataError("estimate_cost: empty series");
    CostSummary c;
    c.per_instant.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        c.per_instant[i] = std::log(s.ask1[i] / s.bid1[i]) + std::log(s.ask2[i] / s.bid2[i]);
    double sum = 0.0;
    for (double v : c.per_instant) sum += v;
    c.mean = sum / static_cast<double>(s.size());
    const double scale = stationary_sd > 0.0 ? stationary_sd : 1.0;
    if (stationary_sd > 0.0) c.mean_sigma_units = c.mean / stationary_sd;
    const auto [mn, mx] = std::minmax_element(c.per_instant.begin(), c.per_instant.end());
    const double lo = *mn / scale;
    double hi = *mx / scale;
    if (hi <= lo) hi = lo + 1e-12;
    c.bin_edges.resize(bins + 1);
    c.bin_counts.assign(bins, 0);
    for (int b = 0; b <= bins; ++b) c.bin_edges[b] = lo + (hi - lo) * b / bins;
    for (double v : c.per_instant) {
        auto b = static_cast<int>((v / scale - lo) / (hi - lo) * bins);
        c.bin_counts[std::clamp(b, 0, bins - 1)]++;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Maximum likelihood

struct Interval {
    double lower = std::numeric_limits<double>::quiet_NaN();
    double upper = std::numeric_limits<double>::quiet_NaN();
    [[nodiscard]] bool contains(double v) const { return lower <= v && v <= upper; }
    [[nodiscard]] double width() const { return upper - lower; }
};

struct MleResult {
    double kappa_hat = 0.0;
    double eta_hat = 0.0;
    double sigma_hat = 0.0;
    double log_likelihood = 0.0;
    std::size_t n_transitions = 0;
    bool kappa_at_lower_bound = false;
    Interval kappa_ci, eta_ci, sigma_ci;

    [[nodiscard]] OuParams params() const { return {kappa_hat, eta_hat, sigma_hat}; }
};

/// Gaussian transition log-likelihood of x_1..x_N given x_0, each gap using
/// its own dt.
inline double log_likelihood(std::span<const double> x, std::span<const double> gaps, double kappa, double eta,
                             double sigma) {
    if (gaps.size() + 1 != x.size()) throw DataError("log_likelihood: need one gap per transition");
    double ll = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) {
        const double a = std::exp(-kappa * gaps[i - 1]);
        const double var = sigma * sigma * -std::expm1(-2.0 * kappa * gaps[i - 1]) / (2.0 * kappa);
        const double e = x[i] - x[i - 1] * a - eta * (1.0 - a);
        ll += -0.5 * std::log(2.0 * std::numbers::pi * var) - e * e / (2.0 * var);
    }
    return ll;
}

namespace detail {

struct Profile {
    double eta = 0.0;
    double sigma2 = 0.0;
    double ll = -std::numeric_limits<double>::infinity();
};

// Transitions grouped by gap length. Within a group the transition
// coefficients are shared, so sums of y = x_i, z = x_{i-1} and their
// products are sufficient. Data are centred first to keep the sums well
// conditioned.
class ProfileLikelihood {
public:
    ProfileLikelihood(std::span<const double> x, std::span<const double> gaps) {
        double m = 0.0;
        for (double v : x) m += v;
        centre_ = m / static_cast<double>(x.size());
        std::vector<std::size_t> order(gaps.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gaps[a] < gaps[b]; });
        for (std::size_t i : order) {
            if (groups_.empty() || groups_.back().dt != gaps[i]) groups_.push_back(Group{gaps[i]});
            Group& g = groups_.back();
            const double y = x[i + 1] - centre_;
            const double z = x[i] - centre_;
            g.n += 1.0;
            g.sy += y;
            g.sz += z;
            g.syy += y * y;
            g.szz += z * z;
            g.syz += y * z;
        }
        n_ = static_cast<double>(gaps.size());
    }

    [[nodiscard]] Profile operator()(double kappa) const {
        double sbb = 0.0, sby = 0.0, slogw = 0.0;
        for (const Group& g : groups_) {
            const double a = std::exp(-kappa * g.dt);
            const double b = -std::expm1(-kappa * g.dt);
            const double w = -std::expm1(-2.0 * kappa * g.dt) / (2.0 * kappa);
            sbb += g.n * b * b / w;
            sby += b * (g.sy - a * g.sz) / w;
            slogw += g.n * std::log(w);
        }
        const double eta = sby / sbb;
        double ss = 0.0;
        for (const Group& g : groups_) {
            const double a = std::exp(-kappa * g.dt);
            const double b = -std::expm1(-kappa * g.dt);
            const double w = -std::expm1(-2.0 * kappa * g.dt) / (2.0 * kappa);
            const double rr = g.syy - 2.0 * a * g.syz + a * a * g.szz;
            const double r = g.sy - a * g.sz;
            ss += (rr - 2.0 * eta * b * r + g.n * eta * eta * b * b) / w;
        }
        Profile p;
        p.eta = eta + centre_;
        p.sigma2 = std::max(ss, 0.0) / n_;
        p.ll = -0.5 * n_ * std::log(2.0 * std::numbers::pi * p.sigma2) - 0.5 * slogw - 0.5 * n_;
        if (!std::isfinite(p.ll)) p.ll = -std::numeric_limits<double>::infinity();
        return p;
    }

private:
    struct Group {
        double dt = 0.0;
        double n = 0.0, sy = 0.0, sz = 0.0, syy = 0.0, szz = 0.0, syz = 0.0;
    };
    std::vector<Group> groups_;
    double centre_ = 0.0;
    double n_ = 0.0;
};

}  // namespace detail

struct MleConfig {
    int scan_points = 80;
    double kappa_min_horizons = 1e-3;  ///< lower scan bound: this many inverse sample spans
    double kappa_max_steps = 10.0;     ///< upper scan bound: kappa * median gap
};

/// Exact discrete-time MLE of (kappa, eta, sigma). `gaps[i]` is the time
/// between x[i] and x[i+1].
inline MleResult mle_fit(std::span<const double> x, std::span<const double> gaps, const MleConfig& cfg = {}) {
    if (x.size() < 3) throw DataError("mle_fit: need at least 3 observations");
    if (gaps.size() + 1 != x.size()) throw DataError("mle_fit: need one gap per transition");
    for (double g : gaps)
        if (!(g > 0.0)) throw DataError("mle_fit: gaps must be positive");
    {
        const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
        if (*mx - *mn <= 0.0) throw DataError("mle_fit: degenerate series (zero variance)");
    }
    double span = 0.0;
    for (double g : gaps) span += g;
    std::vector<double> sorted_gaps(gaps.begin(), gaps.end());
    std::nth_element(sorted_gaps.begin(), sorted_gaps.begin() + sorted_gaps.size() / 2, sorted_gaps.end());
    const double median_gap = sorted_gaps[sorted_gaps.size() / 2];

    const double lk_lo = std::log(cfg.kappa_min_horizons / span);
    const double lk_hi = std::log(cfg.kappa_max_steps / median_gap);
    const detail::ProfileLikelihood profile(x, gaps);
    const int n = std::max(cfg.scan_points, 10);
    std::vector<double> grid(n), ll(n);
    for (int i = 0; i < n; ++i) {
        grid[i] = lk_lo + (lk_hi - lk_lo) * i / (n - 1);
        ll[i] = profile(std::exp(grid[i])).ll;
    }
    const int best = static_cast<int>(std::max_element(ll.begin(), ll.end()) - ll.begin());
    if (!std::isfinite(ll[best])) throw ConvergenceError("mle_fit: likelihood not finite anywhere on the scan");
    const double a = grid[std::max(best - 1, 0)];
    const double b = grid[std::min(best + 1, n - 1)];
    auto neg = [&](double lk) { return -profile(std::exp(lk)).ll; };
    std::uintmax_t iters = 200;
    const auto [lk, nll] = boost::math::tools::brent_find_minima(neg, a, b, 52, iters);
    if (iters >= 200) throw ConvergenceError("mle_fit: Brent search did not converge");

    const double kappa = std::exp(lk);
    const detail::Profile p = profile(kappa);
    MleResult r;
    r.kappa_hat = kappa;
    r.eta_hat = p.eta;
    r.sigma_hat = std::sqrt(p.sigma2);
    r.log_likelihood = -nll;
    r.n_transitions = gaps.size();
    r.kappa_at_lower_bound = best == 0;
    if (!(r.sigma_hat > 0.0) || !std::isfinite(r.eta_hat)) throw ConvergenceError("mle_fit: degenerate optimum");
    return r;
}

/// Uniform-gap convenience overload.
inline MleResult mle_fit(std::span<const double> x, double dt, const MleConfig& cfg = {}) {
    std::vector<double> gaps(x.size() > 0 ? x.size() - 1 : 0, dt);
    return mle_fit(x, gaps, cfg);
}

/// OU sample on the given gap pattern, x_0 drawn from the stationary law.
template <typename Normal>
std::vector<double> simulate_on_gaps(const OuParams& p, std::span<const double> gaps, Normal& z) {
    std::vector<double> x(gaps.size() + 1);
    x[0] = p.eta + p.stationary_sd() * z();
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        const double a = std::exp(-p.kappa * gaps[i]);
        const double sd = p.sigma * std::sqrt(-std::expm1(-2.0 * p.kappa * gaps[i]) / (2.0 * p.kappa));
        x[i + 1] = p.eta + (x[i] - p.eta) * a + sd * z();
    }
    return x;
}

// ---------------------------------------------------------------------------
// Parametric bootstrap

struct BootstrapConfig {
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    double level = 0.95;
    MleConfig mle;
};

struct BootstrapResult {
    Interval kappa, eta, sigma;
    std::vector<OuParams> draws;  ///< successful refits, in sample order
    std::size_t failures = 0;
};

/// Refits the MLE on `samples` simulated paths with the estimated parameters
/// and the data's gap pattern; percentile intervals per parameter.
inline BootstrapResult bootstrap_ci(const OuParams& estimate, std::span<const double> gaps,
                                    const BootstrapConfig& cfg = {}) {
    estimate.validate();
    if (cfg.samples < 100) throw DomainError("bootstrap_ci: need at least 100 samples");
    struct Slot {
        OuParams p;
        bool ok = false;
    };
    std::vector<Slot> slots(cfg.samples);
    parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) {
        rng::Gaussian z(rng::make_engine(cfg.seed, i));
        const auto x = simulate_on_gaps(estimate, gaps, z);
        try {
            slots[i].p = mle_fit(x, gaps, cfg.mle).params();
            slots[i].ok = true;
        } catch (const std::runtime_error&) {
            slots[i].ok = false;
        }
    });
    BootstrapResult r;
    std::vector<double> k, e, s;
    for (const auto& slot : slots) {
        if (!slot.ok) {
            ++r.failures;
            continue;
        }
        r.draws.push_back(slot.p);
        k.push_back(slot.p.kappa);
        e.push_back(slot.p.eta);
        s.push_back(slot.p.sigma);
    }
    if (static_cast<double>(r.failures) >= 0.01 * static_cast<double>(cfg.samples))
        throw ConvergenceError("bootstrap_ci: " + std::to_string(r.failures) + " of " +
                               std::to_string(cfg.samples) + " refits failed (limit 1%)");
    const double lo = 0.5 * (1.0 - cfg.level);
    const double hi = 1.0 - lo;
    r.kappa = {quantile(k, lo), quantile(k, hi)};
    r.eta = {quantile(e, lo), quantile(e, hi)};
    r.sigma = {quantile(s, lo), quantile(s, hi)};
    return r;
}

/// Time gaps between successive observations, in years.
enum class TimeMode { Calendar, Trading };

inline std::vector<double> gaps_for(const PriceSeries& s, TimeMode mode, double bar_years = kHalfHourYears) {
    std::vector<double> g(s.size() > 0 ? s.size() - 1 : 0);
    for (std::size_t i = 1; i < s.size(); ++i)
        g[i - 1] = mode == TimeMode::Trading
                       ? bar_years
                       : static_cast<double>(s.timestamps[i].epoch_seconds - s.timestamps[i - 1].epoch_seconds) /
                             kSecondsPerYear;
    return g;
}

}  // namespace ou_statarb::calib
