#pragma once

// End-to-end protocol: clean -> calibrate in-sample -> bootstrap -> optimal
// bands per leverage -> out-of-sample backtest, with report emission.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ou_statarb/calibration.hpp"
#include "ou_statarb/errors.hpp"
#include "ou_statarb/ou_analytics.hpp"
#include "ou_statarb/parallel.hpp"
#include "ou_statarb/random.hpp"
#include "ou_statarb/report.hpp"
#include "ou_statarb/simulation.hpp"
#include "ou_statarb/strategy.hpp"

namespace ou_statarb::pipeline {

using json = nlohmann::ordered_json;

/// Failure inside a named pipeline stage.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(what), stage_(std::move(stage)) {}
    [[nodiscard]] const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
    std::string data_path;
    std::string split;  ///< first OS timestamp; empty puts 3/4 of the span in-sample
    std::string session_start = "09:00";
    std::string session_end = "16:00";
    double stop_loss = -1.96;
    std::string cost_mode = "estimated";  ///< estimated | fixed
    double cost_sigma = 0.0933;           ///< used when cost_mode is fixed, Sigma units
    std::vector<std::string> leverages{"1", "10", "opt"};
    std::uint64_t seed = 1;
    std::size_t bootstrap_samples = 10000;       ///< 0 skips the parameter bootstrap
    std::size_t band_bootstrap_samples = 1000;   ///< 0 skips band/return CIs
    int band_bootstrap_resolution = 60;
    int grid_resolution = 200;
    double u_max = 3.0;
    std::string time_mode = "calendar";  ///< calendar | trading
    double bar_minutes = 30.0;
    bool filters = true;
    bool short_side = false;
    bool sweep = false;
    std::string output_dir;
    unsigned workers = 0;

    void validate() const {
        if (!(stop_loss < 0.0)) throw BandError("config: stop_loss must be negative");
        if (cost_mode != "estimated" && cost_mode != "fixed")
            throw DataError("config: cost_mode must be 'estimated' or 'fixed'");
        if (time_mode != "calendar" && time_mode != "trading")
            throw DataError("config: time_mode must be 'calendar' or 'trading'");
        if (leverages.empty()) throw DataError("config: at least one leverage row is required");
        if (bootstrap_samples != 0 && bootstrap_samples < 100)
            throw DataError("config: bootstrap_samples must be 0 or at least 100");
        if (!(bar_minutes > 0.0)) throw DataError("config: bar_minutes must be positive");
    }
};

inline void to_json(json& j, const PipelineConfig& c) {
    j = json{{"data", c.data_path},
             {"split", c.split},
             {"session_start", c.session_start},
             {"session_end", c.session_end},
             {"stop_loss", c.stop_loss},
             {"cost_mode", c.cost_mode},
             {"cost_sigma", c.cost_sigma},
             {"leverages", c.leverages},
             {"seed", c.seed},
             {"bootstrap_samples", c.bootstrap_samples},
             {"band_bootstrap_samples", c.band_bootstrap_samples},
             {"band_bootstrap_resolution", c.band_bootstrap_resolution},
             {"grid_resolution", c.grid_resolution},
             {"u_max", c.u_max},
             {"time_mode", c.time_mode},
             {"bar_minutes", c.bar_minutes},
             {"filters", c.filters},
             {"short_side", c.short_side},
             {"sweep", c.sweep},
             {"output_dir", c.output_dir},
             {"workers", c.workers}};
}

/// Reads keys present in `j`; absent keys keep their current values.
inline void update_from_json(PipelineConfig& c, const json& j) {
    static const std::vector<std::string> known{
        "data",        "split",      "session_start",  "session_end",      "stop_loss",
        "cost_mode",   "cost_sigma", "leverages",      "seed",             "bootstrap_samples",
        "band_bootstrap_samples",    "band_bootstrap_resolution",         "grid_resolution",
        "u_max",       "time_mode",  "bar_minutes",    "filters",          "short_side",
        "sweep",       "output_dir", "workers"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw DataError("config: unknown key '" + key + "'");
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("data", c.data_path);
    get("split", c.split);
    get("session_start", c.session_start);
    get("session_end", c.session_end);
    get("stop_loss", c.stop_loss);
    get("cost_mode", c.cost_mode);
    get("cost_sigma", c.cost_sigma);
    if (j.contains("leverages")) {
        c.leverages.clear();
        for (const auto& v : j.at("leverages")) {
            if (v.is_string()) {
                c.leverages.push_back(v.get<std::string>());
            } else {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
                c.leverages.push_back(buf);
            }
        }
    }
    get("seed", c.seed);
    get("bootstrap_samples", c.bootstrap_samples);
    get("band_bootstrap_samples", c.band_bootstrap_samples);
    get("band_bootstrap_resolution", c.band_bootstrap_resolution);
    get("grid_resolution", c.grid_resolution);
    get("u_max", c.u_max);
    get("time_mode", c.time_mode);
    get("bar_minutes", c.bar_minutes);
    get("filters", c.filters);
    get("short_side", c.short_side);
    get("sweep", c.sweep);
    get("output_dir", c.output_dir);
    get("workers", c.workers);
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path);
    PipelineConfig c;
    try {
        update_from_json(c, json::parse(in));
    } catch (const json::exception& e) {
        throw DataError("config " + path + ": " + e.what());
    }
    return c;
}

/// Hash of the canonical config; seeds included, output location excluded.
inline std::string config_hash(const PipelineConfig& c) {
    json j = c;
    j.erase("output_dir");
    j.erase("workers");
    return report::fnv1a_hex(j.dump());
}

inline Leverage parse_leverage(const std::string& s) {
    if (s == "opt" || s == "optimal") return Leverage::kelly();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || !(v >= 0.0)) throw BandError("leverage must be a non-negative number or 'opt'");
    return Leverage::fixed(v);
}

inline int parse_clock(const std::string& hhmm) {
    int h = 0, m = 0;
    if (std::sscanf(hhmm.c_str(), "%d:%d", &h, &m) != 2 || h < 0 || h > 24 || m < 0 || m > 59)
        throw DataError("bad clock time '" + hhmm + "' (want HH:MM)");
    return h * 60 + m;
}

// ---------------------------------------------------------------------------
// Synthetic quotes

struct SyntheticQuotes {
    OuParams params;               ///< log-ratio dynamics, time in years
    std::string start = "2020-01-06T00:00:00";
    double bar_minutes = 30.0;
    std::size_t bars = 2908;
    double cost = 0.0;             ///< round-trip cost c = sum of ln(ask/bid), log units
    std::uint64_t seed = 1;
    bool sessions = false;         ///< weekday bars inside [session_start, session_end] only
    std::string session_start = "09:00";
    std::string session_end = "16:00";
};

/// Bars whose mid ratio is an exact OU sample in calendar time, either round
/// the clock or restricted to weekday sessions (the process keeps running
/// across the overnight and weekend gaps). Leg 2 is pinned at 100; both legs
/// carry the same relative spread.
inline calib::PriceSeries synthesize_quotes(const SyntheticQuotes& q) {
    q.params.validate();
    if (q.bars < 2) throw DataError("synthesize_quotes: need at least two bars");
    if (!(q.cost >= 0.0)) throw DataError("synthesize_quotes: cost must be non-negative");
    const calib::Timestamp t0 = calib::parse_timestamp(q.start);
    const auto step_s = static_cast<std::int64_t>(std::llround(q.bar_minutes * 60.0));
    if (step_s <= 0) throw DataError("synthesize_quotes: bar length must be positive");
    const int open = parse_clock(q.session_start), close = parse_clock(q.session_end);
    if (q.sessions && close < open) throw DataError("synthesize_quotes: session ends before it starts");
    auto in_session = [&](std::int64_t t) {
        if (!q.sessions) return true;
        const std::int64_t day = t >= 0 ? t / 86400 : (t - 86399) / 86400;
        const int weekday = static_cast<int>(((day + 4) % 7 + 7) % 7);  // 0 = Sunday
        const int minute = static_cast<int>((t - day * 86400) / 60);
        return weekday != 0 && weekday != 6 && minute >= open && minute <= close;
    };

    const double dt = static_cast<double>(step_s) / calib::kSecondsPerYear;
    const sim::OuStepper bar_step(q.params, dt);
    rng::Gaussian z(rng::make_engine(q.seed, 0));
    // ask/bid = e^{c/2} per leg, with mid = (bid + ask) / 2
    const double k = std::exp(0.5 * q.cost);
    const double bid_of_mid = 2.0 / (1.0 + k);
    calib::PriceSeries s;
    double x = q.params.eta + q.params.stationary_sd() * z();
    std::int64_t t = t0.epoch_seconds, last = t;
    while (s.size() < q.bars) {
        if (in_session(t)) {
            if (!s.empty()) {
                const std::int64_t gap = t - last;
                x = gap == step_s ? bar_step(x, z())
                                  : sim::OuStepper(q.params, static_cast<double>(gap) / calib::kSecondsPerYear)(x, z());
            }
            last = t;
            const double m1 = 100.0 * std::exp(x);
            const double m2 = 100.0;
            calib::Timestamp ts;
            ts.epoch_seconds = t;
            ts.text = calib::format_timestamp(t);
            ts.minute_of_day = static_cast<int>(((t % 86400) + 86400) % 86400 / 60);
            s.push_back(std::move(ts), m1 * bid_of_mid, m1 * bid_of_mid * k, m2 * bid_of_mid, m2 * bid_of_mid * k);
        }
        t += step_s;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Results

struct LeverageRow {
    std::string label;
    Leverage leverage;
    BandOptimum optimum;
    double mu_short = 0.0;  ///< mirrored strategy, equal to mu by symmetry
    calib::Interval d_ci, u_ci, mu_ci, f_ci;
    std::size_t ci_samples = 0;
    sim::BandLevels levels{};  ///< physical log-ratio levels with the IS estimate
    std::optional<sim::BacktestResult> os;
};

struct PipelineResult {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::size_t n_raw = 0, n_clean = 0, n_is = 0, n_is_session = 0, n_os = 0;
    std::vector<std::string> removed_extreme, removed_antipersistent;  ///< timestamps
    calib::MleResult mle;
    std::optional<calib::BootstrapResult> bootstrap;
    calib::CostSummary cost;
    double c = 0.0;  ///< cost used for the bands, log units
    double stop_loss = 0.0;
    std::vector<LeverageRow> rows;
    std::vector<std::vector<double>> sweep;  ///< c/Sigma, d, u, mu, f per leverage row 0
    bool os_present = false;
    json report;
    std::string table1, table2;
};

// ---------------------------------------------------------------------------
// Stages

namespace detail {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

inline std::vector<std::string> stamps(const calib::PriceSeries& s, const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(s.timestamps[i].text);
    return out;
}

inline calib::Interval ci_of(std::vector<double> v) {
    if (v.empty()) return {};
    return {calib::quantile(v, 0.025), calib::quantile(v, 0.975)};
}

}  // namespace detail

inline std::string render_table1(const PipelineResult& r) {
    report::TextTable t({"parameter", "estimate", "95% CI"});
    auto ci = [&](auto member) {
        if (!r.bootstrap) return std::string("-");
        const calib::Interval& i = (*r.bootstrap).*member;
        return report::interval(i.lower, i.upper, 4);
    };
    t.add_row({"kappa", report::num(r.mle.kappa_hat, 4), ci(&calib::BootstrapResult::kappa)});
    t.add_row({"eta", report::num(r.mle.eta_hat, 5), ci(&calib::BootstrapResult::eta)});
    t.add_row({"sigma", report::num(r.mle.sigma_hat, 5), ci(&calib::BootstrapResult::sigma)});
    t.add_row({"theta", report::num(r.mle.params().theta(), 5), "-"});
    t.add_row({"Sigma", report::num(r.mle.params().stationary_sd(), 5), "-"});
    return t.render();
}

inline std::string render_table2(const PipelineResult& r) {
    report::TextTable t({"f", "d", "CI", "u", "CI", "mu", "CI", "2mu", "mu_OS"});
    for (const auto& row : r.rows) {
        const auto& o = row.optimum;
        const std::string f = row.leverage.optimal ? "opt (" + report::num(o.f, 2) + ")" : row.label;
        t.add_row({f, report::num(o.d, 3), report::interval(row.d_ci.lower, row.d_ci.upper),
                   report::num(o.u, 3), report::interval(row.u_ci.lower, row.u_ci.upper), report::num(o.mu, 3),
                   report::interval(row.mu_ci.lower, row.mu_ci.upper), report::num(2.0 * o.mu, 3),
                   row.os ? report::num(row.os->mu_t, 3) : std::string("absent")});
    }
    return t.render();
}

inline json trade_summary(const sim::BacktestResult& b) {
    return json{{"trades", b.trades.size()}, {"n_plus", b.n_plus},         {"n_minus", b.n_minus},
                {"alpha_plus", b.alpha_plus}, {"alpha_minus", b.alpha_minus}, {"log_wealth", b.log_wealth},
                {"horizon_years", b.horizon}, {"mu_t", b.mu_t},             {"ruined", b.ruined}};
}

inline std::string trade_log_csv(const sim::BacktestResult& b) {
    std::ostringstream out;
    out.precision(12);
    out << "side,entry_time,exit_time,entry_level,exit_level,exit,wealth_factor\n";
    for (const auto& t : b.trades)
        out << (t.side == sim::Side::Long ? "long" : "short") << ',' << t.entry_time << ',' << t.exit_time << ','
            << t.entry_level << ',' << t.exit_level << ',' << (t.exit == sim::ExitType::Target ? "target" : "stop")
            << ',' << t.wealth_factor << '\n';
    return out.str();
}

/// Writes everything gathered so far; used on success and after a failure.
inline void emit_report(const PipelineResult& r, const std::filesystem::path& dir) {
    if (dir.empty()) return;
    report::write_file(dir / "report.json", r.report.dump(2) + "\n");
    if (!r.table1.empty()) report::write_file(dir / "table1.txt", r.table1);
    if (!r.table2.empty()) report::write_file(dir / "table2.txt", r.table2);
    if (!r.cost.bin_counts.empty()) {
        std::vector<double> lo, hi, count;
        for (std::size_t b = 0; b < r.cost.bin_counts.size(); ++b) {
            lo.push_back(r.cost.bin_edges[b]);
            hi.push_back(r.cost.bin_edges[b + 1]);
            count.push_back(static_cast<double>(r.cost.bin_counts[b]));
        }
        report::write_file(dir / "cost_histogram.dat", report::columns({"c_lo_sigma", "c_hi_sigma", "count"}, {lo, hi, count}));
    }
    if (!r.sweep.empty()) {
        std::vector<std::vector<double>> cols(5);
        for (const auto& row : r.sweep)
            for (std::size_t j = 0; j < 5; ++j) cols[j].push_back(row[j]);
        report::write_file(dir / "sweep.dat", report::columns({"c_sigma", "d", "u", "mu", "f"}, cols));
    }
    for (const auto& row : r.rows)
        if (row.os) report::write_file(dir / ("trades_f" + row.label + ".csv"), trade_log_csv(*row.os));
}

/// Runs the whole protocol on `data`. Output files are written when
/// cfg.output_dir is set, including after a stage failure.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const calib::PriceSeries& data) {
    PipelineResult r;
    r.config_hash = config_hash(cfg);
    r.seed = cfg.seed;
    r.stop_loss = cfg.stop_loss;
    r.report["config_hash"] = r.config_hash;
    r.report["seed"] = cfg.seed;
    r.report["config"] = cfg;
    const std::filesystem::path out_dir = cfg.output_dir;
    try {
        detail::stage("config", [&] { cfg.validate(); });
        r.n_raw = data.size();

        // clean
        calib::PriceSeries clean = detail::stage("clean", [&] {
            if (data.size() < 3) throw DataError("need at least 3 observations");
            if (!cfg.filters) return data;
            auto ex = calib::filter_extreme_outliers(data);
            r.removed_extreme = detail::stamps(data, ex.removed);
            auto ap = calib::filter_antipersistent_outliers(ex.series);
            r.removed_antipersistent = detail::stamps(ex.series, ap.removed);
            return ap.series;
        });
        r.n_clean = clean.size();
        r.report["clean"] = {{"rows_in", r.n_raw},
                             {"rows_out", r.n_clean},
                             {"removed_extreme", r.removed_extreme},
                             {"removed_antipersistent", r.removed_antipersistent}};

        // split
        calib::PriceSeries is, os;
        detail::stage("split", [&] {
            const auto first = clean.timestamps.front().epoch_seconds;
            const auto last = clean.timestamps.back().epoch_seconds;
            std::int64_t cut = 0;
            if (cfg.split.empty()) {
                cut = first + (last - first) * 3 / 4;
            } else {
                cut = calib::parse_timestamp(cfg.split).epoch_seconds;
                if (cut <= first || cut > last + 1)
                    throw DataError("split instant " + cfg.split + " is outside the data range");
            }
            std::vector<std::size_t> a, b;
            for (std::size_t i = 0; i < clean.size(); ++i) (clean.timestamps[i].epoch_seconds < cut ? a : b).push_back(i);
            is = clean.subset(a);
            os = clean.subset(b);
        });
        r.n_is = is.size();
        r.n_os = os.size();

        // calibrate on the session window
        calib::PriceSeries session = detail::stage("calibrate", [&] {
            const int from = parse_clock(cfg.session_start), to = parse_clock(cfg.session_end);
            std::vector<std::size_t> keep;
            for (std::size_t i = 0; i < is.size(); ++i) {
                const int m = is.timestamps[i].minute_of_day;
                if (m >= from && m <= to) keep.push_back(i);
            }
            auto s = is.subset(keep);
            if (s.size() < 3) throw DataError("fewer than 3 in-sample observations inside the session window");
            return s;
        });
        r.n_is_session = session.size();
        const auto mode = cfg.time_mode == "trading" ? calib::TimeMode::Trading : calib::TimeMode::Calendar;
        const auto gaps = calib::gaps_for(session, mode, cfg.bar_minutes * 60.0 / calib::kSecondsPerYear);
        r.mle = detail::stage("calibrate", [&] { return calib::mle_fit(session.log_ratios(), gaps); });
        const OuParams params = r.mle.params();
        r.report["calibration"] = {{"rows_in_sample", r.n_is},
                                   {"rows_in_session", r.n_is_session},
                                   {"time_mode", cfg.time_mode},
                                   {"kappa", r.mle.kappa_hat},
                                   {"eta", r.mle.eta_hat},
                                   {"sigma", r.mle.sigma_hat},
                                   {"theta", params.theta()},
                                   {"Sigma", params.stationary_sd()},
                                   {"log_likelihood", r.mle.log_likelihood},
                                   {"kappa_at_lower_bound", r.mle.kappa_at_lower_bound}};

        if (cfg.bootstrap_samples > 0) {
            r.bootstrap = detail::stage("bootstrap", [&] {
                calib::BootstrapConfig bc;
                bc.samples = cfg.bootstrap_samples;
                bc.seed = rng::stream_seed(cfg.seed, 1);
                bc.workers = cfg.workers;
                return calib::bootstrap_ci(params, gaps, bc);
            });
            auto iv = [](const calib::Interval& i) { return json::array({i.lower, i.upper}); };
            r.report["bootstrap"] = {{"samples", cfg.bootstrap_samples},
                                     {"failures", r.bootstrap->failures},
                                     {"kappa_ci", iv(r.bootstrap->kappa)},
                                     {"eta_ci", iv(r.bootstrap->eta)},
                                     {"sigma_ci", iv(r.bootstrap->sigma)}};
        }
        r.table1 = render_table1(r);

        // costs
        detail::stage("cost", [&] {
            r.cost = calib::estimate_cost(session, params.stationary_sd());
            r.c = cfg.cost_mode == "fixed" ? cfg.cost_sigma * params.stationary_sd() : r.cost.mean;
        });
        r.report["cost"] = {{"mode", cfg.cost_mode},
                            {"mean_c", r.cost.mean},
                            {"mean_c_sigma_units", r.cost.mean_sigma_units},
                            {"c_used", r.c},
                            {"c_used_sigma_units", r.c / params.stationary_sd()}};

        // bands
        OptimizerConfig oc;
        oc.grid_resolution = cfg.grid_resolution;
        oc.u_max = cfg.u_max;
        oc.workers = cfg.workers;
        detail::stage("bands", [&] {
            for (const auto& label : cfg.leverages) {
                LeverageRow row;
                row.label = label;
                row.leverage = parse_leverage(label);
                row.optimum = optimize_bands(cfg.stop_loss, r.c, params, row.leverage, oc);
                if (!row.optimum.no_trade) {
                    row.mu_short = short_side_return({cfg.stop_loss, row.optimum.d, row.optimum.u, r.c, row.optimum.f},
                                                     params);
                    row.levels = sim::band_levels({cfg.stop_loss, row.optimum.d, row.optimum.u, r.c, row.optimum.f},
                                                  params);
                }
                r.rows.push_back(std::move(row));
            }
        });

        // band and return CIs: refit the bands on bootstrap parameter draws,
        // holding the absolute cost fixed
        if (r.bootstrap && cfg.band_bootstrap_samples > 0) {
            detail::stage("band-bootstrap", [&] {
                const std::size_t m = std::min(cfg.band_bootstrap_samples, r.bootstrap->draws.size());
                OptimizerConfig bc = oc;
                bc.grid_resolution = cfg.band_bootstrap_resolution;
                bc.tolerance = 1e-4;
                bc.workers = 1;
                for (auto& row : r.rows) {
                    std::vector<BandOptimum> opt(m);
                    parallel_for(m, cfg.workers, [&](std::size_t i) {
                        opt[i] = optimize_bands(cfg.stop_loss, r.c, r.bootstrap->draws[i], row.leverage, bc);
                    });
                    std::vector<double> d, u, mu, f;
                    for (const auto& o : opt) {
                        if (o.no_trade) continue;
                        d.push_back(o.d);
                        u.push_back(o.u);
                        mu.push_back(o.mu);
                        f.push_back(o.f);
                    }
                    row.d_ci = detail::ci_of(d);
                    row.u_ci = detail::ci_of(u);
                    row.mu_ci = detail::ci_of(mu);
                    row.f_ci = detail::ci_of(f);
                    row.ci_samples = d.size();
                }
            });
        }

        // out-of-sample backtest on all bars
        r.os_present = os.size() >= 2;
        if (r.os_present) {
            detail::stage("backtest", [&] {
                const auto t = os.times_years();
                const auto x = os.log_ratios();
                sim::BacktestConfig bt;
                bt.short_side = cfg.short_side;
                for (auto& row : r.rows) {
                    if (row.optimum.no_trade) continue;
                    row.os = sim::backtest(t, x, {cfg.stop_loss, row.optimum.d, row.optimum.u, r.c, row.optimum.f},
                                           params, bt);
                }
            });
        }

        json rows = json::array();
        for (const auto& row : r.rows) {
            const auto& o = row.optimum;
            auto iv = [](const calib::Interval& i) { return json::array({i.lower, i.upper}); };
            json jr{{"leverage", row.label},
                    {"f", o.f},
                    {"d", o.d},
                    {"u", o.u},
                    {"mu", o.mu},
                    {"mu_short", row.mu_short},
                    {"mu_both_sides", o.mu + row.mu_short},
                    {"p_plus", o.p_plus},
                    {"trade_length", o.trade_length},
                    {"no_trade", o.no_trade},
                    {"hit_box", o.hit_box},
                    {"d_ci", iv(row.d_ci)},
                    {"u_ci", iv(row.u_ci)},
                    {"mu_ci", iv(row.mu_ci)},
                    {"f_ci", iv(row.f_ci)},
                    {"ci_samples", row.ci_samples},
                    {"levels", {{"stop", row.levels.stop}, {"entry", row.levels.entry}, {"target", row.levels.target}}}};
            jr["out_of_sample"] = row.os ? trade_summary(*row.os) : json(nullptr);
            rows.push_back(jr);
        }
        r.report["bands"] = {{"stop_loss", cfg.stop_loss}, {"rows", rows}};
        r.report["out_of_sample"] = r.os_present ? json{{"rows", r.n_os}, {"short_side", cfg.short_side}}
                                                 : json(nullptr);
        r.table2 = render_table2(r);

        if (cfg.sweep && !r.rows.empty()) {
            detail::stage("sweep", [&] {
                const double sd = params.stationary_sd();
                for (int k = 0; k <= 40; ++k) {
                    const double cs = 0.02 * k;
                    const auto o = optimize_bands(cfg.stop_loss, cs * sd, params, r.rows.front().leverage, oc);
                    r.sweep.push_back({cs, o.d, o.u, o.mu, o.f});
                }
            });
        }
    } catch (const StageError& e) {
        r.report["error"] = {{"stage", e.stage()}, {"message", e.what()}};
        try {
            emit_report(r, out_dir);
        } catch (const std::exception&) {
        }
        throw;
    }
    detail::stage("report", [&] { emit_report(r, out_dir); });
    return r;
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
    const calib::PriceSeries data = detail::stage("load", [&] { return calib::read_csv(cfg.data_path); });
    return run_pipeline(cfg, data);
}

}  // namespace ou_statarb::pipeline
