// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ou_statarb.hpp"

using namespace ou_statarb;

namespace {

const OuParams kRef{18.51, -0.0094, 0.0893};
const double kSigma = kRef.stationary_sd();
const double kCost = 0.0933 * kSigma;
const double kStop = -1.96;

double rel(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        notes.push_back((ok ? "  ok   " : "  FAIL ") + what);
    }
    void note(const std::string& what) { notes.push_back("       " + what); }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome special_functions() {
    Outcome o;
    double worst = 0.0, worst_parity = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double x = -3.0 + 6.0 * i / 99.0;
        worst = std::max({worst, rel(specialfn::phi1(x), oracle::phi1(x)), rel(specialfn::psi1(x), oracle::psi1(x)),
                          rel(specialfn::phi2(x), oracle::phi2(x)), rel(specialfn::psi2(x), oracle::psi2(x))});
        worst_parity = std::max({worst_parity, rel(specialfn::phi1(-x), -specialfn::phi1(x)),
                                 rel(specialfn::phi2(-x), -specialfn::phi2(x)),
                                 rel(specialfn::psi1(-x), specialfn::psi1(x)),
                                 rel(specialfn::psi2(-x), specialfn::psi2(x))});
    }
    o.check(worst < 1e-9, fmt("series vs quadrature, 100 points in [-3,3]: max rel err %.2e (< 1e-9)", worst));
    o.check(worst_parity <= 1e-12, fmt("parity identities: max rel err %.2e (<= 1e-12)", worst_parity));
    const double target = -0.25 * std::sqrt(std::numbers::pi) * std::numbers::ln2;
    const double i = oracle::decomposition_constant();
    o.check(std::abs(i - target) < 1e-6, fmt("decomposition constant %.10f vs %.10f", i, target));
    return o;
}

Outcome trade_length_identity() {
    Outcome o;
    const int n = 20;
    double worst = 0.0;
    int points = 0;
    for (int i = 0; i < n; ++i) {
        const double l = -3.0 + 2.5 * i / (n - 1);
        for (int j = 1; j <= n; ++j) {
            const double d = l + (0.0 - l) * j / n;
            for (int k = 1; k <= n; ++k) {
                const double u = d + (3.0 - d) * k / n;
                const auto s = ou::exit_stats(l, d, u, 1.0);
                const double assembled =
                    s.p_plus * (s.e_tau_plus_exit + s.e_fpt_down) + s.p_minus * (s.e_tau_minus_exit + s.e_fpt_up);
                worst = std::max(worst, rel(s.e_trade_length, assembled));
                ++points;
            }
        }
    }
    o.check(points == 8000 && worst < 1e-10, fmt("%d grid points: max rel err %.2e (< 1e-10)", points, worst));
    return o;
}

Outcome monte_carlo_oracle() {
    Outcome o;
    const double triples[][3] = {{-1.96, -0.87, 0.58}, {-1.5, -0.4, 0.9}, {-2.5, -1.0, 0.2}};
    sim::ExitOracleConfig cfg;
    cfg.n_paths = 100000;
    cfg.dt = 1e-3;
    cfg.seed = 2024;
    const OuParams unit{1.0, 0.0, std::numbers::sqrt2};
    for (const auto& t : triples) {
        const auto a = ou::exit_stats(t[0], t[1], t[2], 1.0);
        const auto r = sim::mc_exit_oracle(t[0], t[1], t[2], unit, cfg);
        const std::pair<const char*, std::pair<double, std::pair<sim::McEstimate, sim::McEstimate>>> rows[] = {
            {"p+", {a.p_plus, {r.coarse.p_plus, r.fine.p_plus}}},
            {"E[tau+ exit]", {a.e_tau_plus_exit, {r.coarse.e_tau_plus_exit, r.fine.e_tau_plus_exit}}},
            {"E[tau- exit]", {a.e_tau_minus_exit, {r.coarse.e_tau_minus_exit, r.fine.e_tau_minus_exit}}},
            {"FPT u->d", {a.e_fpt_down, {r.coarse.e_fpt_down, r.fine.e_fpt_down}}},
            {"FPT l->d", {a.e_fpt_up, {r.coarse.e_fpt_up, r.fine.e_fpt_up}}},
        };
        o.note(fmt("(l,d,u) = (%.2f, %.2f, %.2f), censored %zu", t[0], t[1], t[2], r.coarse.censored));
        for (const auto& [name, v] : rows) {
            const auto& [exact, est] = v;
            const auto& [coarse, fine] = est;
            const double z = (coarse.mean - exact) / coarse.se;
            const double drift = (fine.mean - coarse.mean) / coarse.se;
            o.check(std::abs(z) < 3.0 && std::abs(drift) < 1.0,
                    fmt("%-13s analytic %.6f  mc %.6f +- %.6f  z %+.2f  halving drift %+.2f SE", name, exact,
                        coarse.mean, coarse.se, z, drift));
        }
    }
    return o;
}

Outcome reference_returns() {
    Outcome o;
    struct Row {
        const char* name;
        Leverage lev;
        double d, u, band_tol, mu, mu_tol, f, f_tol;
    };
    const Row rows[] = {{"f=1", Leverage::fixed(1.0), -0.870, 0.581, 0.02, 0.145, 0.01, 1.0, 0.0},
                        {"f=10", Leverage::fixed(10.0), -0.863, 0.447, 0.03, 1.175, 0.05, 10.0, 0.0},
                        {"opt", Leverage::kelly(), -1.108, 0.302, 0.03, 1.945, 0.1, 28.54, 1.0}};
    o.note(fmt("Sigma = %.6f, c = %.6f (0.0933 Sigma)", kSigma, kCost));
    std::vector<double> ratios;
    for (const auto& r : rows) {
        const auto b = optimize_bands(kStop, kCost, kRef, r.lev);
        o.check(std::abs(b.d - r.d) <= r.band_tol && std::abs(b.u - r.u) <= r.band_tol,
                fmt("%-4s bands (%.4f, %.4f) vs (%.3f, %.3f) +- %.2f", r.name, b.d, b.u, r.d, r.u, r.band_tol));
        if (r.f_tol > 0.0)
            o.check(std::abs(b.f - r.f) <= r.f_tol, fmt("%-4s f* %.3f vs %.2f +- %.1f", r.name, b.f, r.f, r.f_tol));
        o.check(std::abs(b.mu - r.mu) <= r.mu_tol,
                fmt("%-4s mu %.4f vs %.3f +- %.2f (ratio %.3f)", r.name, b.mu, r.mu, r.mu_tol, r.mu / b.mu));
        ratios.push_back(r.mu / b.mu);
    }
    // sensitivity: can any cost reproduce the f=1 return?
    double mu_max = 0.0, c_at = 0.0;
    const auto sens = [&](double cs) { return optimize_bands(kStop, cs * kSigma, kRef, Leverage::fixed(1.0)); };
    o.note("sensitivity of the f=1 row to c (Sigma units):");
    for (double cs : {0.0, 0.02, 0.05, 0.0933, 0.15, 0.25, 0.4}) {
        const auto b = sens(cs);
        if (b.mu > mu_max) {
            mu_max = b.mu;
            c_at = cs;
        }
        o.note(fmt("  c = %.4f  d = %.4f  u = %.4f  mu = %.4f", cs, b.d, b.u, b.mu));
    }
    o.check(mu_max >= 0.145 - 0.01,
            fmt("largest f=1 mu over c >= 0 is %.4f (at c = %.2f Sigma); 0.145 is unreachable for any c >= 0", mu_max, c_at));
    o.note(fmt("reference/computed mu ratios: %.3f %.3f %.3f (a constant factor, not a cost effect)", ratios[0], ratios[1],
               ratios[2]));
    return o;
}

Outcome viable_cost() {
    Outcome o;
    const double c196 = max_viable_cost(kStop).c_star;
    o.check(std::abs(c196 - 0.76) <= 0.01, fmt("c*(-1.96) = %.4f (0.76 +- 0.01)", c196));
    OptimizerConfig cfg;
    cfg.grid_resolution = 80;
    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    int n = 0;
    for (double l = -2.95; l <= -0.1 + 1e-12; l += 0.05, ++n) {
        const double c = max_viable_cost(l, cfg).c_star;
        if (c > prev + 1e-6) monotone = false;
        prev = c;
    }
    o.check(monotone, fmt("c*(l) nonincreasing on %d points in [-2.95, -0.1]", n));
    const double c1 = max_viable_cost(-0.05, cfg).c_star, c2 = max_viable_cost(-0.01, cfg).c_star;
    o.check(c1 < 1e-2 && c2 <= c1, fmt("c*(-0.05) = %.2e, c*(-0.01) = %.2e -> 0", c1, c2));
    return o;
}

Outcome no_stop_loss_limit() {
    Outcome o;
    std::mt19937_64 g(6);
    std::uniform_real_distribution<double> dd(-2.0, -0.05), uu(0.05, 2.0);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double d = dd(g), u = uu(g);
        worst = std::max(worst, rel(long_run_return({-10.0, d, u, kCost, 1.0}, kRef),
                                    no_stop_loss_return(d, u, 1.0, kCost, kRef)));
    }
    o.check(worst < 1e-6, fmt("20 random (d,u) at l = -10, f = 1: max rel err %.2e (< 1e-6)", worst));
    const auto b = optimize_bands(-10.0, kCost, kRef, Leverage::fixed(1.0));
    o.check(std::abs(-b.d - b.u) < 5e-3, fmt("optimum at l = -10: d = %.5f, u = %.5f, | |d| - u | = %.2e", b.d, b.u,
                                               std::abs(-b.d - b.u)));
    return o;
}

Outcome calibration_recovery() {
    Outcome o;
    const std::size_t paths = 100, n_obs = 2908;
    const std::vector<double> gaps(n_obs - 1, calib::kHalfHourYears);
    int in_k = 0, in_e = 0, in_s = 0, basic_k = 0, basic_e = 0, basic_s = 0, self = 0;
    double mean_k = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
        rng::Gaussian z(rng::make_engine(rng::stream_seed(7, p, 0), 0));
        const auto x = calib::simulate_on_gaps(kRef, gaps, z);
        const auto fit = calib::mle_fit(x, gaps);
        calib::BootstrapConfig bc;
        bc.samples = 200;
        bc.seed = rng::stream_seed(7, p, 1);
        const auto ci = calib::bootstrap_ci(fit.params(), gaps, bc);
        auto basic = [](double est, const calib::Interval& i, double v) {
            return 2 * est - i.upper <= v && v <= 2 * est - i.lower;
        };
        in_k += ci.kappa.contains(kRef.kappa);
        in_e += ci.eta.contains(kRef.eta);
        in_s += ci.sigma.contains(kRef.sigma);
        basic_k += basic(fit.kappa_hat, ci.kappa, kRef.kappa);
        basic_e += basic(fit.eta_hat, ci.eta, kRef.eta);
        basic_s += basic(fit.sigma_hat, ci.sigma, kRef.sigma);
        self += ci.kappa.contains(fit.kappa_hat) && ci.eta.contains(fit.eta_hat) && ci.sigma.contains(fit.sigma_hat);
        mean_k += fit.kappa_hat / paths;
    }
    auto within = [](int c) { return c >= 90 && c <= 99; };
    o.note(fmt("span %.3f years, kappa T = %.2f; mean kappa-hat %.2f (true %.2f)",
               gaps.size() * calib::kHalfHourYears, kRef.kappa * gaps.size() * calib::kHalfHourYears, mean_k,
               kRef.kappa));
    o.check(within(in_k), fmt("kappa: true value inside percentile CI on %d/100 paths", in_k));
    o.check(within(in_e), fmt("eta:   true value inside percentile CI on %d/100 paths", in_e));
    o.check(within(in_s), fmt("sigma: true value inside percentile CI on %d/100 paths", in_s));
    o.note(fmt("basic (reflected) intervals: kappa %d, eta %d, sigma %d", basic_k, basic_e, basic_s));
    o.note(fmt("point estimate inside its own CIs on %d/100 paths", self));
    return o;
}

Outcome variance_decay() {
    Outcome o;
    sim::VarianceDecayConfig cfg;
    cfg.n_paths = 500;
    cfg.horizons = {10.0, 31.6, 100.0, 316.0, 1000.0};
    cfg.dt = 2e-3;
    cfg.seed = 88;
    const auto r = sim::variance_decay_study({kStop, -0.870, 0.581, kCost, 1.0}, kRef, cfg);
    for (std::size_t h = 0; h < r.horizons.size(); ++h)
        o.note(fmt("t = %7.1f theta  mean mu %.4f  Var %.4e", cfg.horizons[h], r.mean_mu[h], r.var_mu[h]));
    o.check(r.slope > -1.15 && r.slope < -0.85, fmt("log-log slope %.4f in (-1.15, -0.85)", r.slope));
    const double ratio = r.scaled_var_at_max / r.predicted_coefficient;
    o.check(std::abs(ratio - 1.0) < 0.2, fmt("t Var at 1000 theta %.4e vs leading coefficient %.4e (ratio %.3f)",
                                             r.scaled_var_at_max, r.predicted_coefficient, ratio));
    o.note(fmt("with the reward/length covariance kept the coefficient is %.4e (ratio %.3f)",
               r.renewal_reward_coefficient, r.scaled_var_at_max / r.renewal_reward_coefficient));
    return o;
}

bool wealth_identity(const sim::BacktestResult& r, double* err = nullptr) {
    const double direct = static_cast<double>(r.n_plus) * r.alpha_plus + static_cast<double>(r.n_minus) * r.alpha_minus;
    const double e = std::abs(r.log_wealth - direct) / std::max(1.0, std::abs(direct));
    if (err) *err = e;
    return e <= 1e-12;
}

Outcome backtest_identity() {
    Outcome o;
    const double theta = kRef.theta();
    sim::PathConfig pc;
    pc.params = kRef;
    pc.dt = 1e-3 * theta;
    pc.horizon = 5000.0 * theta;
    pc.seed = 5000;
    pc.x0 = kRef.eta;
    const auto path = sim::simulate_path(pc);
    const BandSpec b{kStop, -0.870, 0.581, kCost, 1.0};
    const auto r = sim::backtest(path, b, kRef);
    double err = 0.0;
    o.check(wealth_identity(r, &err), fmt("ln W_T - (N+ a+ + N- a-) = %.2e relative, %zu trades", err, r.trades.size()));

    // ratio estimator over entry-to-entry cycles: mu = sum R / sum tau
    std::vector<double> reward, length;
    for (std::size_t i = 0; i + 1 < r.trades.size(); ++i) {
        reward.push_back(std::log(r.trades[i].wealth_factor));
        length.push_back(r.trades[i + 1].entry_time - r.trades[i].entry_time);
    }
    const double mu = long_run_return(b, kRef);
    const auto n = static_cast<double>(reward.size());
    double sr = 0, st = 0;
    for (std::size_t i = 0; i < reward.size(); ++i) {
        sr += reward[i];
        st += length[i];
    }
    const double ratio = sr / st, mean_len = st / n;
    double s2 = 0.0;
    for (std::size_t i = 0; i < reward.size(); ++i) s2 += std::pow(reward[i] - ratio * length[i], 2);
    const double se = std::sqrt(s2 / (n - 1) / n) / mean_len;
    const double z = (r.mu_t - mu) / se;
    o.check(std::abs(z) < 2.0, fmt("realized mu_t %.4f vs analytic %.4f, SE %.4f, z %+.2f", r.mu_t, mu, se, z));
    return o;
}

Outcome synthetic_out_of_sample() {
    Outcome o;
    const std::size_t reps = 40;
    const double bar_minutes = 10.0;
    const std::size_t bars_per_year = static_cast<std::size_t>(365.25 * 24 * 60 / bar_minutes);
    const char* labels[] = {"1", "10", "opt"};
    std::vector<std::vector<double>> diff(3), realized(3), analytic(3), fitted(3);
    bool identity = true;
    std::size_t ruined = 0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        pipeline::SyntheticQuotes q;
        q.params = kRef;
        q.bar_minutes = bar_minutes;
        q.bars = 12 * bars_per_year;
        q.cost = kCost;
        q.seed = rng::stream_seed(10, rep);
        const auto data = pipeline::synthesize_quotes(q);
        pipeline::PipelineConfig cfg;
        cfg.session_start = "00:00";
        cfg.session_end = "23:59";
        cfg.bootstrap_samples = 0;
        cfg.bar_minutes = bar_minutes;
        cfg.seed = rep;
        cfg.split = calib::format_timestamp(data.timestamps[2 * bars_per_year].epoch_seconds);
        const auto res = pipeline::run_pipeline(cfg, data);
        for (std::size_t k = 0; k < res.rows.size(); ++k) {
            const auto& row = res.rows[k];
            if (!row.os) continue;
            identity = identity && wealth_identity(*row.os);
            if (row.os->ruined) {
                ++ruined;
                continue;
            }
            // the chosen physical levels, read in the units of the generating process
            const BandSpec truth{rescale(kRef, row.levels.stop), rescale(kRef, row.levels.entry),
                                 rescale(kRef, row.levels.target), res.c, row.optimum.f};
            const double mu = long_run_return(truth, kRef);
            realized[k].push_back(row.os->mu_t);
            analytic[k].push_back(mu);
            fitted[k].push_back(row.optimum.mu);
            diff[k].push_back(row.os->mu_t - mu);
        }
    }
    o.note(fmt("%zu replicates: 2 years in-sample, 10 years out-of-sample, %.0f-minute bars", reps, bar_minutes));
    o.check(identity, "wealth identity on every out-of-sample backtest");
    o.check(ruined == 0, fmt("%zu ruined backtests", ruined));
    for (std::size_t k = 0; k < 3; ++k) {
        if (diff[k].size() < 2) {
            o.check(false, fmt("f=%s: no completed out-of-sample runs", labels[k]));
            continue;
        }
        const auto d = sim::sample_moments(diff[k]).estimate();
        const double mr = sim::sample_moments(realized[k]).mean, ma = sim::sample_moments(analytic[k]).mean;
        const double mf = sim::sample_moments(fitted[k]).mean;
        o.check(std::abs(d.mean) < 2.0 * d.se,
                fmt("f=%-3s mean mu_OS %.4f vs analytic %.4f: diff %+.4f, SE %.4f (in-sample estimate %.4f)",
                    labels[k], mr, ma, d.mean, d.se, mf));
    }
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit_s;  // 0: no limit
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all{
        {1, "special functions vs quadrature", 10, special_functions},
        {2, "trade-length identity", 30, trade_length_identity},
        {3, "Monte Carlo exit oracle", 120, monte_carlo_oracle},
        {4, "reference bands and returns", 60, reference_returns},
        {5, "maximal viable cost", 60, viable_cost},
        {6, "no-stop-loss limit", 60, no_stop_loss_limit},
        {7, "calibration recovery", 600, calibration_recovery},
        {8, "variance decay", 300, variance_decay},
        {9, "backtest identity and convergence", 0, backtest_identity},
        {10, "synthetic out-of-sample returns", 0, synthetic_out_of_sample},
    };
    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_s > 0 && secs > c.limit_s) o.check(false, fmt("runtime %.1f s over %.0f s", secs, c.limit_s));
        for (const auto& n : o.notes) std::printf("%s\n", n.c_str());
        std::printf("criterion %2d %-36s %s  (%.1f s)\n\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
    return failed == 0 ? 0 : 1;
}
