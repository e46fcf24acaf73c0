// ou-statarb: command-line front end for calibration, band optimization,
// exit-time analytics, simulation and backtesting.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ou_statarb.hpp"

namespace fs = std::filesystem;
using namespace ou_statarb;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
    std::uint64_t seed = 1;
    bool seed_set = false;
    std::string output_dir;
    std::string config;
};

/// Failure tagged with the subcommand (or pipeline stage) it came from.
struct Tagged : std::runtime_error {
    Tagged(std::string tag, const std::string& msg) : std::runtime_error(msg), tag(std::move(tag)) {}
    std::string tag;
};

void print_kv(const json& j, const std::string& prefix = "") {
    std::size_t width = 0;
    for (const auto& [k, v] : j.items())
        if (!v.is_object()) width = std::max(width, prefix.size() + k.size());
    for (const auto& [k, v] : j.items()) {
        const std::string key = prefix + k;
        if (v.is_object()) {
            print_kv(v, key + ".");
            continue;
        }
        std::string val;
        if (v.is_number_float())
            val = report::num(v.get<double>(), 6);
        else if (v.is_string())
            val = v.get<std::string>();
        else
            val = v.dump();
        std::cout << key << std::string(width - key.size(), ' ') << " : " << val << '\n';
    }
}

void save(const Globals& g, const std::string& name, const std::string& content) {
    if (g.output_dir.empty()) return;
    report::write_file(fs::path(g.output_dir) / name, content);
}

/// Parameter source shared by bands/fet/backtest.
struct ParamArgs {
    double kappa = 0.0, eta = 0.0, sigma = 0.0;
    std::string file;

    void add(CLI::App* app) {
        app->add_option("--kappa", kappa, "mean-reversion rate (1/year)");
        app->add_option("--eta", eta, "stationary mean of the log-ratio");
        app->add_option("--sigma", sigma, "diffusion (log units / sqrt(year))");
        app->add_option("--params-file", file, "JSON with kappa, eta, sigma (e.g. calibration.json)");
    }
    [[nodiscard]] OuParams get() const {
        OuParams p{kappa, eta, sigma};
        if (!file.empty()) {
            std::ifstream in(file);
            if (!in) throw DataError("cannot open " + file);
            const json j = json::parse(in);
            const json& src = j.contains("calibration") ? j.at("calibration") : j;
            p = {src.at("kappa").get<double>(), src.value("eta", 0.0), src.at("sigma").get<double>()};
        }
        p.validate();
        return p;
    }
};

double cost_in_log_units(double cost, const std::string& units, const OuParams& p) {
    if (units == "sigma") return cost * p.stationary_sd();
    if (units == "abs") return cost;
    throw DataError("--cost-units must be 'abs' or 'sigma'");
}

std::vector<double> parse_list(const std::string& s, std::size_t n, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    if (out.size() != n) throw DataError(std::string(what) + ": expected " + std::to_string(n) + " comma-separated values");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal mean-reversion trading with a stop-loss for Ornstein-Uhlenbeck log-ratios"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    Globals g;
    app.add_option("--seed", g.seed, "base random seed")->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--output-dir", g.output_dir, "directory for report and data files");
    app.add_option("--config", g.config, "JSON file with pipeline settings");

    // clean
    auto* clean = app.add_subcommand("clean", "drop extreme and antipersistent outliers");
    std::string clean_in;
    bool clean_skip_ap = false;
    clean->add_option("input", clean_in, "quotes CSV (timestamp,bid1,ask1,bid2,ask2)")->required();
    clean->add_flag("--extreme-only", clean_skip_ap, "skip the antipersistent filter");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "maximum-likelihood OU fit with bootstrap CIs");
    std::string cal_in, cal_mode = "calendar", cal_from, cal_to;
    std::size_t cal_samples = 10000;
    double cal_bar = 30.0;
    cal->add_option("input", cal_in, "quotes CSV")->required();
    cal->add_option("--samples", cal_samples, "bootstrap samples (0 disables)");
    cal->add_option("--time-mode", cal_mode, "calendar | trading")->check(CLI::IsMember({"calendar", "trading"}));
    cal->add_option("--bar-minutes", cal_bar, "bar length for trading-time mode");
    cal->add_option("--session-start", cal_from, "keep bars at or after HH:MM");
    cal->add_option("--session-end", cal_to, "keep bars at or before HH:MM");

    // bands
    auto* bands = app.add_subcommand("bands", "optimal entry/exit bands for a stop-loss");
    ParamArgs bands_p;
    double bands_l = -1.96, bands_c = 0.0, bands_umax = 3.0;
    std::string bands_units = "sigma", bands_lev = "1", bands_sweep;
    int bands_grid = 200;
    bands_p.add(bands);
    bands->add_option("--stop-loss", bands_l, "stop-loss l (Sigma units)");
    bands->add_option("--cost", bands_c, "round-trip cost");
    bands->add_option("--cost-units", bands_units, "abs | sigma")->check(CLI::IsMember({"abs", "sigma"}));
    bands->add_option("--leverage", bands_lev, "number or 'opt'");
    bands->add_option("--grid", bands_grid, "grid points per axis");
    bands->add_option("--u-max", bands_umax, "upper limit of the u search (Sigma units)");
    bands->add_option("--sweep", bands_sweep, "write mu over the (d,u) grid to this file");

    // fet
    auto* fet = app.add_subcommand("fet", "exit probabilities and expected exit/passage times");
    double fet_l = -1.96, fet_d = -0.87, fet_u = 0.58, fet_theta = 1.0;
    std::size_t fet_mc = 0;
    fet->add_option("--l", fet_l, "stop-loss (Sigma units)");
    fet->add_option("--d", fet_d, "entry (Sigma units)");
    fet->add_option("--u", fet_u, "target (Sigma units)");
    fet->add_option("--theta", fet_theta, "time unit 1/kappa");
    fet->add_option("--mc", fet_mc, "also run a Monte Carlo check with this many paths");

    // fn
    auto* fn = app.add_subcommand("fn", "special-function tables");
    fn->require_subcommand(1);
    auto* fn_eval = fn->add_subcommand("eval", "tabulate erf, erfi, phi1, psi1, phi2, psi2");
    double fn_from = -3.0, fn_to = 3.0;
    int fn_n = 61;
    fn_eval->add_option("--from", fn_from);
    fn_eval->add_option("--to", fn_to);
    fn_eval->add_option("--points", fn_n)->check(CLI::Range(2, 100000));

    // simulate
    auto* simc = app.add_subcommand("simulate", "synthetic quotes with OU log-ratio");
    pipeline::SyntheticQuotes sq;
    sq.params = {18.51, -0.0094, 0.0893};
    std::string sim_out, sim_cost_units = "abs";
    double sim_cost = 0.0;
    simc->add_option("--kappa", sq.params.kappa);
    simc->add_option("--eta", sq.params.eta);
    simc->add_option("--sigma", sq.params.sigma);
    simc->add_option("--bars", sq.bars, "number of bars");
    simc->add_option("--bar-minutes", sq.bar_minutes);
    simc->add_option("--start", sq.start, "first timestamp (ISO-8601)");
    simc->add_flag("--sessions", sq.sessions, "weekday bars between the session times only");
    simc->add_option("--session-start", sq.session_start);
    simc->add_option("--session-end", sq.session_end);
    simc->add_option("--cost", sim_cost, "round-trip cost embedded in the spreads");
    simc->add_option("--cost-units", sim_cost_units, "abs | sigma")->check(CLI::IsMember({"abs", "sigma"}));
    simc->add_option("--output", sim_out, "CSV path (default: <output-dir>/synthetic.csv or stdout)");

    // backtest
    auto* bt = app.add_subcommand("backtest", "replay the band strategy on a quotes CSV");
    ParamArgs bt_p;
    std::string bt_in, bt_bands, bt_units = "sigma", bt_lev = "1";
    double bt_c = 0.0;
    bool bt_short = false, bt_real = false;
    bt_p.add(bt);
    bt->add_option("input", bt_in, "quotes CSV")->required();
    bt->add_option("--bands", bt_bands, "l,d,u in Sigma units")->required();
    bt->add_option("--leverage", bt_lev, "number or 'opt'");
    bt->add_option("--cost", bt_c, "round-trip cost");
    bt->add_option("--cost-units", bt_units, "abs | sigma")->check(CLI::IsMember({"abs", "sigma"}));
    bt->add_flag("--short-side", bt_short, "also trade the mirrored short strategy");
    bt->add_flag("--realistic-fills", bt_real, "pay observed prices instead of band levels");

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "clean, calibrate, optimize and backtest out of sample");
    std::string pl_in, pl_split;
    std::size_t pl_samples = 0, pl_band_samples = 0;
    pl->add_option("input", pl_in, "quotes CSV (overrides the config 'data' key)");
    pl->add_option("--split", pl_split, "first out-of-sample timestamp");
    pl->add_option("--samples", pl_samples, "parameter bootstrap samples");
    pl->add_option("--band-samples", pl_band_samples, "bootstrap samples propagated through the band optimizer");
    bool pl_sweep = false, pl_short = false;
    pl->add_flag("--sweep", pl_sweep, "emit the optimal-band sweep over costs");
    pl->add_flag("--short-side", pl_short, "backtest the mirrored short strategy as well");

    CLI11_PARSE(app, argc, argv);

    std::string tag = app.get_subcommands().front()->get_name();
    try {
        pipeline::PipelineConfig pcfg;
        if (!g.config.empty()) {
            pcfg = pipeline::load_config(g.config);
            if (!g.seed_set) g.seed = pcfg.seed;
            if (g.output_dir.empty()) g.output_dir = pcfg.output_dir;
        }

        if (clean->parsed()) {
            const auto data = calib::read_csv(clean_in);
            auto ex = calib::filter_extreme_outliers(data);
            std::ostringstream log;
            log << "timestamp,filter,ratio\n";
            for (auto i : ex.removed) log << data.timestamps[i].text << ",extreme," << data.ratio(i) << '\n';
            calib::PriceSeries out = ex.series;
            std::size_t n_ap = 0;
            if (!clean_skip_ap) {
                auto ap = calib::filter_antipersistent_outliers(ex.series);
                for (auto i : ap.removed)
                    log << ex.series.timestamps[i].text << ",antipersistent," << ex.series.ratio(i) << '\n';
                n_ap = ap.removed.size();
                out = ap.series;
            }
            std::ostringstream csv;
            calib::write_csv(csv, out);
            if (g.output_dir.empty()) {
                std::cout << csv.str();
                std::cerr << log.str();
            } else {
                save(g, "cleaned.csv", csv.str());
                save(g, "removed.csv", log.str());
                print_kv(json{{"rows_in", data.size()},
                              {"rows_out", out.size()},
                              {"removed_extreme", ex.removed.size()},
                              {"removed_antipersistent", n_ap}});
            }
        } else if (cal->parsed()) {
            auto data = calib::read_csv(cal_in);
            if (!cal_from.empty() || !cal_to.empty()) {
                const int a = cal_from.empty() ? 0 : pipeline::parse_clock(cal_from);
                const int b = cal_to.empty() ? 24 * 60 : pipeline::parse_clock(cal_to);
                std::vector<std::size_t> keep;
                for (std::size_t i = 0; i < data.size(); ++i)
                    if (data.timestamps[i].minute_of_day >= a && data.timestamps[i].minute_of_day <= b) keep.push_back(i);
                data = data.subset(keep);
            }
            const auto mode = cal_mode == "trading" ? calib::TimeMode::Trading : calib::TimeMode::Calendar;
            const auto gaps = calib::gaps_for(data, mode, cal_bar * 60.0 / calib::kSecondsPerYear);
            const auto fit = calib::mle_fit(data.log_ratios(), gaps);
            json j{{"seed", g.seed},
                   {"observations", data.size()},
                   {"time_mode", cal_mode},
                   {"kappa", fit.kappa_hat},
                   {"eta", fit.eta_hat},
                   {"sigma", fit.sigma_hat},
                   {"theta", fit.params().theta()},
                   {"Sigma", fit.params().stationary_sd()},
                   {"log_likelihood", fit.log_likelihood},
                   {"kappa_at_lower_bound", fit.kappa_at_lower_bound}};
            if (cal_samples > 0) {
                calib::BootstrapConfig bc;
                bc.samples = cal_samples;
                bc.seed = g.seed;
                const auto b = calib::bootstrap_ci(fit.params(), gaps, bc);
                j["bootstrap_samples"] = cal_samples;
                j["bootstrap_failures"] = b.failures;
                j["kappa_ci"] = {b.kappa.lower, b.kappa.upper};
                j["eta_ci"] = {b.eta.lower, b.eta.upper};
                j["sigma_ci"] = {b.sigma.lower, b.sigma.upper};
            }
            print_kv(j);
            save(g, "calibration.json", j.dump(2) + "\n");
        } else if (bands->parsed()) {
            const OuParams p = bands_p.get();
            const double c = cost_in_log_units(bands_c, bands_units, p);
            const Leverage lev = pipeline::parse_leverage(bands_lev);
            OptimizerConfig oc;
            oc.grid_resolution = bands_grid;
            oc.u_max = bands_umax;
            const auto o = optimize_bands(bands_l, c, p, lev, oc);
            const auto cs = max_viable_cost(bands_l);
            json j{{"seed", g.seed},
                   {"stop_loss", bands_l},
                   {"cost", c},
                   {"cost_sigma_units", c / p.stationary_sd()},
                   {"c_star_sigma_units", cs.c_star},
                   {"leverage", bands_lev},
                   {"no_trade", o.no_trade},
                   {"d", o.d},
                   {"u", o.u},
                   {"f", o.f},
                   {"mu", o.mu},
                   {"mu_both_sides", 2.0 * o.mu},
                   {"p_plus", o.p_plus},
                   {"p_minus", o.no_trade ? 0.0 : 1.0 - o.p_plus},
                   {"trade_length", o.trade_length},
                   {"hit_box", o.hit_box}};
            print_kv(j);
            if (o.hit_box) std::cerr << "warning: optimum lies on the search box; consider a larger --u-max\n";
            save(g, "bands.json", j.dump(2) + "\n");
            if (!bands_sweep.empty()) {
                std::vector<std::vector<double>> cols(3);
                const int n = bands_grid;
                for (int i = 0; i < n; ++i) {
                    const double d = bands_l + (0.0 - bands_l) * (i + 1) / n;
                    for (int k = 0; k < n; ++k) {
                        const double u = d + (bands_umax - d) * (k + 1) / n;
                        const double v = band_objective(bands_l, d, u, c, lev, p);
                        if (!std::isfinite(v)) continue;
                        cols[0].push_back(d);
                        cols[1].push_back(u);
                        cols[2].push_back(v);
                    }
                }
                report::write_file(bands_sweep, report::columns({"d", "u", "mu"}, cols));
            }
        } else if (fet->parsed()) {
            const auto s = ou::exit_stats(fet_l, fet_d, fet_u, fet_theta);
            json j{{"l", fet_l},
                   {"d", fet_d},
                   {"u", fet_u},
                   {"theta", fet_theta},
                   {"p_plus", s.p_plus},
                   {"p_minus", s.p_minus},
                   {"e_tau_plus_exit", s.e_tau_plus_exit},
                   {"e_tau_minus_exit", s.e_tau_minus_exit},
                   {"e_fpt_up", s.e_fpt_up},
                   {"e_fpt_down", s.e_fpt_down},
                   {"e_trade_length", s.e_trade_length}};
            if (fet_mc > 0) {
                sim::ExitOracleConfig oc;
                oc.n_paths = fet_mc;
                oc.seed = g.seed;
                const auto m = sim::mc_exit_oracle(fet_l, fet_d, fet_u, OuParams{1.0 / fet_theta, 0.0, 1.0}, oc);
                auto e = [](const sim::McEstimate& x) { return json::array({x.mean, x.se}); };
                j["mc"] = {{"paths", fet_mc},
                           {"p_plus", e(m.coarse.p_plus)},
                           {"e_tau_plus_exit", e(m.coarse.e_tau_plus_exit)},
                           {"e_tau_minus_exit", e(m.coarse.e_tau_minus_exit)},
                           {"e_fpt_up", e(m.coarse.e_fpt_up)},
                           {"e_fpt_down", e(m.coarse.e_fpt_down)},
                           {"e_trade_length", e(m.coarse.e_trade_length)}};
            }
            print_kv(j);
            save(g, "fet.json", j.dump(2) + "\n");
        } else if (fn_eval->parsed()) {
            tag = "fn";
            report::TextTable t({"x", "erf", "erfi", "phi1", "psi1", "phi2", "psi2"});
            std::vector<std::vector<double>> cols(7);
            for (int i = 0; i < fn_n; ++i) {
                const double x = fn_from + (fn_to - fn_from) * i / (fn_n - 1);
                const double v[7] = {x,
                                     specialfn::erf(x),
                                     specialfn::erfi(x),
                                     specialfn::phi1(x),
                                     specialfn::psi1(x),
                                     specialfn::phi2(x),
                                     specialfn::psi2(x)};
                std::vector<std::string> row;
                for (int k = 0; k < 7; ++k) {
                    row.push_back(report::num(v[k], 8));
                    cols[k].push_back(v[k]);
                }
                t.add_row(row);
            }
            std::cout << t.render();
            save(g, "functions.dat", report::columns({"x", "erf", "erfi", "phi1", "psi1", "phi2", "psi2"}, cols));
        } else if (simc->parsed()) {
            sq.seed = g.seed;
            sq.cost = sim_cost_units == "sigma" ? sim_cost * sq.params.stationary_sd() : sim_cost;
            const auto s = pipeline::synthesize_quotes(sq);
            std::ostringstream csv;
            calib::write_csv(csv, s);
            if (!sim_out.empty())
                report::write_file(sim_out, csv.str());
            else if (!g.output_dir.empty())
                save(g, "synthetic.csv", csv.str());
            else
                std::cout << csv.str();
        } else if (bt->parsed()) {
            const OuParams p = bt_p.get();
            const auto data = calib::read_csv(bt_in);
            const auto b = parse_list(bt_bands, 3, "--bands");
            const double c = cost_in_log_units(bt_c, bt_units, p);
            const Leverage lev = pipeline::parse_leverage(bt_lev);
            BandSpec spec{b[0], b[1], b[2], c, lev.value};
            if (lev.optimal) {
                const auto v = payoffs(spec, p.stationary_sd());
                spec.f = optimal_leverage(ou::exit_prob_up(b[0], b[1], b[2]), v.v_plus, v.v_minus);
            }
            sim::BacktestConfig cfg{bt_short, bt_real};
            const auto r = sim::backtest(data.times_years(), data.log_ratios(), spec, p, cfg);
            json j = pipeline::trade_summary(r);
            j["seed"] = g.seed;
            j["f"] = spec.f;
            j["analytic_mu"] = spec.f > 0.0 ? long_run_return(spec, p) : 0.0;
            print_kv(j);
            save(g, "backtest.json", j.dump(2) + "\n");
            save(g, "trades.csv", pipeline::trade_log_csv(r));
        } else if (pl->parsed()) {
            if (!pl_in.empty()) pcfg.data_path = pl_in;
            if (!pl_split.empty()) pcfg.split = pl_split;
            if (pl_samples) pcfg.bootstrap_samples = pl_samples;
            if (pl_band_samples) pcfg.band_bootstrap_samples = pl_band_samples;
            if (pl_sweep) pcfg.sweep = true;
            if (pl_short) pcfg.short_side = true;
            pcfg.seed = g.seed;
            pcfg.output_dir = g.output_dir;
            if (pcfg.data_path.empty()) throw DataError("no input data (pass a CSV or set 'data' in --config)");
            const auto r = pipeline::run_pipeline(pcfg);
            std::cout << "config_hash : " << r.config_hash << "\nseed        : " << r.seed << "\n\n"
                      << "Parameters (in-sample, " << r.n_is_session << " session bars)\n"
                      << r.table1 << "\nBands (l = " << report::num(pcfg.stop_loss, 2)
                      << ", c = " << report::num(r.c / r.mle.params().stationary_sd(), 4) << " Sigma)\n"
                      << r.table2;
            if (!r.os_present) std::cout << "out-of-sample section absent (empty slice)\n";
        }
    } catch (const pipeline::StageError& e) {
        std::cerr << "error [pipeline/" << e.stage() << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error [" << tag << "]: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
