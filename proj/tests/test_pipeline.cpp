#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ou_statarb/pipeline.hpp"

using namespace ou_statarb;
using namespace ou_statarb::pipeline;
namespace fs = std::filesystem;

namespace {

const OuParams kRef{18.51, -0.0094, 0.0893};

calib::PriceSeries quotes(std::size_t bars, std::uint64_t seed = 11) {
    SyntheticQuotes q;
    q.params = kRef;
    q.bars = bars;
    q.cost = 0.0933 * kRef.stationary_sd();
    q.seed = seed;
    q.sessions = true;
    return synthesize_quotes(q);
}

PipelineConfig small_config() {
    PipelineConfig c;
    c.bootstrap_samples = 200;
    c.band_bootstrap_samples = 40;
    c.band_bootstrap_resolution = 50;
    c.grid_resolution = 80;
    c.seed = 5;
    return c;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ou_statarb_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out;
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(OU_STATARB_CLI) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    std::string out;
    std::array<char, 512> buf{};
    while (fgets(buf.data(), buf.size(), pipe)) out += buf.data();
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

}  // namespace

TEST(Config, JsonRoundTrip) {
    PipelineConfig c;
    c.split = "2020-03-01T00:00:00";
    c.leverages = {"2", "opt"};
    c.seed = 77;
    PipelineConfig back;
    update_from_json(back, json(c));
    EXPECT_EQ(json(back).dump(), json(c).dump());
}

TEST(Config, NumericLeverageAndPartialUpdate) {
    PipelineConfig c;
    update_from_json(c, json::parse(R"({"leverages": [1, 2.5, "opt"], "seed": 3})"));
    EXPECT_EQ(c.leverages, (std::vector<std::string>{"1", "2.5", "opt"}));
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.stop_loss, -1.96);
}

TEST(Config, UnknownKeyRejected) {
    PipelineConfig c;
    EXPECT_THROW(update_from_json(c, json::parse(R"({"stoploss": -2})")), DataError);
}

TEST(Config, HashIgnoresOutputLocation) {
    PipelineConfig a, b;
    b.output_dir = "/elsewhere";
    b.workers = 3;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seed = 2;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, Validation) {
    PipelineConfig c;
    c.stop_loss = 0.5;
    EXPECT_THROW(c.validate(), BandError);
    c = {};
    c.bootstrap_samples = 50;
    EXPECT_THROW(c.validate(), DataError);
    c = {};
    c.time_mode = "weekly";
    EXPECT_THROW(c.validate(), DataError);
}

TEST(Config, Parsers) {
    EXPECT_TRUE(parse_leverage("opt").optimal);
    EXPECT_EQ(parse_leverage("10").value, 10.0);
    EXPECT_THROW(parse_leverage("ten"), BandError);
    EXPECT_THROW(parse_leverage("-1"), BandError);
    EXPECT_EQ(parse_clock("09:30"), 570);
    EXPECT_THROW(parse_clock("9h30"), DataError);
}

TEST(Pipeline, EndToEndOnSyntheticQuotes) {
    auto cfg = small_config();
    cfg.sweep = true;
    cfg.output_dir = scratch("e2e").string();
    const auto data = quotes(6000);
    const auto r = run_pipeline(cfg, data);

    EXPECT_EQ(r.n_raw, 6000u);
    EXPECT_EQ(r.n_is + r.n_os, r.n_clean);
    EXPECT_NEAR(static_cast<double>(r.n_is) / static_cast<double>(r.n_clean), 0.75, 0.01);
    ASSERT_TRUE(r.bootstrap);
    EXPECT_TRUE(r.bootstrap->sigma.contains(kRef.sigma));
    EXPECT_NEAR(r.c / r.mle.params().stationary_sd(), 0.0933 * kRef.stationary_sd() / r.mle.params().stationary_sd(),
                1e-9);

    ASSERT_EQ(r.rows.size(), 3u);
    for (const auto& row : r.rows) {
        EXPECT_FALSE(row.optimum.no_trade);
        EXPECT_LT(row.optimum.d, row.optimum.u);
        EXPECT_DOUBLE_EQ(row.mu_short, row.optimum.mu);
        EXPECT_GT(row.ci_samples, 0u);
        EXPECT_LE(row.mu_ci.lower, row.mu_ci.upper);
        ASSERT_TRUE(row.os);
        EXPECT_GT(row.os->trades.size(), 0u);
    }
    EXPECT_GE(r.rows[2].optimum.mu, r.rows[1].optimum.mu);
    EXPECT_EQ(r.sweep.size(), 41u);

    for (const char* f : {"report.json", "table1.txt", "table2.txt", "cost_histogram.dat", "sweep.dat",
                          "trades_f1.csv", "trades_f10.csv", "trades_fopt.csv"})
        EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / f)) << f;
    const auto rep = json::parse(slurp(fs::path(cfg.output_dir) / "report.json"));
    EXPECT_EQ(rep["config_hash"], config_hash(cfg));
    EXPECT_EQ(rep["bands"]["rows"].size(), 3u);
    EXPECT_FALSE(rep.contains("error"));
}

TEST(Pipeline, TableLayout) {
    auto cfg = small_config();
    cfg.bootstrap_samples = 0;
    const auto r = run_pipeline(cfg, quotes(3000));
    std::istringstream t2(r.table2);
    std::string header;
    std::getline(t2, header);
    std::istringstream cols(header);
    std::vector<std::string> names;
    for (std::string w; cols >> w;) names.push_back(w);
    EXPECT_EQ(names, (std::vector<std::string>{"f", "d", "CI", "u", "CI", "mu", "CI", "2mu", "mu_OS"}));
    EXPECT_NE(r.table1.find("kappa"), std::string::npos);
    EXPECT_NE(r.table1.find("sigma"), std::string::npos);
    EXPECT_FALSE(r.bootstrap);
}

TEST(Pipeline, DeterministicForSeed) {
    auto cfg = small_config();
    cfg.band_bootstrap_samples = 10;
    const auto data = quotes(2500);
    const auto a = run_pipeline(cfg, data);
    cfg.workers = 2;
    auto b = run_pipeline(cfg, data);
    b.report["config"]["workers"] = 0;
    EXPECT_EQ(a.report.dump(), b.report.dump());
}

TEST(Pipeline, EmptyOutOfSampleMarkedAbsent) {
    auto cfg = small_config();
    cfg.bootstrap_samples = 0;
    const auto data = quotes(2000);
    cfg.split = calib::format_timestamp(data.timestamps.back().epoch_seconds + 1);
    const auto r = run_pipeline(cfg, data);
    EXPECT_FALSE(r.os_present);
    EXPECT_EQ(r.n_os, 0u);
    EXPECT_NE(r.table2.find("absent"), std::string::npos);
    EXPECT_TRUE(r.report["out_of_sample"].is_null());
}

TEST(Pipeline, SplitOutsideRangeFailsInSplitStage) {
    auto cfg = small_config();
    cfg.split = "1999-01-01T00:00:00";
    try {
        run_pipeline(cfg, quotes(500));
        FAIL() << "expected a stage error";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "split");
    }
}

TEST(Pipeline, PartialReportOnFailure) {
    auto cfg = small_config();
    cfg.session_start = "20:00";
    cfg.session_end = "21:00";  // no synthetic bars fall in this window
    cfg.output_dir = scratch("partial").string();
    try {
        run_pipeline(cfg, quotes(40));
        FAIL() << "expected a stage error";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "calibrate");
    }
    const auto rep = json::parse(slurp(fs::path(cfg.output_dir) / "report.json"));
    EXPECT_EQ(rep["error"]["stage"], "calibrate");
    EXPECT_EQ(rep["clean"]["rows_in"], 40);
}

TEST(Pipeline, OutliersReportedByTimestamp) {
    auto data = quotes(1000);
    data.ask1[500] = data.bid1[500] = data.bid1[500] * 1.5;
    auto cfg = small_config();
    cfg.bootstrap_samples = 0;
    const auto r = run_pipeline(cfg, data);
    ASSERT_EQ(r.removed_extreme.size(), 1u);
    EXPECT_EQ(r.removed_extreme[0], data.timestamps[500].text);
    EXPECT_EQ(r.n_clean, 999u);
}

TEST(Pipeline, BandIntervalsArePercentiles) {
    auto cfg = small_config();
    cfg.leverages = {"1"};
    const auto r = run_pipeline(cfg, quotes(3000));
    const auto& row = r.rows[0];
    // refit the same draws and compare against a sort-and-interpolate quantile
    OptimizerConfig oc;
    oc.grid_resolution = cfg.band_bootstrap_resolution;
    oc.tolerance = 1e-4;
    oc.u_max = cfg.u_max;
    std::vector<double> d;
    for (std::size_t i = 0; i < cfg.band_bootstrap_samples; ++i) {
        const auto o = optimize_bands(cfg.stop_loss, r.c, r.bootstrap->draws[i], Leverage::fixed(1.0), oc);
        if (!o.no_trade) d.push_back(o.d);
    }
    ASSERT_EQ(d.size(), row.ci_samples);
    EXPECT_DOUBLE_EQ(row.d_ci.lower, oracle::quantile(d, 0.025));
    EXPECT_DOUBLE_EQ(row.d_ci.upper, oracle::quantile(d, 0.975));
}

TEST(Cli, FetReportsExitStatistics) {
    const auto r = cli("fet --l -1.96 --d -0.87 --u 0.58");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("p_plus           : 0.682221"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("e_trade_length   : 2.749199"), std::string::npos) << r.out;
}

TEST(Cli, MissingInputIsStageTagged) {
    const auto r = cli("pipeline /nonexistent/quotes.csv");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("error [pipeline/load]"), std::string::npos) << r.out;
}

TEST(Cli, BadArgumentsFail) {
    EXPECT_EQ(cli("bands --stop-loss 0.5 --kappa 18.51 --eta 0 --sigma 0.09").code, 1);
    EXPECT_NE(cli("no-such-command").code, 0);
}

TEST(Cli, SimulateCleanCalibrateRoundTrip) {
    const auto dir = scratch("cli");
    const auto csv = (dir / "q.csv").string();
    auto r = cli("simulate --kappa 18.51 --eta -0.0094 --sigma 0.0893 --bars 3000 --cost 0.0933 --cost-units sigma "
                 "--seed 4 --sessions --output " + csv);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(calib::read_csv(csv).size(), 3000u);
    r = cli("--output-dir " + (dir / "clean").string() + " clean " + csv);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(dir / "clean" / "cleaned.csv"));
    r = cli("calibrate " + csv + " --samples 0");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("kappa"), std::string::npos);
}

TEST(Cli, ConfigFileSuppliesSettings) {
    const auto dir = scratch("cfg");
    const auto csv = (dir / "q.csv").string();
    {
        std::ofstream out(csv);
        calib::write_csv(out, quotes(2000));
    }
    std::ofstream(dir / "cfg.json") << R"({"bootstrap_samples": 0, "grid_resolution": 60, "leverages": ["1"],
        "output_dir": ")" + (dir / "out").string() + R"("})";
    const auto r = cli("--config " + (dir / "cfg.json").string() + " pipeline " + csv);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(dir / "out" / "table2.txt"));
    std::ofstream(dir / "bad.json") << R"({"bogus": 1})";
    EXPECT_NE(cli("--config " + (dir / "bad.json").string() + " pipeline " + csv).code, 0);
}

TEST(Synthetic, SessionBarsSkipNightsAndWeekends) {
    const auto s = quotes(200);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& t = s.timestamps[i];
        EXPECT_GE(t.minute_of_day, 9 * 60);
        EXPECT_LE(t.minute_of_day, 16 * 60);
        const auto day = t.epoch_seconds / 86400;
        const auto weekday = (day + 4) % 7;
        EXPECT_NE(weekday, 0);
        EXPECT_NE(weekday, 6);
    }
    // 15 bars a day from Monday 09:00
    EXPECT_EQ(s.timestamps[0].text, "2020-01-06T09:00:00");
    EXPECT_EQ(s.timestamps[15].text, "2020-01-07T09:00:00");
    EXPECT_EQ(s.timestamps[75].text, "2020-01-13T09:00:00");
}
