#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <qforce/analytics.hpp>
#include <qforce/error.hpp>
#include <qforce_app/commands.hpp>
#include <qforce_app/config.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / ("qforce_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path &dir, const json &doc) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << doc.dump(2);
    return p;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run_cli(const std::string &args, const fs::path &dir) {
    const fs::path so = dir / "stdout.txt", se = dir / "stderr.txt";
    const std::string cmd =
        std::string(QFORCE_CLI_PATH) + " " + args + " >" + so.string() + " 2>" + se.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(so), slurp(se)};
}

Run run_cli(const std::string &command, const fs::path &dir, const json &doc,
           const std::string &extra = "") {
    const fs::path cfg = write_config(dir, doc);
    return run_cli(command + " --config " + cfg.string() + " --out " + (dir / "out").string() +
                      " " + extra,
                  dir);
}

/// CSV rows after the '#' line and the header.
std::vector<std::vector<std::string>> read_csv(const fs::path &p) {
    std::ifstream in(p);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            f.push_back(cell);
        if (!line.empty() && line.back() == ',')
            f.emplace_back();
        rows.push_back(f);
    }
    return rows;
}

const json kSmall = {{"simulation", {{"dt", 1e-3}}}, {"schedule", {{"k", 5.0}}}};

} // namespace

TEST(CsvField, QuotesOnlyWhenNeeded) {
    EXPECT_EQ(qforce::app::csv_field("plain"), "plain");
    EXPECT_EQ(qforce::app::csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(qforce::app::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    EXPECT_EQ(qforce::app::csv_field("two\nlines"), "\"two\nlines\"");
}

TEST(ExitCodes, FollowErrorKind) {
    using qforce::Error;
    using qforce::ErrorKind;
    EXPECT_EQ(qforce::app::exit_code_for(Error(ErrorKind::InvalidArgument, "x")), 2);
    EXPECT_EQ(qforce::app::exit_code_for(Error(ErrorKind::Grid, "x")), 2);
    EXPECT_EQ(qforce::app::exit_code_for(Error(ErrorKind::Io, "x")), 2);
    EXPECT_EQ(qforce::app::exit_code_for(Error(ErrorKind::NumericalInstability, "x")), 3);
    EXPECT_EQ(qforce::app::exit_code_for(Error(ErrorKind::Degenerate, "x")), 3);
    EXPECT_EQ(qforce::app::exit_code_for(Error(ErrorKind::NoBracket, "x")), 3);
    EXPECT_EQ(qforce::app::exit_code_for(std::runtime_error("x")), 1);
    const auto j = qforce::app::error_json(Error(ErrorKind::Degenerate, "boom"));
    EXPECT_EQ(j["error"]["kind"], "degenerate");
    EXPECT_EQ(j["error"]["message"], "boom");
    EXPECT_EQ(j["error"]["exit_code"], 3);
}

TEST(Config, HashTracksContentNotOutput) {
    auto a = qforce::app::parse_config(kSmall);
    auto b = a;
    b.output = "elsewhere";
    EXPECT_EQ(qforce::app::config_hash(a), qforce::app::config_hash(b));
    b.simulation.seed = 2;
    EXPECT_NE(qforce::app::config_hash(a), qforce::app::config_hash(b));
    EXPECT_EQ(qforce::app::fnv1a64_hex(""), "cbf29ce484222325");
}

TEST(Cli, UnknownFieldIsRejected) {
    const auto dir = scratch("unknown");
    json doc = kSmall;
    doc["simulation"]["dtt"] = 1e-3;
    const auto r = run_cli("simulate", dir, doc);
    EXPECT_EQ(r.code, 2);
    const auto err = json::parse(r.err);
    EXPECT_EQ(err["error"]["kind"], "invalid_argument");
    EXPECT_NE(err["error"]["message"].get<std::string>().find("dtt"), std::string::npos);
}

TEST(Cli, InvalidValueIsRejected) {
    const auto dir = scratch("invalid");
    json doc = kSmall;
    doc["params"] = {{"mass", -1.0}};
    EXPECT_EQ(run_cli("simulate", dir, doc).code, 2);
}

TEST(Cli, MissingSubcommandIsAValidationError) {
    const auto dir = scratch("nosub");
    const auto r = run_cli("", dir);
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, SimulateWritesRecordsWithProvenance) {
    const auto dir = scratch("simulate");
    json doc = kSmall;
    doc["simulation"]["records"] = 2;
    doc["signal"] = {{"theta", 1.0}};
    const auto r = run_cli("simulate", dir, doc);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = json::parse(r.out);
    EXPECT_EQ(summary["provenance"]["tool"], "qforce");
    EXPECT_EQ(summary["records"].size(), 2u);
    for (const char *name : {"record_0000.csv", "record_0001.csv"}) {
        const std::string csv = slurp(dir / "out" / name);
        EXPECT_EQ(csv.rfind("# qforce ", 0), 0u);
        EXPECT_NE(csv.find("config=" + summary["provenance"]["config_hash"].get<std::string>()),
                  std::string::npos);
        EXPECT_EQ(read_csv(dir / "out" / name).size(), 1000u);
    }
    const auto env = json::parse(slurp(dir / "out" / "record_0000.json"));
    EXPECT_FALSE(env.empty());
    EXPECT_NE(slurp(dir / "out" / "record_0000.csv"), slurp(dir / "out" / "record_0001.csv"));
}

TEST(Cli, RerunsAreByteIdenticalAcrossThreadCounts) {
    const auto dir = scratch("rerun");
    json doc = kSmall;
    doc["simulation"]["n_traj"] = 40;
    doc["signal"] = {{"theta", 0.5}};
    const fs::path cfg = write_config(dir, doc);
    ASSERT_EQ(run_cli("simulate --threads 1 --config " + cfg.string() + " --out " +
                         (dir / "a").string(),
                     dir)
                  .code,
              0);
    ASSERT_EQ(run_cli("simulate --threads 3 --config " + cfg.string() + " --out " +
                         (dir / "b").string(),
                     dir)
                  .code,
              0);
    for (const char *f : {"record_0000.csv", "record_0000.json", "ensemble.csv", "simulate.json"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST(Cli, SeedOverrideChangesRecordAndHash) {
    const auto dir = scratch("seed");
    const auto a = json::parse(run_cli("simulate", dir, kSmall, "--seed 7").out);
    const std::string rec_a = slurp(dir / "out" / "record_0000.csv");
    const auto b = json::parse(run_cli("simulate", dir, kSmall, "--seed 8").out);
    EXPECT_EQ(a["provenance"]["seed"], 7);
    EXPECT_EQ(b["provenance"]["seed"], 8);
    EXPECT_NE(a["provenance"]["config_hash"], b["provenance"]["config_hash"]);
    EXPECT_NE(rec_a, slurp(dir / "out" / "record_0000.csv"));
}

TEST(Cli, MonteCarloVarianceRatioInBand) {
    const auto dir = scratch("montecarlo");
    json doc = {{"simulation", {{"dt", 1e-3}, {"n_traj", 400}, {"seed", 11}}},
                {"schedule", {{"k", 5.0}}},
                {"signal", {{"theta", 0.8}}}};
    const auto r = run_cli("simulate", dir, doc);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto e = json::parse(r.out)["ensemble"];
    EXPECT_GE(e["variance_ratio"].get<double>(), 0.85);
    EXPECT_LE(e["variance_ratio"].get<double>(), 1.15);
    EXPECT_TRUE(e["within_band"].get<bool>());
    EXPECT_TRUE(e["innovations"]["white"].get<bool>());
    EXPECT_LE(std::abs(e["final_error_mean"].get<double>()), 3.0 * e["mean_se"].get<double>());
}

TEST(Cli, FilterRecoversForceFromOwnRecord) {
    const auto dir = scratch("filter");
    json doc = kSmall;
    doc["signal"] = {{"theta", 40.0}};
    const auto r = run_cli("filter", dir, doc);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto s = json::parse(r.out);
    EXPECT_LT(std::abs(s["z_error"].get<double>()), 4.0);
    EXPECT_GT(read_csv(dir / "out" / "filter.csv").size(), 50u);
}

TEST(Cli, FilterRejectsRecordOnAnotherGrid) {
    const auto dir = scratch("grid");
    ASSERT_EQ(run_cli("simulate", dir, kSmall).code, 0);
    json doc = kSmall;
    doc["simulation"]["dt"] = 2e-3;
    doc["record"] = (dir / "out" / "record_0000.csv").string();
    fs::create_directories(dir / "second");
    const auto r = run_cli("filter", dir / "second", doc);
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(json::parse(r.err)["error"]["kind"], "grid");
}

TEST(Cli, FilterReadsRecordFile) {
    const auto dir = scratch("readrec");
    json doc = kSmall;
    doc["signal"] = {{"theta", 3.0}};
    ASSERT_EQ(run_cli("simulate", dir, doc).code, 0);
    const auto direct = json::parse(run_cli("filter", dir, doc).out);
    doc["record"] = (dir / "out" / "record_0000.csv").string();
    fs::create_directories(dir / "second");
    const auto r = run_cli("filter", dir / "second", doc);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto from_file = json::parse(r.out);
    EXPECT_NEAR(from_file["theta_hat"].get<double>(), direct["theta_hat"].get<double>(), 1e-8);
}

TEST(Cli, GridBayesMatchesKalman) {
    const auto dir = scratch("gridbayes");
    json doc = kSmall;
    doc["signal"] = {{"theta", 1.5}};
    doc["grid_bayes"] = {{"n", 301}};
    const auto r = run_cli("grid-bayes", dir, doc);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto s = json::parse(r.out);
    EXPECT_LT(std::abs(s["mean_difference_sd"].get<double>()), 0.05);
    EXPECT_NEAR(s["variance_ratio"].get<double>(), 1.0, 0.05);
    EXPECT_EQ(read_csv(dir / "out" / "posterior.csv").size(), 301u);
}

TEST(Cli, SqlTableMatchesLibraryAndKnownLimits) {
    const auto dir = scratch("sqltable");
    const auto r = run_cli("sql-table", dir, json::object());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = read_csv(dir / "out" / "sql_table.csv");
    ASSERT_EQ(rows.size(), 5u + 4u);
    const qforce::PhysicalParams unit;
    const double lib[] = {qforce::sql::sql_von_neumann(unit).sigma_physical,
                          qforce::sql::sql_free_steady(unit).sigma_physical,
                          qforce::sql::sql_free_optimal_init(unit).sigma_physical,
                          qforce::sql::sql_free_projective_end(unit).sigma_physical};
    for (int i = 0; i < 4; ++i)
        EXPECT_NEAR(std::stod(rows[i][3]), lib[i], 1e-9 * lib[i]) << rows[i][0];
    // steady state is covered by the acceptance run
    EXPECT_NEAR(std::stod(rows[0][3]), 4.0, 0.02 * 4.0);
    EXPECT_NEAR(std::stod(rows[2][3]), 8.0, 0.02 * 8.0);
    EXPECT_NEAR(std::stod(rows[3][3]), 3.008, 0.02 * 3.008);
    EXPECT_EQ(rows[4][0], qforce::sql::to_string(qforce::sql::Regime::Scheduled));
    EXPECT_NEAR(std::stod(rows[4][3]), 3.0, 0.02 * 3.0);
    for (const auto &row : rows)
        EXPECT_NEAR(std::stod(row[4]), std::stod(row[3]) / 4.0, 1e-9);
}

TEST(Cli, SqlTablePhysicalIsRescaledTimesUnit) {
    const auto dir = scratch("sqlunits");
    const double m = 2.5, hbar = 0.3, tau = 1.7;
    json doc = {{"params", {{"mass", m}, {"hbar", hbar}, {"tau", tau}}},
                {"sql_table", {{"scheduled", false}, {"omega_tau", {5.0, 100.0}}}}};
    const auto r = run_cli("sql-table", dir, doc);
    ASSERT_EQ(r.code, 0) << r.err;
    const double unit = hbar * m / (2.0 * tau * tau * tau);
    const auto rows = read_csv(dir / "out" / "sql_table.csv");
    ASSERT_EQ(rows.size(), 8u);
    for (const auto &row : rows)
        EXPECT_NEAR(std::stod(row[3]), std::stod(row[2]) * unit, 1e-9 * std::stod(row[3]))
            << row[0];
    EXPECT_NEAR(std::stod(rows[0][3]), 4.0 * hbar * m / (tau * tau * tau), 1e-9);
}

TEST(Cli, OscillatorRowsFlaggedOutsideValidity) {
    const auto dir = scratch("sqlflags");
    json doc = {{"sql_table", {{"scheduled", false}, {"omega_tau", {5.0, 10.0, 1000.0}}}}};
    ASSERT_EQ(run_cli("sql-table", dir, doc).code, 0);
    const auto rows = read_csv(dir / "out" / "sql_table.csv");
    ASSERT_EQ(rows.size(), 4u + 6u);
    for (std::size_t i = 4; i < rows.size(); ++i) {
        const double wt = std::stod(rows[i][1]);
        const std::string flags = rows[i].size() > 6 ? rows[i][6] : "";
        if (wt <= 10.0)
            EXPECT_NE(flags.find("omega_tau<=10"), std::string::npos) << rows[i][0] << " " << wt;
        else
            EXPECT_EQ(flags.find("omega_tau<=10"), std::string::npos) << rows[i][0] << " " << wt;
    }
}

TEST(Cli, OptimizeScheduleReachesThreeSingleShotQuarters) {
    const auto dir = scratch("optimize");
    const auto r = run_cli("optimize-schedule", dir, json::object());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto s = json::parse(r.out);
    EXPECT_NEAR(s["K"].get<double>(), 3.0, 0.02 * 3.0);
    EXPECT_NEAR(s["K_rescaled"].get<double>(), 2.0 * s["K"].get<double>(), 1e-9);
    const auto sched = read_csv(dir / "out" / "schedule.csv");
    EXPECT_EQ(sched.size(), 50u);
    const auto hist = read_csv(dir / "out" / "history.csv");
    for (std::size_t i = 1; i < hist.size(); ++i)
        EXPECT_LE(std::stod(hist[i][1]), std::stod(hist[i - 1][1]));
}

TEST(Cli, DimensionlessFlagUsesRescaledModel) {
    const auto dir = scratch("dimensionless");
    json doc = {{"params", {{"mass", 3.0}, {"hbar", 0.2}, {"tau", 1.0}}},
                {"sql_table", {{"scheduled", false}, {"omega_tau", json::array()}}}};
    ASSERT_EQ(run_cli("sql-table", dir, doc, "--dimensionless").code, 0);
    const auto rows = read_csv(dir / "out" / "sql_table.csv");
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_NEAR(std::stod(rows[0][3]), 8.0, 1e-9);
    EXPECT_NEAR(std::stod(rows[0][2]), 8.0, 1e-9);
}

TEST(Cli, DetectFalseAlarmsWithinFamilywiseRate) {
    const auto dir = scratch("detect_null");
    json doc = {{"simulation", {{"dt", 1e-3}, {"seed", 5}}},
                {"schedule", {{"k", 50.0}}},
                {"signal", {{"basis", "zero"}, {"theta", 0.0}}},
                {"detection", {{"alpha", 0.05}, {"runs", 100}}}};
    const auto r = run_cli("detect", dir, doc);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto s = json::parse(r.out);
    EXPECT_LE(s["detected"].get<int>(), 5);
    EXPECT_EQ(read_csv(dir / "out" / "detections.csv").size(), 100u);
}

TEST(Cli, DetectFindsStrongStep) {
    const auto dir = scratch("detect_step");
    json doc = {{"simulation", {{"dt", 1e-3}, {"seed", 5}}},
                {"schedule", {{"k", 50.0}}},
                {"signal", {{"basis", "step"}, {"onset", 0.3}, {"theta", 400.0}}},
                {"detection", {{"alpha", 0.05}, {"runs", 20}}}};
    const auto r = run_cli("detect", dir, doc);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto s = json::parse(r.out);
    EXPECT_EQ(s["detected"].get<int>(), 20);
    EXPECT_GT(s["first_run_t_detect"].get<double>(), 0.3);
    EXPECT_TRUE(s["analytic"].contains("constant_horizon"));
}
