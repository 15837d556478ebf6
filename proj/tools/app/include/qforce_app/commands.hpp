// Subcommands of the qforce tool
#pragma once

#include <exception>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include <qforce_app/config.hpp>

namespace qforce::app {

struct RunOptions {
    std::filesystem::path out = "out";
    unsigned threads = 0; ///< 0: all hardware threads
};

/// {"tool", "version", "command", "config_hash", "seed"}; no timestamps, so reruns match.
nlohmann::ordered_json provenance(const Config &config, std::string_view command);
/// One-line form of the same, used as the '#' line of CSV outputs.
std::string provenance_line(const Config &config, std::string_view command);

struct SqlRow {
    std::string regime;
    double omega_tau = 0.0;
    double sigma_rescaled = 0.0;
    double sigma_physical = 0.0;
    double ratio_to_single_shot = 0.0; ///< sigma_physical / (4 hbar m / tau^3)
    double optimal_k = 0.0;            ///< rescaled; NaN where no k is involved
    std::vector<std::string> flags;
};

std::vector<SqlRow> sql_rows(const Config &config, unsigned threads);

// Each command validates the config, writes its files under options.out and
// returns the summary it also writes as <command>.json.
nlohmann::ordered_json cmd_simulate(const Config &config, const RunOptions &options);
nlohmann::ordered_json cmd_filter(const Config &config, const RunOptions &options);
nlohmann::ordered_json cmd_grid_bayes(const Config &config, const RunOptions &options);
nlohmann::ordered_json cmd_sql_table(const Config &config, const RunOptions &options);
nlohmann::ordered_json cmd_optimize_schedule(const Config &config, const RunOptions &options);
nlohmann::ordered_json cmd_detect(const Config &config, const RunOptions &options);

const std::vector<std::string> &command_names();
nlohmann::ordered_json run_command(std::string_view command, const Config &config,
                                   const RunOptions &options);

/// 0 ok, 2 invalid input, 3 numerical failure, 1 anything else.
int exit_code_for(const std::exception &e);
/// {"error": {"kind", "message", "exit_code"}}
nlohmann::ordered_json error_json(const std::exception &e);

/// RFC 4180 field: quoted when it holds a comma, quote or line break.
std::string csv_field(std::string_view s);

} // namespace qforce::app
