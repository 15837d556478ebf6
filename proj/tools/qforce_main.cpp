// qforce: force estimation and detection under continuous position measurement
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <qforce/error.hpp>
#include <qforce_app/commands.hpp>
#include <qforce_app/config.hpp>

namespace {

int report(const std::exception &e) {
    const auto j = qforce::app::error_json(e);
    std::cerr << j.dump() << "\n";
    return j["error"]["exit_code"].get<int>();
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Estimate and detect weak forces on a continuously monitored particle", "qforce"};
    app.set_version_flag("--version", QFORCE_VERSION);
    app.require_subcommand(1);

    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    bool dimensionless = false;
    app.add_option("--config", config_path, "JSON scenario file")->check(CLI::ExistingFile);
    app.add_option("--out", out, "output directory (default: the config's output field)");
    app.add_option("--seed", seed, "override simulation.seed");
    app.add_option("--threads", threads, "worker threads, 0 = all cores")->capture_default_str();
    app.add_flag("--dimensionless", dimensionless, "run the rescaled model m = 1, hbar = 2, tau = 1");

    const char *help[] = {
        "simulate measurement records and the Monte Carlo estimator variance",
        "run the augmented Kalman filter over a record",
        "grid posterior over theta, compared with the Kalman filter",
        "standard quantum limit table",
        "optimize a piecewise-constant sensitivity schedule",
        "online detection of a force of unknown arrival time",
    };
    const auto &names = qforce::app::command_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        app.add_subcommand(names[i], help[i])->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        return report(qforce::Error(qforce::ErrorKind::InvalidArgument, e.what()));
    }

    try {
        qforce::app::Config config;
        if (!config_path.empty())
            config = qforce::app::load_config(config_path);
        if (seed)
            config.simulation.seed = *seed;
        if (dimensionless)
            config.dimensionless = true;

        qforce::app::RunOptions options;
        options.out = out.empty() ? config.base_dir / config.output : std::filesystem::path(out);
        options.threads = threads;

        const auto summary =
            qforce::app::run_command(app.get_subcommands().front()->get_name(), config, options);
        std::cout << summary.dump(2) << "\n";
        return 0;
    } catch (const std::exception &e) {
        return report(e);
    }
}
