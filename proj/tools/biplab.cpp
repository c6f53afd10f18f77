#include <cstdint>
#include <cstdio>
#include <exception>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "bip/cli.hpp"
#include "bip/contraction.hpp"

int main(int argc, char** argv) {
    namespace cli = bip::cli;

    CLI::App app{"lab bench for Bayesian linear inverse problems: exact posterior "
                 "error splits, contraction-rate sweeps, and operator-bound probes"};
    app.require_subcommand(0, 1);

    bool self_test = false;
    app.add_flag("--self-test", self_test,
                 "run the built-in closed-form checks and exit");

    std::string config_path, out_dir, data_path;
    std::uint64_t seed = 0;
    unsigned workers = 1;

    CLI::App* posterior_cmd =
        app.add_subcommand("posterior",
                           "posterior mean and covariance diagonal at one (tau, n), "
                           "with dual-formula agreement check");
    CLI::App* rates_cmd = app.add_subcommand(
        "rates", "contraction-rate sweep along the noise grid, slope vs theory");
    CLI::App* bounds_cmd = app.add_subcommand(
        "bounds", "operator-norm scaling probes of the regularized inverse");
    CLI::App* diagnostics_cmd = app.add_subcommand(
        "diagnostics", "scale-equivalence diagnostics under truncation doubling");
    CLI::App* figure_cmd = app.add_subcommand(
        "figure-rates", "tabulate the theoretical exponent against truth regularity");

    for (CLI::App* sub :
         {posterior_cmd, rates_cmd, bounds_cmd, diagnostics_cmd, figure_cmd}) {
        sub->add_option("--config", config_path, "run configuration file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
        sub->add_option("--seed", seed, "rng seed (overrides [output] seed)");
        sub->add_option("--workers", workers, "worker threads for sweeps");
    }
    posterior_cmd->add_option("--data", data_path,
                              "observation file, one coefficient per line");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::exit_ok : cli::exit_config_error;
    }

    if (self_test) return cli::run_self_test();
    if (app.get_subcommands().empty()) {
        std::fprintf(stderr, "%s", app.help().c_str());
        return cli::exit_config_error;
    }
    CLI::App* active = app.get_subcommands().front();

    try {
        const cli::Config cfg = cli::Config::parse_file(config_path);
        cli::RunConfig run = cli::load_run_config(cfg);
        if (active->count("--seed") > 0) run.seed = seed;
        if (active->count("--out") > 0) run.out_dir = out_dir;
        run.workers = workers == 0 ? 1 : workers;

        if (active == posterior_cmd) return cli::cmd_posterior(run, data_path);
        if (active == rates_cmd) return cli::cmd_rates(run);
        if (active == bounds_cmd) return cli::cmd_bounds(run);
        if (active == diagnostics_cmd) return cli::cmd_diagnostics(run);
        return cli::cmd_figure_rates(run);
    } catch (const cli::ConfigError& e) {
        std::fprintf(stderr, "biplab: %s: %s\n", config_path.c_str(), e.what());
        return cli::exit_config_error;
    } catch (const bip::contraction::TruncationError& e) {
        std::fprintf(stderr, "biplab: %s\n", e.what());
        return cli::exit_guard_abort;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "biplab: %s\n", e.what());
        return cli::exit_config_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "biplab: %s\n", e.what());
        return cli::exit_guard_abort;
    }
}
