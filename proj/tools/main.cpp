// Batch front end: solve, simulate, moments, estimate, counterfactual, report.
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "twocabin/cli.hpp"

using namespace twocabin;

int main(int argc, char** argv) {
    CLI::App app{"two-cabin dynamic pricing and screening toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string tickets_override;
    int workers_override = -1;
    long long seed_override = -1;
    bool force = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "run configuration (JSON)")
            ->required();
        sub->add_option("-o,--out", out_override, "output directory override");
        sub->add_option("-w,--workers", workers_override, "worker count override");
        sub->add_option("-s,--seed", seed_override, "seed override");
        sub->add_option("--tickets", tickets_override, "ticket CSV override");
        sub->add_flag("--force", force, "ignore cached models and libraries");
    };

    CLI::App* c_solve = app.add_subcommand("solve", "solve the pricing model");
    CLI::App* c_sim = app.add_subcommand("simulate", "simulate flights to a ticket CSV");
    CLI::App* c_mom = app.add_subcommand("moments", "empirical moments from tickets");
    CLI::App* c_est = app.add_subcommand("estimate", "fit the mixing density");
    CLI::App* c_cf = app.add_subcommand("counterfactual", "compare pricing mechanisms");
    CLI::App* c_rep = app.add_subcommand("report", "reports from a solved model");
    for (CLI::App* sub : {c_solve, c_sim, c_mom, c_est, c_cf, c_rep}) add_common(sub);

    CLI11_PARSE(app, argc, argv);

    RunConfig cfg;
    try {
        cfg = RunConfig::from_file(config_path);
    } catch (const std::exception& e) {
        std::cerr << "twocabin: " << e.what() << '\n';
        return kExitConfig;
    }

    // precedence: command line > environment > config file
    if (const char* env = std::getenv("TWOCABIN_OUT")) cfg.output_dir = env;
    if (const char* env = std::getenv("TWOCABIN_WORKERS")) cfg.workers = std::atoi(env);
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (workers_override >= 0) cfg.workers = workers_override;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (!tickets_override.empty()) cfg.tickets_path = tickets_override;
    if (force) cfg.force = true;

    if (c_solve->parsed()) return cmd_solve(cfg);
    if (c_sim->parsed()) return cmd_simulate(cfg);
    if (c_mom->parsed()) return cmd_moments(cfg);
    if (c_est->parsed()) return cmd_estimate(cfg);
    if (c_cf->parsed()) return cmd_counterfactual(cfg);
    if (c_rep->parsed()) return cmd_report(cfg);
    return kExitConfig;
}
