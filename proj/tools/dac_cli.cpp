// Command-line front end: run, sweep, certify, coercivity, reference.

#include "dac/experiment.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

namespace {

struct Flags {
    std::string config;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    bool no_plots = false;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--output-dir", f.output_dir, "Artifact directory (overrides outputs.directory)");
    sub->add_option("--seed", f.seed, "Random seed (overrides seed)");
    sub->add_option("--jobs", f.jobs, "Parallel runs for sweeps")->check(CLI::PositiveNumber);
    sub->add_flag("--no-plots", f.no_plots, "Skip SVG plots");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical lab for dyadic adaptive control of semilinear PDEs"};
    app.require_subcommand(1);
    Flags flags;

    using Command = std::function<int(const dac::ExperimentConfig&, const dac::CommandContext&)>;
    const std::map<std::string, std::pair<std::string, Command>> commands{
        {"run", {"Integrate the closed loop and check its gates", dac::command_run}},
        {"sweep", {"gamma sweep with bound-scaling fits", dac::command_sweep}},
        {"certify", {"Lyapunov / KYP certificate on the configured grid", dac::command_certify}},
        {"coercivity", {"Certificate margins under grid refinement", dac::command_coercivity}},
        {"reference", {"Auxiliary reference system and model-following error", dac::command_reference}},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands) {
        subs[name] = app.add_subcommand(name, entry.first);
        add_common(subs[name], flags);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : dac::exit_config_error;
    }

    try {
        dac::ExperimentConfig cfg = dac::parse_config(flags.config);
        if (flags.seed) cfg.seed = *flags.seed;
        dac::CommandContext ctx;
        ctx.output_dir = flags.output_dir.empty() ? cfg.output_directory : flags.output_dir;
        ctx.plots = cfg.plots && !flags.no_plots;
        ctx.jobs = flags.jobs;
        for (const auto& [name, entry] : commands)
            if (subs[name]->parsed()) return entry.second(cfg, ctx);
    } catch (const dac::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dac::exit_config_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dac::exit_runtime_error;
    }
    return dac::exit_runtime_error;
}
