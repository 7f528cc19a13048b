#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "kacdiff/commands.hpp"
#include "kacdiff/errors.hpp"
#include "kacdiff/io.hpp"

using namespace kacdiff;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replicas;
    std::optional<std::string> out;
    std::optional<double> tol;
    std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "Experiment config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "Override the simulation seed");
    cmd->add_option("--replicas", f.replicas, "Override the number of replicas");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--tol", f.tol, "Relative tolerance of the moment tables");
    cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores); never changes results");
}

ExperimentConfig load(const Flags& f) {
    ExperimentConfig cfg = load_experiment(f.config);
    if (f.seed) cfg.override_seed(*f.seed);
    if (f.replicas) cfg.override_replicas(*f.replicas);
    if (f.out) cfg.override_out_dir(*f.out);
    if (f.tol) cfg.override_tolerance(*f.tol);
    if (f.threads) cfg.override_threads(*f.threads);
    return cfg;
}

int report(const CommandOutcome& outcome) {
    for (const auto& m : outcome.messages) std::cout << m << '\n';
    for (const auto& file : outcome.files) std::cout << "wrote " << file << '\n';
    return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hitting-time moments and deviation bounds for one-dimensional diffusions"};
    app.set_version_flag("--version", std::string(version()));
    app.require_subcommand(1);

    Flags flags;
    auto* model = app.add_subcommand("model", "Recurrence class, speed mass and assumption checks");
    auto* moments = app.add_subcommand("moments", "Kac moment table with the closed-form bound overlay");
    auto* deviation = app.add_subcommand("deviation", "Empirical deviation frequencies against the bounds");
    auto* selftest = app.add_subcommand("selftest", "Built-in checks against closed forms");
    for (auto* cmd : {model, moments, deviation}) add_common(cmd, flags);
    unsigned selftest_threads = 2;
    selftest->add_option("--threads", selftest_threads, "Threads for the determinism check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (selftest->parsed()) return report(cmd_selftest(selftest_threads));
        const ExperimentConfig cfg = load(flags);
        if (model->parsed()) return report(cmd_model(cfg));
        if (moments->parsed()) return report(cmd_moments(cfg));
        return report(cmd_deviation(cfg));
    } catch (const ParseError& e) {
        std::cerr << flags.config << ": " << e.what() << '\n';
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const RangeError& e) {
        std::cerr << "RangeError: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}
