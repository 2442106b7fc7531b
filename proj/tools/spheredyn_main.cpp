// spheredyn - command-line driver for the sphere token-dynamics experiments.
//
// Exit codes: 0 success, 2 config error, 3 numerical failure.
#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <thread>

#include "spheredyn/harness.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int trials = 0;
    int workers = 0;
    bool no_timestamp = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", f.out_dir, "output directory (default: config output_path)");
    cmd->add_option("--seed", f.seed, "override master_seed")->each([&](const std::string&) {
        f.seed_set = true;
    });
    cmd->add_option("--trials", f.trials, "override trial count");
    cmd->add_option("--workers", f.workers, "worker threads (default: hardware, capped at 8)");
    cmd->add_flag("--no-timestamp", f.no_timestamp, "suppress the timestamp header line");
}

int run(const std::string& experiment, const CommonFlags& f) {
    spheredyn::ExperimentConfig config = spheredyn::ExperimentConfig::from_file(f.config_path);
    if (config.experiment != experiment) {
        throw spheredyn::ConfigError("config declares experiment \"" + config.experiment +
                                     "\" but subcommand is \"" + experiment + "\"");
    }
    if (f.seed_set) config.master_seed = f.seed;
    if (f.trials > 0) config.trials = f.trials;
    if (!f.out_dir.empty()) config.output_path = f.out_dir;
    int workers = f.workers;
    if (workers <= 0) {
        workers = static_cast<int>(std::thread::hardware_concurrency());
        workers = std::min(std::max(workers, 1), 8);
    }
    const std::string path =
        spheredyn::run_experiment_to_files(config, workers, !f.no_timestamp);
    std::cout << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sphere token-dynamics laboratory"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> subcommands = {
        {"kernel-table", "kernel_table"}, {"simulate", "simulate"},
        {"deep-rate", "deep_rate"},       {"wide-rate", "wide_rate"},
        {"chaos", "chaos"},               {"sync", "sync"},
        {"lyapunov", "lyapunov"}};

    std::vector<CommonFlags> flags(subcommands.size());
    for (size_t i = 0; i < subcommands.size(); ++i) {
        CLI::App* cmd = app.add_subcommand(subcommands[i].first);
        add_common(cmd, flags[i]);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        for (size_t i = 0; i < subcommands.size(); ++i) {
            if (app.get_subcommand(subcommands[i].first)->parsed()) {
                return run(subcommands[i].second, flags[i]);
            }
        }
    } catch (const spheredyn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
