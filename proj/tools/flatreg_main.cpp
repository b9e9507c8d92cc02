#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "flatreg/config.hpp"
#include "flatreg/errors.hpp"
#include "flatreg/experiments.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    long seed = -1;
    std::string out;
};

int run_command(const std::string& kind, const CliOptions& options) {
    flatreg::ExperimentConfig config = flatreg::load_config(options.config_path);
    config.kind = kind;
    if (options.seed >= 0) config.hp.seed = static_cast<std::uint64_t>(options.seed);
    if (!options.out.empty()) config.out = options.out;
    return flatreg::execute_command(config);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flatreg: label-noise SGD implicit-regularization laboratory"};
    app.require_subcommand(1);

    CliOptions options;
    const std::vector<std::string> kinds = {"verify", "escape", "cycle",
                                            "couple", "limits", "constants"};
    for (const std::string& kind : kinds) {
        CLI::App* sub = app.add_subcommand(kind);
        sub->add_option("--config", options.config_path, "run configuration file")->required();
        sub->add_option("--seed", options.seed, "override hp.seed");
        sub->add_option("--out", options.out, "override output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return run_command(app.get_subcommands().front()->get_name(), options);
    } catch (const flatreg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
