// mmofl command line: run / sweep / validate / oracle
#include <exception>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmofl/config.hpp"
#include "mmofl/errors.hpp"
#include "mmofl/experiment.hpp"
#include "mmofl/oracles.hpp"

namespace {

std::vector<std::string> split_values(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        // trim stray spaces so "--values 0.1, 0.4" works
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

void print_summary(const mmofl::ExperimentSummary& s) {
    std::cout << "seeds:           " << s.seeds.size() << '\n';
    std::cout << "mean final acc:  " << s.mean_final << " (std " << s.std_final << ")\n";
    std::cout << "mean last10 acc: " << s.mean_last10 << " (std " << s.std_last10 << ")\n";
    std::cout << "wall clock:      " << s.wall_seconds << " s\n";
    std::cout << "artifacts:\n";
    for (const auto& f : s.files) std::cout << "  " << f << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mmofl: multimodal online federated learning testbed"};
    app.require_subcommand(1);

    std::string config_path, out_dir, axis, values_csv;
    long long seed_override = -1;

    CLI::App* run = app.add_subcommand("run", "execute one experiment (all configured seeds)");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--seed", seed_override, "override the seed list with a single seed");
    run->add_option("--out", out_dir, "override the output directory");

    CLI::App* sweep = app.add_subcommand("sweep", "run one experiment per axis value");
    sweep->add_option("--config", config_path, "base config file")->required();
    sweep->add_option("--axis", axis, "config key to vary, e.g. strategy.kind")->required();
    sweep->add_option("--values", values_csv, "comma-separated axis values")->required();
    sweep->add_option("--out", out_dir, "override the output directory");

    CLI::App* validate = app.add_subcommand("validate", "parse a config and echo it back");
    validate->add_option("--config", config_path, "config file")->required();

    app.add_subcommand("oracle", "run the independent oracle suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("oracle")) {
            return mmofl::run_oracles(std::cout) == 0 ? 0 : 1;
        }
        mmofl::ExperimentConfig cfg = mmofl::load_config(config_path);
        if (app.got_subcommand("validate")) {
            for (const auto& kv : mmofl::config_echo(cfg))
                std::cout << kv.first << " = " << kv.second << '\n';
            return 0;
        }
        if (!out_dir.empty()) cfg.out = out_dir;
        if (app.got_subcommand("run")) {
            if (seed_override >= 0) {
                cfg.seed = static_cast<std::uint64_t>(seed_override);
                cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
            }
            print_summary(mmofl::run_experiment(cfg));
            return 0;
        }
        // sweep
        std::vector<std::string> values = split_values(values_csv);
        if (values.empty()) throw mmofl::ConfigError("--values: empty list");
        std::vector<mmofl::SweepRow> rows = mmofl::run_sweep(cfg, axis, values);
        std::cout << "axis " << axis << ":\n";
        for (const auto& r : rows)
            std::cout << "  " << r.value << "  " << r.strategy << "  final "
                      << r.mean_final << " +- " << r.std_final << "  last10 "
                      << r.mean_last10 << '\n';
        return 0;
    } catch (const mmofl::ConfigError& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return 2;
    } catch (const mmofl::ParseError& e) {
        std::cerr << "error: parse: " << e.what() << '\n';
        return 2;
    } catch (const mmofl::FormatError& e) {
        std::cerr << "error: io: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
}
