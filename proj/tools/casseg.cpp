#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "casseg/errors.hpp"
#include "casseg/experiments.hpp"

namespace {

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

int run(const std::string& command, const Options& opt) {
    using namespace casseg;
    ExperimentConfig cfg = ExperimentConfig::load(opt.config);
    if (to_string(cfg.kind) != command) {
        throw ConfigError("config " + opt.config + " describes '" + to_string(cfg.kind) + "', not '" + command + "'");
    }
    if (opt.seed) cfg.seed = *opt.seed;

    const std::filesystem::path out(opt.out);
    std::filesystem::create_directories(out);
    const auto start = std::chrono::steady_clock::now();
    const Report report = run_experiment(cfg);
    write_report(report, out);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

    std::cout << command << ": " << report.body.value("status", "n/a") << " (" << elapsed.count() << " s), report in "
              << (out / "report.json").string() << '\n';
    return report.passed() ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Class-agnostic segmentation losses: experiments and checks"};
    app.require_subcommand(1);

    Options opt;
    std::string chosen;
    for (const char* name : {"gradcheck", "toy-imbalance", "saliency", "multiregion", "props"}) {
        auto* sub = app.add_subcommand(name, std::string("Run the ") + name + " experiment");
        sub->add_option("--config", opt.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "Output directory (created if missing)")->required();
        sub->add_option("--seed", opt.seed, "Override the config seed");
        sub->callback([&chosen, name] { chosen = name; });
    }
    CLI11_PARSE(app, argc, argv);

    try {
        return run(chosen, opt);
    } catch (const casseg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
