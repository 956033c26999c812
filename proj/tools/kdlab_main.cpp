// Experiment runner CLI: dataset generation, preset training runs under
// cross-validation, and cross-run comparison tables.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kdlab/errors.hpp"
#include "kdlab/experiment.hpp"

namespace {

// Exit codes per error class, so scripts can tell a bad config from a bad
// file from a bad run.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitOther = 4;

kdlab::ExperimentConfig load(const std::string& config_path, std::uint64_t seed_override, bool has_seed,
                             int workers_override, bool has_workers) {
    kdlab::ExperimentConfig cfg = kdlab::load_config(config_path);
    if (has_seed) cfg.seed = seed_override;
    if (has_workers) cfg.workers = workers_override;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kdlab: teacher-student knowledge transfer experiments on synthetic image data"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string data_dir;
    std::uint64_t seed = 0;
    int workers = 0;
    std::vector<std::string> run_dirs;

    auto* gen = app.add_subcommand("gen-data", "Generate target, source, and unlabeled dataset files");
    gen->add_option("--config", config_path, "Experiment config file")->required();
    gen->add_option("--out", out_dir, "Output directory");
    auto* gen_seed = gen->add_option("--seed", seed, "Override the config seed");

    auto* run = app.add_subcommand("run", "Train the configured preset under cross-validation");
    run->add_option("--config", config_path, "Experiment config file")->required();
    run->add_option("--data", data_dir, "Directory holding the .kdds dataset files")->required();
    run->add_option("--out", out_dir, "Output directory for metrics, curves, and parameters");
    auto* run_seed = run->add_option("--seed", seed, "Override the config seed");
    auto* run_workers = run->add_option("--workers", workers, "Parallel fold workers");

    auto* cmp = app.add_subcommand("compare", "Merge run outputs into a preset x architecture summary");
    cmp->add_option("--runs", run_dirs, "Run output directories")->required()->expected(-1);
    cmp->add_option("--out", out_dir, "Output directory for summary.csv / summary.txt");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto cfg = load(config_path, seed, !gen_seed->empty(), 0, false);
            return kdlab::cmd_gen_data(cfg, out_dir);
        }
        if (run->parsed()) {
            const auto cfg = load(config_path, seed, !run_seed->empty(), workers, !run_workers->empty());
            return kdlab::cmd_run(cfg, data_dir, out_dir);
        }
        std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
        return kdlab::cmd_compare(dirs, out_dir);
    } catch (const kdlab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const kdlab::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitOther;
    }
}
