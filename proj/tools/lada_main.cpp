#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "lada/harness.hpp"

namespace {

struct CliArgs {
    std::string config_path;
    std::string out_dir;
    bool has_seed = false;
    std::uint64_t seed = 0;
    bool has_threads = false;
    std::size_t threads = 0;
};

lada::harness::ExperimentConfig resolve_config(const CliArgs& args) {
    lada::harness::ExperimentConfig cfg = args.config_path.empty()
                                     ? lada::harness::ExperimentConfig::desk_default()
                                     : lada::harness::config_from_json_file(args.config_path);
    if (args.has_seed) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.has_threads) cfg.threads = args.threads;
    cfg.validate();
    return cfg;
}

void print_stage_times(const lada::harness::PipelineResult& result) {
    for (const auto& [stage, secs] : result.stage_seconds)
        std::printf("%-18s %10.3f s\n", stage.c_str(), secs);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent-space data assimilation experiments"};
    app.require_subcommand(1);

    CliArgs args;
    app.add_option("--config", args.config_path, "JSON config file; defaults apply otherwise")
        ->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", args.seed, "override the experiment seed");
    app.add_option("--out", args.out_dir, "override the output directory");
    auto* threads_opt =
        app.add_option("--threads", args.threads, "worker threads for training");

    struct Sub {
        const char* name;
        const char* help;
        void (*run)(const lada::harness::ExperimentConfig&);
    };
    const Sub subs[] = {
        {"generate", "simulate the scene and write fields, snapshots and observations",
         lada::harness::cli_generate},
        {"split", "assign timesteps to train/val/test and write split.csv",
         lada::harness::cli_split},
        {"train-ae", "train the autoencoder on the generated fields",
         lada::harness::cli_train_ae},
        {"train-lstm", "encode latents and train the sequence surrogate",
         lada::harness::cli_train_lstm},
        {"assimilate", "run the latent Kalman correction for every configured R mode",
         lada::harness::cli_assimilate},
        {"baseline-da", "run the full-space Kalman correction on decoded forecasts",
         lada::harness::cli_baseline_da},
        {"gridsearch-ae", "cross-validated autoencoder hyperparameter grid",
         [](const lada::harness::ExperimentConfig& cfg) { lada::harness::run_grid_search_ae(cfg); }},
        {"gridsearch-lstm", "repeated-fit surrogate hyperparameter grid",
         [](const lada::harness::ExperimentConfig& cfg) { lada::harness::run_grid_search_lstm(cfg); }},
        {"sweep-latent", "retrain and assimilate across latent sizes",
         [](const lada::harness::ExperimentConfig& cfg) { lada::harness::run_latent_sweep(cfg); }},
    };
    for (const auto& sub : subs) app.add_subcommand(sub.name, sub.help)->fallthrough();
    app.add_subcommand("report", "run the full pipeline and emit every table and image")
        ->fallthrough();

    CLI11_PARSE(app, argc, argv);
    args.has_seed = seed_opt->count() > 0;
    args.has_threads = threads_opt->count() > 0;

    try {
        lada::harness::ExperimentConfig cfg = resolve_config(args);
        for (const auto& sub : subs)
            if (app.got_subcommand(sub.name)) {
                sub.run(cfg);
                return 0;
            }
        // report
        lada::harness::PipelineResult result = lada::harness::run_full_pipeline(cfg);
        print_stage_times(result);
        std::printf("artifacts in %s\n", result.out_dir.c_str());
        return 0;
    } catch (const lada::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const lada::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
