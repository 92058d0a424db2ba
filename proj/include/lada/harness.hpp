#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lada/assimilate.hpp"
#include "lada/config.hpp"
#include "lada/dataset.hpp"
#include "lada/io.hpp"

namespace lada::harness {

// Labelled numeric table; a cell left empty marks a failed run (rendered as
// "failed" in CSV). Row labels are unique and every filled cell is finite.
struct ResultTable {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::string> row_labels;
    std::vector<std::vector<std::optional<double>>> cells;

    void add_row(const std::string& label, std::vector<std::optional<double>> row);
    void validate() const;
    void write_csv(const std::string& path) const;
    // Row label with the smallest value in `column`; empty cells never win.
    std::string best_row(const std::string& column) const;
};

struct PipelineResult {
    dataset::SplitAssignment split;
    std::vector<scene::Field> fields;      // normalized, one per timestep
    std::vector<scene::Field> obs_fields;  // normalized, aligned with usable obs
    std::vector<std::size_t> obs_timesteps;
    cae::CaeModel cae_model;
    cae::TrainResult cae_train;
    lstm::LstmModel lstm_model;
    lstm::TrainResult lstm_train;
    double lstm_val_mse = 0.0;
    double lstm_persistence_val_mse = 0.0;
    std::vector<std::vector<double>> latents;  // one per timestep
    // One result per configured R mode, in configuration order.
    std::vector<std::pair<std::string, da::AssimResult>> la_results;
    std::optional<da::AssimResult> sda_result;
    ResultTable la_table;
    std::vector<std::pair<std::string, double>> stage_seconds;
    std::string out_dir;
};

// Scene -> sensors -> split -> autoencoder -> latents -> surrogate ->
// assimilation (latent and, if enabled, full-space) with every artifact
// written under cfg.out_dir. Stages run in order; a failing stage aborts the
// run with its exception, leaving earlier artifacts on disk.
PipelineResult run_full_pipeline(const ExperimentConfig& cfg);

// Autoencoder hyperparameter grid: cross-validated reconstruction over the
// training fields. Rows are labelled f<filters>_<act>_e<epochs>_b<batch>.
ResultTable run_grid_search_ae(const ExperimentConfig& cfg);

// Surrogate grid over encoded latents (trains or loads the base autoencoder
// first). Rows are labelled n<neurons>_<act>_q<lookback>_e<epochs>_b<batch>;
// means/stds are over `repeats` re-initialized fits.
ResultTable run_grid_search_lstm(const ExperimentConfig& cfg);

struct SweepResult {
    ResultTable latent_mse;    // rows: latent sizes; no-assimilation + per R mode
    ResultTable physical_mse;  // decoded errors per R mode
    ResultTable timing;        // correction seconds per R mode, plus mean/median
    // Raw per-correction wall times pooled over all R modes, keyed by the row
    // label. Medians over these are stable against scheduler spikes where a
    // single outlier would distort the mean.
    std::vector<std::pair<std::string, std::vector<double>>> correction_samples;
};

// Re-trains autoencoder + surrogate per latent size and re-runs the latent
// assimilation, holding the scene and split fixed.
SweepResult run_latent_sweep(const ExperimentConfig& cfg);

// Individual pipeline stages operating through the artifact directory; the CLI
// maps one subcommand to each. Implemented in terms of the same functions
// run_full_pipeline uses.
void cli_generate(const ExperimentConfig& cfg);
void cli_split(const ExperimentConfig& cfg);
void cli_train_ae(const ExperimentConfig& cfg);
void cli_train_lstm(const ExperimentConfig& cfg);
void cli_assimilate(const ExperimentConfig& cfg);
void cli_baseline_da(const ExperimentConfig& cfg);

}  // namespace lada::harness
