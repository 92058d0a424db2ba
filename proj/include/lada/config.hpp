#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lada/assimilate.hpp"
#include "lada/cae.hpp"
#include "lada/lstm.hpp"
#include "lada/scene.hpp"

namespace lada::harness {

struct CaeStageConfig {
    cae::CaeArchitecture arch;
    TrainOptions train;
};

struct LstmStageConfig {
    lstm::LstmConfig model;
    TrainOptions train;
};

struct AssimStageConfig {
    std::vector<da::RMode> r_modes;  // run order == report order
    bool normalize_covariance = false;
    // States sampled for the background covariance: "val" or "train".
    std::string background_set = "val";
    // Mode whose analyses feed the triptych renders; must match one label.
    std::string triptych_mode = "sigma_0.0001";
};

struct BaselineStageConfig {
    bool enabled = true;
    std::size_t background_cap = 32;
    da::RMode r_mode;
    std::size_t gain_storage_cap = 512;
};

struct GridSearchAeConfig {
    std::vector<std::size_t> filters{8, 16};
    std::vector<Activation> activations{Activation::Relu, Activation::Elu};
    std::vector<std::size_t> epochs{20};
    std::vector<std::size_t> batches{16};
    std::size_t k = 5;
    std::size_t repeats = 1;
};

struct GridSearchLstmConfig {
    std::vector<std::size_t> neurons{15, 30};
    std::vector<Activation> activations{Activation::Elu};
    std::vector<std::size_t> lookbacks{3};
    std::vector<std::size_t> epochs{100};
    std::vector<std::size_t> batches{16};
    std::size_t repeats = 5;
};

struct SweepConfig {
    std::vector<std::size_t> latent_sizes{4, 7, 16, 64};
    std::size_t cae_epochs = 8;
    std::size_t lstm_epochs = 60;
};

struct ExperimentConfig {
    std::uint64_t seed = 20240817;
    std::size_t threads = 1;
    std::string out_dir = "out";

    scene::SceneConfig scene;
    scene::SensorSet sensors;
    std::vector<std::size_t> observation_timesteps;
    std::size_t split_jump = 1;
    // Solver steps per stored snapshot: the dataset keeps every
    // snapshot_stride-th simulated state, so one dataset timestep spans that
    // many units of scene time. Must be >= 1.
    std::size_t snapshot_stride = 1;

    CaeStageConfig cae;
    LstmStageConfig lstm;
    AssimStageConfig assimilation;
    BaselineStageConfig baseline;
    GridSearchAeConfig gridsearch_ae;
    GridSearchLstmConfig gridsearch_lstm;
    SweepConfig sweep;

    static ExperimentConfig desk_default();
    void validate() const;
};

// JSON round-trip. Parsing starts from desk_default(), so a config file only
// needs the fields it overrides. Unknown keys are rejected.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig config_from_json_file(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);

}  // namespace lada::harness
