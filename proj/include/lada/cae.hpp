#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lada/nn.hpp"
#include "lada/scene.hpp"

namespace lada::cae {

// Convolutional autoencoder over single-channel fields. Encoder: `layers`
// stride-2 convolutions (kernel x kernel, zero padding 1) followed by a dense
// map to the latent vector. Decoder mirrors it: dense back to the coarsest
// grid, then per level nearest-neighbour 2x upsampling (cropped to the shape
// the encoder produced at that level) plus a stride-1 convolution, and a final
// stride-1 convolution with sigmoid that restores one channel in [0, 1].
struct CaeArchitecture {
    std::size_t input_rows = 45, input_cols = 62, input_channels = 1;
    std::size_t layers = 4;
    std::size_t filters = 16;
    std::size_t kernel = 3;
    Activation conv_activation = Activation::Relu;
    std::size_t latent_dim = 7;
    Activation latent_activation = Activation::Elu;

    void validate() const;
    // Spatial dims per level, entry 0 = input, entry `layers` = coarsest.
    std::vector<std::pair<std::size_t, std::size_t>> level_shapes() const;
};

struct CaeModel {
    CaeArchitecture arch;
    std::vector<LayerParams> enc_convs;
    LayerParams enc_dense;
    LayerParams dec_dense;
    std::vector<LayerParams> dec_convs;  // layers upsample-convs + final sigmoid conv
    std::vector<std::pair<std::size_t, std::size_t>> shapes;  // cached level_shapes()

    static CaeModel init(const CaeArchitecture& arch, Rng& rng);
    std::size_t param_count() const;
};

// Field <-> latent. encode expects a field matching the architecture's input
// shape; decode returns a field of that shape with values in (0, 1).
std::vector<double> encode(const CaeModel& model, const scene::Field& field);
scene::Field decode(const CaeModel& model, const std::vector<double>& latent);
scene::Field reconstruct(const CaeModel& model, const scene::Field& field);

// Reconstruction loss averaged over fields.
LossReport evaluate(const CaeModel& model, const std::vector<scene::Field>& fields);

// One forward/backward pass for a single field: adds the gradient of the
// reconstruction MSE into the model's gradient accumulators and returns the
// sample's loss. Training drives this internally; exposed so gradients can be
// compared against finite differences.
LossReport accumulate_gradients(CaeModel& model, const scene::Field& field);

struct TrainResult {
    std::vector<EpochReport> reports;
    bool stopped_early = false;
};

// Adam on mean-batch MSE gradients. Deterministic for a fixed seed, including
// across thread counts: each batch is split into fixed-size chunks whose
// partial gradients merge in chunk order, so the floating-point reduction tree
// never depends on the worker count. Raises NumericalError on divergence.
TrainResult train_cae(CaeModel& model, const std::vector<scene::Field>& train_fields,
                      const std::vector<scene::Field>& val_fields,
                      const TrainOptions& opts);

struct CvCell {
    LossReport holdout;
    double train_seconds = 0.0;
};

struct CvStats {
    std::vector<CvCell> cells;  // k * repeats entries
    double mean_mse = 0.0, std_mse = 0.0;
    double mean_mae = 0.0, std_mae = 0.0;
    double mean_seconds = 0.0, std_seconds = 0.0;
};

// k-fold cross-validation: trains a fresh model per fold (and per repeat, with
// a distinct init stream) and scores the holdout reconstruction loss.
CvStats cross_validate(const CaeArchitecture& arch, const std::vector<scene::Field>& fields,
                       std::size_t k, std::size_t repeats, const TrainOptions& opts);

void save_model(const CaeModel& model, const std::string& path);
CaeModel load_model(const std::string& path);

}  // namespace lada::cae
