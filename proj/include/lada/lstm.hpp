#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lada/dataset.hpp"
#include "lada/nn.hpp"

namespace lada::lstm {

struct LstmConfig {
    std::size_t latent_dim = 7;
    std::size_t hidden = 30;
    std::size_t lookback = 3;
    Activation projection_activation = Activation::Elu;

    void validate() const;
};

// One gate: contribution b + U x + W u from the step input x and the previous
// hidden state u. The recurrent matrix carries no bias of its own.
struct GateParams {
    LayerParams input;      // [hidden, latent_dim] + bias [hidden]
    LayerParams recurrent;  // [hidden, hidden], no bias
};

// Single-layer LSTM over latent vectors plus a dense projection back to the
// latent dimension. Gate wiring per step (x input, u hidden, s cell):
//   forget f = sigmoid(b_f + U_f x + W_f u)
//   input  i = sigmoid(b_i + U_i x + W_i u)
//   cand   g = tanh   (b_g + U_g x + W_g u)
//   s' = f.s + i.g
//   output o = sigmoid(b_o + U_o x + W_o u)
//   u' = tanh(s') . o
// Prediction after q steps: act(P u_q + b_p) with the configured projection
// activation.
struct LstmModel {
    LstmConfig config;
    GateParams forget_gate, input_gate, cell_candidate, output_gate;
    LayerParams projection;  // [latent_dim, hidden] + bias

    static LstmModel init(const LstmConfig& cfg, Rng& rng);
    std::size_t param_count() const;
};

struct LstmState {
    std::vector<double> hidden;  // u
    std::vector<double> cell;    // s
};

LstmState zero_state(const LstmConfig& cfg);

// One recurrence step.
LstmState lstm_cell(const LstmModel& model, const std::vector<double>& x,
                    const LstmState& state);

// Runs the cell over a lookback window (length == config.lookback, vectors of
// length latent_dim, zero initial state) and projects the final hidden state.
std::vector<double> forecast(const LstmModel& model,
                             const std::vector<std::vector<double>>& window);

LossReport evaluate(const LstmModel& model,
                    const std::vector<dataset::SequenceSample>& samples);

// MSE of predicting each target as the last window entry. The floor any useful
// surrogate has to beat.
double persistence_mse(const std::vector<dataset::SequenceSample>& samples);

// One forward/backward pass for a single sample: adds the gradient of the
// prediction MSE into the model's gradient accumulators (backpropagation
// through the unrolled window) and returns the sample's loss. Training drives
// this internally; exposed so gradients can be compared against finite
// differences.
LossReport accumulate_gradients(LstmModel& model, const dataset::SequenceSample& sample);

struct TrainResult {
    std::vector<EpochReport> reports;
    bool stopped_early = false;
};

// Adam on mean-batch MSE with backpropagation through the unrolled window.
// Deterministic for a fixed seed; single-threaded (the model is small enough
// that threading would only add overhead).
TrainResult train_lstm(LstmModel& model, const std::vector<dataset::SequenceSample>& train,
                       const std::vector<dataset::SequenceSample>& val,
                       const TrainOptions& opts);

void save_model(const LstmModel& model, const std::string& path);
LstmModel load_model(const std::string& path);

}  // namespace lada::lstm
