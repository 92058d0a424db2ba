#pragma once

#include <cstdint>
#include <string>

#include "lada/rng.hpp"
#include "lada/tensor.hpp"

namespace lada {

enum class Activation { Linear, Relu, Elu, Sigmoid, Tanh };

Activation activation_from_string(const std::string& name);
const char* to_string(Activation a);

double activate(double x, Activation a);

// Derivative expressed through the post-activation value y = act(x). All
// activations used here admit this form, which lets backward passes avoid
// caching pre-activation tensors:
//   relu: 1 if y > 0 else 0; sigmoid: y(1-y); tanh: 1-y^2;
//   elu: y+1 for the negative branch (y < 0), 1 otherwise; linear: 1.
double activation_grad_from_output(double y, Activation a);

void activate_inplace(Tensor& t, Activation a);

// One layer's parameters plus its gradient and Adam accumulators. Keeping them
// together means optimizer state can never be paired with the wrong tensor.
struct LayerParams {
    std::string name;  // diagnostics only, e.g. "enc_conv1"
    Tensor weights;
    Tensor biases;  // may be empty (recurrent matrices carry no bias)
    Tensor grad_weights;
    Tensor grad_biases;
    Tensor m_weights, v_weights;
    Tensor m_biases, v_biases;
    std::int64_t step_count = 0;

    // Conv weights are [c_out, c_in, k, k], biases [c_out].
    static LayerParams conv(std::string name, std::size_t c_out, std::size_t c_in,
                            std::size_t k);
    // Dense weights are [n_out, n_in], biases [n_out].
    static LayerParams dense(std::string name, std::size_t n_out, std::size_t n_in);
    // Dense without bias.
    static LayerParams matrix(std::string name, std::size_t n_out, std::size_t n_in);

    void zero_grad();
    void init_glorot_uniform(Rng& rng);
    std::size_t param_count() const { return weights.numel() + biases.numel(); }
};

// 2-D convolution, input [c_in, h, w] -> output [c_out, h', w'] with
// h' = (h + 2*padding - k)/stride + 1 (floor). Zero padding.
Tensor conv2d_forward(const Tensor& input, const LayerParams& layer, std::size_t stride,
                      std::size_t padding, Activation act);

// Accumulates weight/bias gradients into `layer` and returns dL/d(input).
// `upstream` is dL/d(output) and `output` the forward result (post-activation).
Tensor conv2d_backward(const Tensor& input, LayerParams& layer, const Tensor& upstream,
                       const Tensor& output, std::size_t stride, std::size_t padding,
                       Activation act);

Tensor dense_forward(const Tensor& input, const LayerParams& layer, Activation act);

Tensor dense_backward(const Tensor& input, LayerParams& layer, const Tensor& upstream,
                      const Tensor& output, Activation act);

// Adam with bias correction; epsilon sits outside the square root:
//   w -= lr * mhat / (sqrt(vhat) + eps).
// Gradient accumulators are zeroed afterwards. Non-finite gradients raise
// NumericalError naming the layer.
void adam_step(LayerParams& layer, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

struct LossReport {
    double mse = 0.0;
    double mae = 0.0;
};

struct TrainOptions {
    std::size_t epochs = 60;
    std::size_t batch = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    // Stop once validation MSE drops below this (0 disables). Never stops
    // before `min_epochs`. Same seed always stops at the same epoch.
    double early_stop_val_mse = 0.0;
    std::size_t min_epochs = 5;
};

struct EpochReport {
    std::size_t epoch = 0;  // 1-based
    LossReport train;
    LossReport val;
};

LossReport loss_mse_mae(const Tensor& pred, const Tensor& target);

// dMSE/dpred = 2 (pred - target) / numel.
Tensor mse_gradient(const Tensor& pred, const Tensor& target);

}  // namespace lada
