#include <doctest.h>

#include <cmath>
#include <vector>

#include "lada/nn.hpp"

using namespace lada;

namespace {

// Central finite difference on a scalar loss over one parameter slot.
template <class Loss>
double fd_grad(double& slot, Loss loss, double h = 1e-5) {
    double keep = slot;
    slot = keep + h;
    double up = loss();
    slot = keep - h;
    double down = loss();
    slot = keep;
    return (up - down) / (2.0 * h);
}

double rel_err(double a, double b) {
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
    return std::fabs(a - b) / denom;
}

// Direct convolution written independently of the production loops: pad, then
// slide. Used as the forward oracle.
Tensor conv_oracle(const Tensor& input, const Tensor& weights, const Tensor& biases,
                   std::size_t stride, std::size_t padding, Activation act) {
    std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    std::size_t c_out = weights.dim(0), k = weights.dim(2);
    std::size_t ph = h + 2 * padding, pw = w + 2 * padding;
    std::vector<double> padded(c_in * ph * pw, 0.0);
    for (std::size_t c = 0; c < c_in; ++c)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                padded[(c * ph + i + padding) * pw + j + padding] = input.at3(c, i, j);
    std::size_t oh = (ph - k) / stride + 1, ow = (pw - k) / stride + 1;
    Tensor out = Tensor::zeros({c_out, oh, ow});
    for (std::size_t co = 0; co < c_out; ++co)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                double acc = biases.numel() ? biases.data[co] : 0.0;
                for (std::size_t ci = 0; ci < c_in; ++ci)
                    for (std::size_t a = 0; a < k; ++a)
                        for (std::size_t b = 0; b < k; ++b)
                            acc += weights.data[((co * c_in + ci) * k + a) * k + b] *
                                   padded[(ci * ph + i * stride + a) * pw + j * stride + b];
                out.at3(co, i, j) = activate(acc, act);
            }
    return out;
}

}  // namespace

TEST_CASE("activation derivative forms match finite differences") {
    for (Activation a : {Activation::Linear, Activation::Relu, Activation::Elu,
                         Activation::Sigmoid, Activation::Tanh}) {
        for (double x : {-1.7, -0.3, 0.4, 2.1}) {
            double y = activate(x, a);
            double g = activation_grad_from_output(y, a);
            double fd = (activate(x + 1e-6, a) - activate(x - 1e-6, a)) / 2e-6;
            CHECK(rel_err(g, fd) < 1e-4);
        }
    }
}

TEST_CASE("activation names round-trip") {
    for (Activation a : {Activation::Linear, Activation::Relu, Activation::Elu,
                         Activation::Sigmoid, Activation::Tanh})
        CHECK(activation_from_string(to_string(a)) == a);
    CHECK_THROWS_AS(activation_from_string("swish"), ConfigError);
}

TEST_CASE("conv2d_forward matches the direct oracle") {
    Rng rng(2024);
    for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
        LayerParams layer = LayerParams::conv("c", 3, 2, 3);
        layer.init_glorot_uniform(rng);
        Tensor input = Tensor::zeros({2, 5, 6});
        for (double& v : input.data) v = rng.uniform(-1.0, 1.0);
        Tensor got = conv2d_forward(input, layer, stride, 1, Activation::Elu);
        Tensor want = conv_oracle(input, layer.weights, layer.biases, stride, 1,
                                  Activation::Elu);
        REQUIRE(got.shape == want.shape);
        for (std::size_t i = 0; i < got.numel(); ++i)
            CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d_backward gradients agree with finite differences") {
    Rng rng(77);
    LayerParams layer = LayerParams::conv("c", 2, 2, 3);
    layer.init_glorot_uniform(rng);
    Tensor input = Tensor::zeros({2, 4, 5});
    for (double& v : input.data) v = rng.uniform(-1.0, 1.0);
    Tensor target = Tensor::zeros({2, 2, 3});
    for (double& v : target.data) v = rng.uniform(0.0, 1.0);

    const std::size_t stride = 2, padding = 1;
    auto loss = [&] {
        Tensor out = conv2d_forward(input, layer, stride, padding, Activation::Tanh);
        return loss_mse_mae(out, target).mse;
    };

    Tensor out = conv2d_forward(input, layer, stride, padding, Activation::Tanh);
    Tensor upstream = mse_gradient(out, target);
    layer.zero_grad();
    Tensor dinput = conv2d_backward(input, layer, upstream, out, stride, padding,
                                    Activation::Tanh);

    for (std::size_t i = 0; i < layer.weights.numel(); i += 3)
        CHECK(rel_err(layer.grad_weights.data[i], fd_grad(layer.weights.data[i], loss)) <
              1e-4);
    for (std::size_t i = 0; i < layer.biases.numel(); ++i)
        CHECK(rel_err(layer.grad_biases.data[i], fd_grad(layer.biases.data[i], loss)) <
              1e-4);
    for (std::size_t i = 0; i < input.numel(); i += 4)
        CHECK(rel_err(dinput.data[i], fd_grad(input.data[i], loss)) < 1e-4);
}

TEST_CASE("dense forward/backward match a hand matvec and finite differences") {
    Rng rng(31);
    LayerParams layer = LayerParams::dense("d", 4, 6);
    layer.init_glorot_uniform(rng);
    Tensor input = Tensor::zeros({6});
    for (double& v : input.data) v = rng.uniform(-1.0, 1.0);

    Tensor out = dense_forward(input, layer, Activation::Sigmoid);
    REQUIRE(out.numel() == 4);
    for (std::size_t o = 0; o < 4; ++o) {
        double acc = layer.biases.data[o];
        for (std::size_t i = 0; i < 6; ++i)
            acc += layer.weights.at2(o, i) * input.data[i];
        CHECK(out.data[o] == doctest::Approx(activate(acc, Activation::Sigmoid))
                                 .epsilon(1e-12));
    }

    Tensor target = Tensor::zeros({4});
    for (double& v : target.data) v = rng.uniform(0.0, 1.0);
    auto loss = [&] {
        Tensor o = dense_forward(input, layer, Activation::Sigmoid);
        return loss_mse_mae(o, target).mse;
    };
    Tensor upstream = mse_gradient(out, target);
    layer.zero_grad();
    Tensor dinput = dense_backward(input, layer, upstream, out, Activation::Sigmoid);
    for (std::size_t i = 0; i < layer.weights.numel(); ++i)
        CHECK(rel_err(layer.grad_weights.data[i], fd_grad(layer.weights.data[i], loss)) <
              1e-4);
    for (std::size_t i = 0; i < input.numel(); ++i)
        CHECK(rel_err(dinput.data[i], fd_grad(input.data[i], loss)) < 1e-4);
}

TEST_CASE("adam first step matches the closed form") {
    // With g = 1: mhat = 1, vhat = 1, so w -= lr / (1 + eps).
    LayerParams layer = LayerParams::dense("d", 1, 1);
    layer.weights.data[0] = 0.0;
    layer.biases.data[0] = 0.0;
    layer.grad_weights.data[0] = 1.0;
    layer.grad_biases.data[0] = 1.0;
    adam_step(layer, 1e-3);
    double want = -1e-3 / (1.0 + 1e-8);
    CHECK(layer.weights.data[0] == doctest::Approx(want).epsilon(1e-12));
    CHECK(layer.biases.data[0] == doctest::Approx(want).epsilon(1e-12));
    CHECK(layer.grad_weights.data[0] == 0.0);
    CHECK(layer.step_count == 1);
}

TEST_CASE("adam second step follows the reference recurrence") {
    LayerParams layer = LayerParams::matrix("m", 1, 1);
    layer.weights.data[0] = 0.5;
    double w = 0.5, m = 0.0, v = 0.0;
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 3; ++t) {
        double g = 0.25 * t;  // arbitrary deterministic gradients
        layer.grad_weights.data[0] = g;
        adam_step(layer, lr, b1, b2, eps);
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        double mhat = m / (1 - std::pow(b1, t));
        double vhat = v / (1 - std::pow(b2, t));
        w -= lr * mhat / (std::sqrt(vhat) + eps);
        CHECK(layer.weights.data[0] == doctest::Approx(w).epsilon(1e-14));
    }
}

TEST_CASE("adam rejects non-finite gradients naming the layer") {
    LayerParams layer = LayerParams::dense("blowup", 1, 1);
    layer.grad_weights.data[0] = std::nan("");
    CHECK_THROWS_WITH_AS(adam_step(layer, 1e-3),
                         doctest::Contains("blowup"), NumericalError);
}

TEST_CASE("mse gradient matches 2(p-t)/N") {
    Tensor p = Tensor::zeros({3});
    Tensor t = Tensor::zeros({3});
    p.data = {1.0, 2.0, 3.0};
    t.data = {0.0, 2.0, 5.0};
    Tensor g = mse_gradient(p, t);
    CHECK(g.data[0] == doctest::Approx(2.0 / 3.0));
    CHECK(g.data[1] == doctest::Approx(0.0));
    CHECK(g.data[2] == doctest::Approx(-4.0 / 3.0));
    LossReport r = loss_mse_mae(p, t);
    CHECK(r.mse == doctest::Approx((1.0 + 0.0 + 4.0) / 3.0));
    CHECK(r.mae == doctest::Approx((1.0 + 0.0 + 2.0) / 3.0));
}
