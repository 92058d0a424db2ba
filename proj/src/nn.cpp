#include "lada/nn.hpp"

#include <algorithm>
#include <cmath>

namespace lada {

Activation activation_from_string(const std::string& name) {
    if (name == "linear") return Activation::Linear;
    if (name == "relu") return Activation::Relu;
    if (name == "elu") return Activation::Elu;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation '" + name + "'");
}

const char* to_string(Activation a) {
    switch (a) {
        case Activation::Linear: return "linear";
        case Activation::Relu: return "relu";
        case Activation::Elu: return "elu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

double activate(double x, Activation a) {
    switch (a) {
        case Activation::Linear: return x;
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Elu: return x > 0.0 ? x : std::expm1(x);
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

double activation_grad_from_output(double y, Activation a) {
    switch (a) {
        case Activation::Linear: return 1.0;
        case Activation::Relu: return y > 0.0 ? 1.0 : 0.0;
        case Activation::Elu: return y < 0.0 ? y + 1.0 : 1.0;
        case Activation::Sigmoid: return y * (1.0 - y);
        case Activation::Tanh: return 1.0 - y * y;
    }
    return 1.0;
}

void activate_inplace(Tensor& t, Activation a) {
    if (a == Activation::Linear) return;
    for (double& v : t.data) v = activate(v, a);
}

LayerParams LayerParams::conv(std::string name, std::size_t c_out, std::size_t c_in,
                              std::size_t k) {
    require(c_out > 0 && c_in > 0 && k > 0, "conv layer dims must be positive");
    LayerParams p;
    p.name = std::move(name);
    p.weights = Tensor({c_out, c_in, k, k});
    p.biases = Tensor({c_out});
    p.grad_weights = Tensor(p.weights.shape);
    p.grad_biases = Tensor(p.biases.shape);
    p.m_weights = Tensor(p.weights.shape);
    p.v_weights = Tensor(p.weights.shape);
    p.m_biases = Tensor(p.biases.shape);
    p.v_biases = Tensor(p.biases.shape);
    return p;
}

LayerParams LayerParams::dense(std::string name, std::size_t n_out, std::size_t n_in) {
    require(n_out > 0 && n_in > 0, "dense layer dims must be positive");
    LayerParams p;
    p.name = std::move(name);
    p.weights = Tensor({n_out, n_in});
    p.biases = Tensor({n_out});
    p.grad_weights = Tensor(p.weights.shape);
    p.grad_biases = Tensor(p.biases.shape);
    p.m_weights = Tensor(p.weights.shape);
    p.v_weights = Tensor(p.weights.shape);
    p.m_biases = Tensor(p.biases.shape);
    p.v_biases = Tensor(p.biases.shape);
    return p;
}

LayerParams LayerParams::matrix(std::string name, std::size_t n_out, std::size_t n_in) {
    LayerParams p = dense(std::move(name), n_out, n_in);
    p.biases = Tensor();
    p.grad_biases = Tensor();
    p.m_biases = Tensor();
    p.v_biases = Tensor();
    return p;
}

void LayerParams::zero_grad() {
    grad_weights.fill(0.0);
    grad_biases.fill(0.0);
}

void LayerParams::init_glorot_uniform(Rng& rng) {
    // fan_in/fan_out: dense [out,in] -> in/out; conv [co,ci,k,k] ->
    // ci*k*k / co*k*k. Bound = sqrt(6 / (fan_in + fan_out)).
    std::size_t fan_in, fan_out;
    if (weights.rank() == 4) {
        std::size_t rf = weights.dim(2) * weights.dim(3);
        fan_in = weights.dim(1) * rf;
        fan_out = weights.dim(0) * rf;
    } else {
        fan_out = weights.dim(0);
        fan_in = weights.dim(1);
    }
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& w : weights.data) w = rng.uniform(-bound, bound);
    for (double& b : biases.data) b = 0.0;
}

namespace {

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride,
                                std::size_t padding) {
    std::size_t padded = in + 2 * padding;
    require(padded >= k, "conv kernel larger than padded input");
    return (padded - k) / stride + 1;
}

void check_conv_args(const Tensor& input, const LayerParams& layer, std::size_t stride) {
    require(stride > 0, "conv stride must be positive");
    require(input.rank() == 3, "conv input must be [c_in, h, w], got " + input.shape_str());
    require(layer.weights.rank() == 4, "conv weights must be [c_out, c_in, k, k]");
    if (layer.weights.dim(1) != input.dim(0))
        throw ConfigError("conv '" + layer.name + "': input has " +
                          std::to_string(input.dim(0)) + " channels, weights expect " +
                          std::to_string(layer.weights.dim(1)));
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const LayerParams& layer, std::size_t stride,
                      std::size_t padding, Activation act) {
    check_conv_args(input, layer, stride);
    const std::size_t c_out = layer.weights.dim(0), c_in = layer.weights.dim(1);
    const std::size_t k = layer.weights.dim(2);
    const std::size_t h = input.dim(1), w = input.dim(2);
    const std::size_t oh = conv_out_dim(h, k, stride, padding);
    const std::size_t ow = conv_out_dim(w, k, stride, padding);

    Tensor out({c_out, oh, ow});
    const long s = static_cast<long>(stride), p = static_cast<long>(padding);
    for (std::size_t co = 0; co < c_out; ++co) {
        double b = layer.biases.numel() ? layer.biases[co] : 0.0;
        double* oplane = &out.data[co * oh * ow];
        for (std::size_t i = 0; i < oh * ow; ++i) oplane[i] = b;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            const double* iplane = &input.data[ci * h * w];
            for (std::size_t kh = 0; kh < k; ++kh) {
                for (std::size_t kw = 0; kw < k; ++kw) {
                    double wgt = layer.weights.data[((co * c_in + ci) * k + kh) * k + kw];
                    if (wgt == 0.0) continue;
                    for (std::size_t r = 0; r < oh; ++r) {
                        long ih = static_cast<long>(r) * s + static_cast<long>(kh) - p;
                        if (ih < 0 || ih >= static_cast<long>(h)) continue;
                        // Columns c with 0 <= c*s + kw - p < w.
                        long off = static_cast<long>(kw) - p;
                        long c_lo = off < 0 ? (-off + s - 1) / s : 0;
                        long c_hi = (static_cast<long>(w) - 1 - off) / s;
                        if (c_hi >= static_cast<long>(ow)) c_hi = static_cast<long>(ow) - 1;
                        const double* irow = iplane + static_cast<std::size_t>(ih) * w;
                        double* orow = oplane + r * ow;
                        for (long c = c_lo; c <= c_hi; ++c)
                            orow[c] += wgt * irow[c * s + off];
                    }
                }
            }
        }
    }
    activate_inplace(out, act);
    return out;
}

Tensor conv2d_backward(const Tensor& input, LayerParams& layer, const Tensor& upstream,
                       const Tensor& output, std::size_t stride, std::size_t padding,
                       Activation act) {
    check_conv_args(input, layer, stride);
    require_same_shape(upstream, output, "conv backward");
    const std::size_t c_out = layer.weights.dim(0), c_in = layer.weights.dim(1);
    const std::size_t k = layer.weights.dim(2);
    const std::size_t h = input.dim(1), w = input.dim(2);
    const std::size_t oh = output.dim(1), ow = output.dim(2);

    // dL/d(pre-activation), from the post-activation output.
    Tensor gpre(upstream.shape);
    for (std::size_t i = 0; i < gpre.numel(); ++i)
        gpre[i] = upstream[i] * activation_grad_from_output(output[i], act);

    Tensor dinput(input.shape);
    const long s = static_cast<long>(stride), p = static_cast<long>(padding);
    for (std::size_t co = 0; co < c_out; ++co) {
        const double* gplane = &gpre.data[co * oh * ow];
        if (layer.grad_biases.numel()) {
            double acc = 0.0;
            for (std::size_t i = 0; i < oh * ow; ++i) acc += gplane[i];
            layer.grad_biases[co] += acc;
        }
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            const double* iplane = &input.data[ci * h * w];
            double* dplane = &dinput.data[ci * h * w];
            for (std::size_t kh = 0; kh < k; ++kh) {
                for (std::size_t kw = 0; kw < k; ++kw) {
                    double wgt = layer.weights.data[((co * c_in + ci) * k + kh) * k + kw];
                    double wacc = 0.0;
                    for (std::size_t r = 0; r < oh; ++r) {
                        long ih = static_cast<long>(r) * s + static_cast<long>(kh) - p;
                        if (ih < 0 || ih >= static_cast<long>(h)) continue;
                        long off = static_cast<long>(kw) - p;
                        long c_lo = off < 0 ? (-off + s - 1) / s : 0;
                        long c_hi = (static_cast<long>(w) - 1 - off) / s;
                        if (c_hi >= static_cast<long>(ow)) c_hi = static_cast<long>(ow) - 1;
                        const double* irow = iplane + static_cast<std::size_t>(ih) * w;
                        double* drow = dplane + static_cast<std::size_t>(ih) * w;
                        const double* grow = gplane + r * ow;
                        for (long c = c_lo; c <= c_hi; ++c) {
                            double g = grow[c];
                            wacc += g * irow[c * s + off];
                            drow[c * s + off] += wgt * g;
                        }
                    }
                    layer.grad_weights.data[((co * c_in + ci) * k + kh) * k + kw] += wacc;
                }
            }
        }
    }
    return dinput;
}

Tensor dense_forward(const Tensor& input, const LayerParams& layer, Activation act) {
    const std::size_t n_out = layer.weights.dim(0), n_in = layer.weights.dim(1);
    require(input.numel() == n_in, "dense '" + layer.name + "': input numel " +
                                       std::to_string(input.numel()) + " != " +
                                       std::to_string(n_in));
    Tensor out({n_out});
    for (std::size_t o = 0; o < n_out; ++o) {
        double acc = layer.biases.numel() ? layer.biases[o] : 0.0;
        const double* wrow = &layer.weights.data[o * n_in];
        for (std::size_t i = 0; i < n_in; ++i) acc += wrow[i] * input[i];
        out[o] = acc;
    }
    activate_inplace(out, act);
    return out;
}

Tensor dense_backward(const Tensor& input, LayerParams& layer, const Tensor& upstream,
                      const Tensor& output, Activation act) {
    const std::size_t n_out = layer.weights.dim(0), n_in = layer.weights.dim(1);
    require(input.numel() == n_in && upstream.numel() == n_out &&
                output.numel() == n_out,
            "dense backward: size mismatch in '" + layer.name + "'");
    Tensor dinput(input.shape);
    for (std::size_t o = 0; o < n_out; ++o) {
        double g = upstream[o] * activation_grad_from_output(output[o], act);
        if (layer.grad_biases.numel()) layer.grad_biases[o] += g;
        double* gwrow = &layer.grad_weights.data[o * n_in];
        const double* wrow = &layer.weights.data[o * n_in];
        for (std::size_t i = 0; i < n_in; ++i) {
            gwrow[i] += g * input[i];
            dinput[i] += g * wrow[i];
        }
    }
    return dinput;
}

namespace {

void adam_update(const std::string& who, Tensor& param, Tensor& grad, Tensor& m, Tensor& v,
                 std::int64_t t, double lr, double beta1, double beta2, double eps) {
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        double g = grad[i];
        if (!std::isfinite(g))
            throw NumericalError("non-finite gradient in layer '" + who + "'");
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    grad.fill(0.0);
}

}  // namespace

void adam_step(LayerParams& layer, double lr, double beta1, double beta2, double eps) {
    layer.step_count += 1;
    adam_update(layer.name, layer.weights, layer.grad_weights, layer.m_weights,
                layer.v_weights, layer.step_count, lr, beta1, beta2, eps);
    if (layer.biases.numel())
        adam_update(layer.name, layer.biases, layer.grad_biases, layer.m_biases,
                    layer.v_biases, layer.step_count, lr, beta1, beta2, eps);
}

LossReport loss_mse_mae(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "loss");
    require(pred.numel() > 0, "loss on empty tensors");
    LossReport r;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        double d = pred[i] - target[i];
        r.mse += d * d;
        r.mae += std::fabs(d);
    }
    double n = static_cast<double>(pred.numel());
    r.mse /= n;
    r.mae /= n;
    return r;
}

Tensor mse_gradient(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "loss gradient");
    Tensor g(pred.shape);
    double scale = 2.0 / static_cast<double>(pred.numel());
    for (std::size_t i = 0; i < pred.numel(); ++i) g[i] = scale * (pred[i] - target[i]);
    return g;
}

}  // namespace lada
