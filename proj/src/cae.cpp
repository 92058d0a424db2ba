#include "lada/cae.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "lada/dataset.hpp"
#include "lada/serialize.hpp"

namespace lada::cae {

namespace {

std::size_t strided_out(std::size_t in, std::size_t k, std::size_t stride,
                        std::size_t padding) {
    std::size_t padded = in + 2 * padding;
    require(padded >= k, "input too small for the convolution kernel");
    return (padded - k) / stride + 1;
}

Tensor field_to_tensor(const CaeArchitecture& arch, const scene::Field& f) {
    require(f.rows == arch.input_rows && f.cols == arch.input_cols &&
                f.channels == arch.input_channels,
            "field shape does not match the architecture input");
    Tensor t({arch.input_channels, arch.input_rows, arch.input_cols});
    t.data = f.values;
    return t;
}

scene::Field tensor_to_field(const Tensor& t) {
    scene::Field f(t.dim(1), t.dim(2), t.dim(0));
    f.values = t.data;
    return f;
}

// Nearest-neighbour 2x upsample cropped to (th, tw); source pixel of output
// (r, c) is (r/2, c/2).
Tensor upsample_to(const Tensor& src, std::size_t th, std::size_t tw) {
    require(2 * src.dim(1) >= th && 2 * src.dim(2) >= tw,
            "upsample target more than doubles the source");
    Tensor out({src.dim(0), th, tw});
    for (std::size_t ch = 0; ch < src.dim(0); ++ch)
        for (std::size_t r = 0; r < th; ++r)
            for (std::size_t c = 0; c < tw; ++c)
                out.at3(ch, r, c) = src.at3(ch, r / 2, c / 2);
    return out;
}

Tensor upsample_backward(const Tensor& dout, std::size_t sh, std::size_t sw) {
    Tensor dsrc({dout.dim(0), sh, sw});
    for (std::size_t ch = 0; ch < dout.dim(0); ++ch)
        for (std::size_t r = 0; r < dout.dim(1); ++r)
            for (std::size_t c = 0; c < dout.dim(2); ++c)
                dsrc.at3(ch, r / 2, c / 2) += dout.at3(ch, r, c);
    return dsrc;
}

Tensor reshaped(const Tensor& t, std::vector<std::size_t> shape) {
    require(Tensor::count(shape) == t.numel(), "reshape changes element count");
    Tensor out(std::move(shape));
    out.data = t.data;
    return out;
}

struct Trace {
    std::vector<Tensor> enc_in, enc_out;
    Tensor latent;
    Tensor dec_dense_out;
    std::vector<Tensor> dec_in, dec_out;
};

Tensor forward_traced(const CaeModel& m, const scene::Field& field, Trace& tr) {
    const auto& arch = m.arch;
    Tensor x = field_to_tensor(arch, field);
    tr.enc_in.clear();
    tr.enc_out.clear();
    tr.dec_in.clear();
    tr.dec_out.clear();
    for (std::size_t l = 0; l < arch.layers; ++l) {
        tr.enc_in.push_back(x);
        x = conv2d_forward(x, m.enc_convs[l], 2, 1, arch.conv_activation);
        tr.enc_out.push_back(x);
    }
    tr.latent = dense_forward(x, m.enc_dense, arch.latent_activation);
    tr.dec_dense_out = dense_forward(tr.latent, m.dec_dense, arch.conv_activation);

    auto [ch, cw] = m.shapes[arch.layers];
    Tensor y = reshaped(tr.dec_dense_out, {arch.filters, ch, cw});
    for (std::size_t l = 0; l < arch.layers; ++l) {
        auto [th, tw] = m.shapes[arch.layers - 1 - l];
        y = upsample_to(y, th, tw);
        tr.dec_in.push_back(y);
        y = conv2d_forward(y, m.dec_convs[l], 1, 1, arch.conv_activation);
        tr.dec_out.push_back(y);
    }
    tr.dec_in.push_back(y);
    y = conv2d_forward(y, m.dec_convs[arch.layers], 1, 1, Activation::Sigmoid);
    tr.dec_out.push_back(y);
    return y;
}

// Accumulates parameter gradients for one sample; `drecon` is dL/d(output).
void backward_traced(CaeModel& m, const Trace& tr, const Tensor& drecon) {
    const auto& arch = m.arch;
    Tensor dy = conv2d_backward(tr.dec_in[arch.layers], m.dec_convs[arch.layers], drecon,
                                tr.dec_out[arch.layers], 1, 1, Activation::Sigmoid);
    for (std::size_t l = arch.layers; l-- > 0;) {
        dy = conv2d_backward(tr.dec_in[l], m.dec_convs[l], dy, tr.dec_out[l], 1, 1,
                             arch.conv_activation);
        auto [sh, sw] = m.shapes[arch.layers - l];
        dy = upsample_backward(dy, sh, sw);
    }
    Tensor dflat = reshaped(dy, {tr.dec_dense_out.numel()});
    Tensor dlatent = dense_backward(tr.latent, m.dec_dense, dflat, tr.dec_dense_out,
                                    arch.conv_activation);
    Tensor dx = dense_backward(tr.enc_out.back(), m.enc_dense, dlatent, tr.latent,
                               arch.latent_activation);
    dx = reshaped(dx, tr.enc_out.back().shape);
    for (std::size_t l = arch.layers; l-- > 0;)
        dx = conv2d_backward(tr.enc_in[l], m.enc_convs[l], dx, tr.enc_out[l], 2, 1,
                             arch.conv_activation);
}

template <class Fn>
void for_each_layer(CaeModel& m, Fn&& fn) {
    for (auto& l : m.enc_convs) fn(l);
    fn(m.enc_dense);
    fn(m.dec_dense);
    for (auto& l : m.dec_convs) fn(l);
}

}  // namespace

void CaeArchitecture::validate() const {
    require(input_channels == 1, "only single-channel fields are supported");
    require(layers >= 1 && layers <= 8, "encoder depth must be in [1, 8]");
    require(filters >= 1, "needs at least one filter");
    require(kernel >= 1 && kernel % 2 == 1, "kernel must be odd");
    require(latent_dim >= 1, "latent dimension must be positive");
    auto shapes = level_shapes();
    auto [h, w] = shapes.back();
    require(h >= 1 && w >= 1, "input collapses below 1x1 after the encoder");
}

std::vector<std::pair<std::size_t, std::size_t>> CaeArchitecture::level_shapes() const {
    std::vector<std::pair<std::size_t, std::size_t>> shapes{{input_rows, input_cols}};
    for (std::size_t l = 0; l < layers; ++l) {
        auto [h, w] = shapes.back();
        shapes.emplace_back(strided_out(h, kernel, 2, 1), strided_out(w, kernel, 2, 1));
    }
    return shapes;
}

CaeModel CaeModel::init(const CaeArchitecture& arch, Rng& rng) {
    arch.validate();
    CaeModel m;
    m.arch = arch;
    m.shapes = arch.level_shapes();
    for (std::size_t l = 0; l < arch.layers; ++l) {
        std::size_t c_in = l == 0 ? arch.input_channels : arch.filters;
        m.enc_convs.push_back(LayerParams::conv("enc_conv" + std::to_string(l),
                                                arch.filters, c_in, arch.kernel));
    }
    auto [ch, cw] = m.shapes[arch.layers];
    std::size_t flat = arch.filters * ch * cw;
    m.enc_dense = LayerParams::dense("enc_dense", arch.latent_dim, flat);
    m.dec_dense = LayerParams::dense("dec_dense", flat, arch.latent_dim);
    for (std::size_t l = 0; l < arch.layers; ++l)
        m.dec_convs.push_back(LayerParams::conv("dec_conv" + std::to_string(l),
                                                arch.filters, arch.filters, arch.kernel));
    m.dec_convs.push_back(LayerParams::conv("dec_out", arch.input_channels, arch.filters,
                                            arch.kernel));
    for_each_layer(m, [&](LayerParams& p) { p.init_glorot_uniform(rng); });
    return m;
}

std::size_t CaeModel::param_count() const {
    std::size_t n = 0;
    for (const auto& l : enc_convs) n += l.param_count();
    n += enc_dense.param_count() + dec_dense.param_count();
    for (const auto& l : dec_convs) n += l.param_count();
    return n;
}

std::vector<double> encode(const CaeModel& m, const scene::Field& field) {
    Tensor x = field_to_tensor(m.arch, field);
    for (std::size_t l = 0; l < m.arch.layers; ++l)
        x = conv2d_forward(x, m.enc_convs[l], 2, 1, m.arch.conv_activation);
    Tensor h = dense_forward(x, m.enc_dense, m.arch.latent_activation);
    return h.data;
}

scene::Field decode(const CaeModel& m, const std::vector<double>& latent) {
    require(latent.size() == m.arch.latent_dim, "latent length mismatch");
    Tensor h({m.arch.latent_dim});
    h.data = latent;
    Tensor y = dense_forward(h, m.dec_dense, m.arch.conv_activation);
    auto [ch, cw] = m.shapes[m.arch.layers];
    y = reshaped(y, {m.arch.filters, ch, cw});
    for (std::size_t l = 0; l < m.arch.layers; ++l) {
        auto [th, tw] = m.shapes[m.arch.layers - 1 - l];
        y = upsample_to(y, th, tw);
        y = conv2d_forward(y, m.dec_convs[l], 1, 1, m.arch.conv_activation);
    }
    y = conv2d_forward(y, m.dec_convs[m.arch.layers], 1, 1, Activation::Sigmoid);
    return tensor_to_field(y);
}

scene::Field reconstruct(const CaeModel& m, const scene::Field& field) {
    return decode(m, encode(m, field));
}

LossReport evaluate(const CaeModel& m, const std::vector<scene::Field>& fields) {
    require(!fields.empty(), "evaluate needs at least one field");
    LossReport acc;
    for (const auto& f : fields) {
        Tensor target = field_to_tensor(m.arch, f);
        Tensor pred = field_to_tensor(m.arch, reconstruct(m, f));
        LossReport r = loss_mse_mae(pred, target);
        acc.mse += r.mse;
        acc.mae += r.mae;
    }
    acc.mse /= static_cast<double>(fields.size());
    acc.mae /= static_cast<double>(fields.size());
    return acc;
}

namespace {

// Per-sample forward+backward into `m`'s gradient accumulators; returns the
// sample's loss. Loss gradient is scaled by `gscale` (1/batch).
LossReport accumulate_sample(CaeModel& m, const scene::Field& f, double gscale) {
    Trace tr;
    Tensor recon = forward_traced(m, f, tr);
    Tensor target = field_to_tensor(m.arch, f);
    LossReport loss = loss_mse_mae(recon, target);
    Tensor g = mse_gradient(recon, target);
    for (double& v : g.data) v *= gscale;
    backward_traced(m, tr, g);
    return loss;
}

}  // namespace

LossReport accumulate_gradients(CaeModel& model, const scene::Field& field) {
    return accumulate_sample(model, field, 1.0);
}

TrainResult train_cae(CaeModel& model, const std::vector<scene::Field>& train_fields,
                      const std::vector<scene::Field>& val_fields,
                      const TrainOptions& opts) {
    require(!train_fields.empty(), "training set is empty");
    require(!val_fields.empty(), "validation set is empty");
    require(opts.batch >= 1, "batch size must be positive");
    const std::size_t threads = std::max<std::size_t>(1, opts.threads);
    // Batches are summed in fixed-size chunks so the reduction tree depends
    // only on the batch layout, never on `threads`.
    const std::size_t chunk = 4;

    Rng order_rng = Rng(opts.seed).fork(0x0a11ce);
    std::vector<std::size_t> order(train_fields.size());
    std::iota(order.begin(), order.end(), 0);

    // One chunk's sample losses and parameter gradients, in for_each_layer order.
    struct ChunkPartial {
        LossReport loss;
        std::vector<Tensor> grad_weights, grad_biases;
    };

    TrainResult result;
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        order_rng.shuffle(order);
        LossReport train_acc;
        for (std::size_t start = 0; start < order.size(); start += opts.batch) {
            std::size_t n = std::min(opts.batch, order.size() - start);
            double gscale = 1.0 / static_cast<double>(n);
            std::size_t nchunks = (n + chunk - 1) / chunk;

            if (nchunks == 1) {
                // Grads start at zero, so accumulating straight into the model
                // is bit-identical to the chunked path.
                for (std::size_t i = 0; i < n; ++i) {
                    LossReport r =
                        accumulate_sample(model, train_fields[order[start + i]], gscale);
                    train_acc.mse += r.mse;
                    train_acc.mae += r.mae;
                }
            } else {
                std::vector<ChunkPartial> parts(nchunks);
                auto run_chunks = [&](CaeModel& scratch, std::size_t clo, std::size_t chi) {
                    for (std::size_t ci = clo; ci < chi; ++ci) {
                        for_each_layer(scratch, [](LayerParams& p) { p.zero_grad(); });
                        std::size_t lo = start + ci * chunk;
                        std::size_t hi = std::min(start + n, lo + chunk);
                        ChunkPartial& part = parts[ci];
                        for (std::size_t i = lo; i < hi; ++i) {
                            LossReport r =
                                accumulate_sample(scratch, train_fields[order[i]], gscale);
                            part.loss.mse += r.mse;
                            part.loss.mae += r.mae;
                        }
                        for_each_layer(scratch, [&](LayerParams& p) {
                            part.grad_weights.push_back(p.grad_weights);
                            part.grad_biases.push_back(p.grad_biases);
                        });
                    }
                };

                std::size_t workers = std::min(threads, nchunks);
                if (workers == 1) {
                    // The model's own grad buffers serve as scratch; they are
                    // re-zeroed before the merge below.
                    run_chunks(model, 0, nchunks);
                } else {
                    std::vector<CaeModel> shadows(workers, model);
                    std::vector<std::thread> pool;
                    for (std::size_t t = 0; t < workers; ++t) {
                        std::size_t clo = nchunks * t / workers;
                        std::size_t chi = nchunks * (t + 1) / workers;
                        pool.emplace_back(
                            [&run_chunks, &shadows, t, clo, chi] { run_chunks(shadows[t], clo, chi); });
                    }
                    for (auto& th : pool) th.join();
                }

                for_each_layer(model, [](LayerParams& p) { p.zero_grad(); });
                for (std::size_t ci = 0; ci < nchunks; ++ci) {
                    const ChunkPartial& part = parts[ci];
                    train_acc.mse += part.loss.mse;
                    train_acc.mae += part.loss.mae;
                    std::size_t li = 0;
                    for_each_layer(model, [&](LayerParams& p) {
                        for (std::size_t i = 0; i < p.grad_weights.numel(); ++i)
                            p.grad_weights[i] += part.grad_weights[li][i];
                        for (std::size_t i = 0; i < p.grad_biases.numel(); ++i)
                            p.grad_biases[i] += part.grad_biases[li][i];
                        ++li;
                    });
                }
            }
            for_each_layer(model,
                           [&](LayerParams& p) { adam_step(p, opts.learning_rate); });
        }
        train_acc.mse /= static_cast<double>(order.size());
        train_acc.mae /= static_cast<double>(order.size());
        if (!std::isfinite(train_acc.mse))
            throw NumericalError("training diverged at epoch " + std::to_string(epoch));

        EpochReport rep;
        rep.epoch = epoch;
        rep.train = train_acc;
        rep.val = evaluate(model, val_fields);
        if (!std::isfinite(rep.val.mse))
            throw NumericalError("validation loss non-finite at epoch " +
                                 std::to_string(epoch));
        result.reports.push_back(rep);

        if (opts.early_stop_val_mse > 0.0 && epoch >= opts.min_epochs &&
            rep.val.mse < opts.early_stop_val_mse) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

CvStats cross_validate(const CaeArchitecture& arch, const std::vector<scene::Field>& fields,
                       std::size_t k, std::size_t repeats, const TrainOptions& opts) {
    require(repeats >= 1, "repeats must be at least 1");
    std::vector<std::size_t> indices(fields.size());
    std::iota(indices.begin(), indices.end(), 0);
    auto folds = dataset::kfold(indices, k, opts.seed);

    CvStats stats;
    for (std::size_t rep = 0; rep < repeats; ++rep) {
        for (std::size_t f = 0; f < folds.size(); ++f) {
            std::vector<scene::Field> tr, ho;
            for (std::size_t i : folds[f].train) tr.push_back(fields[i]);
            for (std::size_t i : folds[f].holdout) ho.push_back(fields[i]);

            Rng rng = Rng(opts.seed).fork(1000 + rep * folds.size() + f);
            CaeModel model = CaeModel::init(arch, rng);
            TrainOptions cell_opts = opts;
            cell_opts.seed = Rng(opts.seed).fork(2000 + rep * folds.size() + f).state;

            auto t0 = std::chrono::steady_clock::now();
            train_cae(model, tr, ho, cell_opts);
            auto t1 = std::chrono::steady_clock::now();

            CvCell cell;
            cell.holdout = evaluate(model, ho);
            cell.train_seconds = std::chrono::duration<double>(t1 - t0).count();
            stats.cells.push_back(cell);
        }
    }

    auto finish = [&](auto get, double& mean, double& sd) {
        double m = 0.0;
        for (const auto& c : stats.cells) m += get(c);
        m /= static_cast<double>(stats.cells.size());
        double s = 0.0;
        for (const auto& c : stats.cells) s += (get(c) - m) * (get(c) - m);
        sd = stats.cells.size() > 1
                 ? std::sqrt(s / static_cast<double>(stats.cells.size() - 1))
                 : 0.0;
        mean = m;
    };
    finish([](const CvCell& c) { return c.holdout.mse; }, stats.mean_mse, stats.std_mse);
    finish([](const CvCell& c) { return c.holdout.mae; }, stats.mean_mae, stats.std_mae);
    finish([](const CvCell& c) { return c.train_seconds; }, stats.mean_seconds,
           stats.std_seconds);
    return stats;
}

namespace {

// Activation codes in model files follow the Activation enum order.
std::uint32_t act_code(Activation a) { return static_cast<std::uint32_t>(a); }

Activation act_from_code(std::uint32_t code) {
    require(code <= 4, "unknown activation code in model file");
    return static_cast<Activation>(code);
}

}  // namespace

void save_model(const CaeModel& m, const std::string& path) {
    std::vector<ArchRecord> arch{
        {"kind", {1}},
        {"input", {static_cast<std::uint32_t>(m.arch.input_rows),
                   static_cast<std::uint32_t>(m.arch.input_cols),
                   static_cast<std::uint32_t>(m.arch.input_channels)}},
        {"layers", {static_cast<std::uint32_t>(m.arch.layers)}},
        {"filters", {static_cast<std::uint32_t>(m.arch.filters)}},
        {"kernel", {static_cast<std::uint32_t>(m.arch.kernel)}},
        {"conv_activation", {act_code(m.arch.conv_activation)}},
        {"latent_dim", {static_cast<std::uint32_t>(m.arch.latent_dim)}},
        {"latent_activation", {act_code(m.arch.latent_activation)}},
    };
    std::vector<TensorRecord> weights;
    auto push = [&](const LayerParams& p) {
        weights.push_back({p.name + ".weights", p.weights});
        if (p.biases.numel()) weights.push_back({p.name + ".biases", p.biases});
    };
    for (const auto& l : m.enc_convs) push(l);
    push(m.enc_dense);
    push(m.dec_dense);
    for (const auto& l : m.dec_convs) push(l);
    write_model_file(path, arch, weights);
}

CaeModel load_model(const std::string& path) {
    std::vector<ArchRecord> arch;
    std::vector<TensorRecord> weights;
    read_model_file(path, arch, weights);
    require(arch_scalar(arch, "kind") == 1, "model file is not an autoencoder");

    CaeArchitecture a;
    const ArchRecord& input = find_arch(arch, "input");
    require(input.values.size() == 3, "malformed input record");
    a.input_rows = input.values[0];
    a.input_cols = input.values[1];
    a.input_channels = input.values[2];
    a.layers = arch_scalar(arch, "layers");
    a.filters = arch_scalar(arch, "filters");
    a.kernel = arch_scalar(arch, "kernel");
    a.conv_activation = act_from_code(arch_scalar(arch, "conv_activation"));
    a.latent_dim = arch_scalar(arch, "latent_dim");
    a.latent_activation = act_from_code(arch_scalar(arch, "latent_activation"));

    Rng dummy(0);
    CaeModel m = CaeModel::init(a, dummy);
    auto pull = [&](LayerParams& p) {
        const Tensor& w = find_record(weights, p.name + ".weights").tensor;
        require(w.shape == p.weights.shape, "weight shape mismatch for " + p.name);
        p.weights = w;
        if (p.biases.numel()) {
            const Tensor& b = find_record(weights, p.name + ".biases").tensor;
            require(b.shape == p.biases.shape, "bias shape mismatch for " + p.name);
            p.biases = b;
        }
    };
    for (auto& l : m.enc_convs) pull(l);
    pull(m.enc_dense);
    pull(m.dec_dense);
    for (auto& l : m.dec_convs) pull(l);
    return m;
}

}  // namespace lada::cae
