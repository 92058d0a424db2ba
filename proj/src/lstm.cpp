#include "lada/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lada/serialize.hpp"

namespace lada::lstm {

namespace {

using Vec = std::vector<double>;

// y += W x, W row-major [rows, cols].
void matvec_acc(const Tensor& w, const Vec& x, Vec& y) {
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* row = &w.data[r * cols];
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// y += W^T x.
void matTvec_acc(const Tensor& w, const Vec& x, Vec& y) {
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = &w.data[r * cols];
        double xr = x[r];
        for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * xr;
    }
}

// grad += dz (outer) src.
void outer_acc(Tensor& grad, const Vec& dz, const Vec& src) {
    const std::size_t rows = grad.dim(0), cols = grad.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = &grad.data[r * cols];
        double g = dz[r];
        for (std::size_t c = 0; c < cols; ++c) row[c] += g * src[c];
    }
}

void vec_acc(Tensor& grad, const Vec& dz) {
    for (std::size_t i = 0; i < dz.size(); ++i) grad[i] += dz[i];
}

Vec gate_preact(const GateParams& gate, const Vec& x, const Vec& u) {
    Vec z(gate.input.biases.data.begin(), gate.input.biases.data.end());
    matvec_acc(gate.input.weights, x, z);
    matvec_acc(gate.recurrent.weights, u, z);
    return z;
}

void check_sample(const LstmConfig& cfg, const dataset::SequenceSample& s) {
    require(s.inputs.size() == cfg.lookback,
            "sample window length " + std::to_string(s.inputs.size()) +
                " != lookback " + std::to_string(cfg.lookback));
    for (const auto& v : s.inputs)
        require(v.size() == cfg.latent_dim, "sample input dimension mismatch");
    require(s.target.size() == cfg.latent_dim, "sample target dimension mismatch");
}

struct StepTrace {
    Vec x, u_prev, s_prev;
    Vec d, c, g, o, s, tanh_s, u;
};

StepTrace step_traced(const LstmModel& m, const Vec& x, const LstmState& st) {
    StepTrace t;
    t.x = x;
    t.u_prev = st.hidden;
    t.s_prev = st.cell;
    const std::size_t h = m.config.hidden;
    t.d = gate_preact(m.forget_gate, x, st.hidden);
    t.c = gate_preact(m.input_gate, x, st.hidden);
    t.g = gate_preact(m.cell_candidate, x, st.hidden);
    t.o = gate_preact(m.output_gate, x, st.hidden);
    t.s.resize(h);
    t.tanh_s.resize(h);
    t.u.resize(h);
    for (std::size_t i = 0; i < h; ++i) {
        t.d[i] = activate(t.d[i], Activation::Sigmoid);
        t.c[i] = activate(t.c[i], Activation::Sigmoid);
        t.g[i] = activate(t.g[i], Activation::Tanh);
        t.o[i] = activate(t.o[i], Activation::Sigmoid);
        t.s[i] = t.d[i] * st.cell[i] + t.c[i] * t.g[i];
        t.tanh_s[i] = std::tanh(t.s[i]);
        t.u[i] = t.tanh_s[i] * t.o[i];
    }
    return t;
}

template <class Fn>
void for_each_layer(LstmModel& m, Fn&& fn) {
    for (GateParams* g :
         {&m.forget_gate, &m.input_gate, &m.cell_candidate, &m.output_gate}) {
        fn(g->input);
        fn(g->recurrent);
    }
    fn(m.projection);
}

// Forward with trace, loss gradient injection, backward through the unrolled
// steps. Returns the sample loss; parameter grads accumulate into `m`.
LossReport accumulate_sample(LstmModel& m, const dataset::SequenceSample& sample,
                             double gscale) {
    check_sample(m.config, sample);
    const std::size_t h = m.config.hidden, p = m.config.latent_dim;
    const std::size_t q = m.config.lookback;

    std::vector<StepTrace> steps;
    steps.reserve(q);
    LstmState st = zero_state(m.config);
    for (std::size_t t = 0; t < q; ++t) {
        steps.push_back(step_traced(m, sample.inputs[t], st));
        st.hidden = steps.back().u;
        st.cell = steps.back().s;
    }
    Vec y(m.projection.biases.data.begin(), m.projection.biases.data.end());
    matvec_acc(m.projection.weights, st.hidden, y);
    for (double& v : y) v = activate(v, m.config.projection_activation);

    LossReport loss;
    Vec dz_y(p);
    for (std::size_t i = 0; i < p; ++i) {
        double diff = y[i] - sample.target[i];
        loss.mse += diff * diff;
        loss.mae += std::fabs(diff);
        double dy = gscale * 2.0 * diff / static_cast<double>(p);
        dz_y[i] = dy * activation_grad_from_output(y[i], m.config.projection_activation);
    }
    loss.mse /= static_cast<double>(p);
    loss.mae /= static_cast<double>(p);

    outer_acc(m.projection.grad_weights, dz_y, st.hidden);
    vec_acc(m.projection.grad_biases, dz_y);
    Vec du(h, 0.0);
    matTvec_acc(m.projection.weights, dz_y, du);

    Vec ds_next(h, 0.0);
    for (std::size_t t = q; t-- > 0;) {
        const StepTrace& tr = steps[t];
        Vec dz_d(h), dz_c(h), dz_g(h), dz_o(h);
        Vec ds(h);
        for (std::size_t i = 0; i < h; ++i) {
            double do_i = du[i] * tr.tanh_s[i];
            ds[i] = ds_next[i] + du[i] * tr.o[i] * (1.0 - tr.tanh_s[i] * tr.tanh_s[i]);
            double dd = ds[i] * tr.s_prev[i];
            double dc = ds[i] * tr.g[i];
            double dg = ds[i] * tr.c[i];
            dz_d[i] = dd * tr.d[i] * (1.0 - tr.d[i]);
            dz_c[i] = dc * tr.c[i] * (1.0 - tr.c[i]);
            dz_g[i] = dg * (1.0 - tr.g[i] * tr.g[i]);
            dz_o[i] = do_i * tr.o[i] * (1.0 - tr.o[i]);
            ds_next[i] = ds[i] * tr.d[i];
        }
        struct GateGrad {
            GateParams* gate;
            Vec* dz;
        } gates[4] = {{&m.forget_gate, &dz_d},
                      {&m.input_gate, &dz_c},
                      {&m.cell_candidate, &dz_g},
                      {&m.output_gate, &dz_o}};
        std::fill(du.begin(), du.end(), 0.0);
        for (auto& gg : gates) {
            outer_acc(gg.gate->input.grad_weights, *gg.dz, tr.x);
            vec_acc(gg.gate->input.grad_biases, *gg.dz);
            outer_acc(gg.gate->recurrent.grad_weights, *gg.dz, tr.u_prev);
            matTvec_acc(gg.gate->recurrent.weights, *gg.dz, du);
        }
    }
    return loss;
}

}  // namespace

void LstmConfig::validate() const {
    require(latent_dim >= 1, "latent dimension must be positive");
    require(hidden >= 1, "hidden size must be positive");
    require(lookback >= 1, "lookback must be at least 1");
}

LstmModel LstmModel::init(const LstmConfig& cfg, Rng& rng) {
    cfg.validate();
    LstmModel m;
    m.config = cfg;
    auto make_gate = [&](const char* name) {
        GateParams g;
        g.input = LayerParams::dense(std::string(name) + "_in", cfg.hidden, cfg.latent_dim);
        g.recurrent =
            LayerParams::matrix(std::string(name) + "_rec", cfg.hidden, cfg.hidden);
        return g;
    };
    m.forget_gate = make_gate("forget");
    m.input_gate = make_gate("input");
    m.cell_candidate = make_gate("cand");
    m.output_gate = make_gate("output");
    m.projection = LayerParams::dense("proj", cfg.latent_dim, cfg.hidden);
    for_each_layer(m, [&](LayerParams& p) { p.init_glorot_uniform(rng); });
    // Forget bias starts at 1 so early training does not flush cell state.
    for (double& b : m.forget_gate.input.biases.data) b = 1.0;
    return m;
}

std::size_t LstmModel::param_count() const {
    std::size_t n = 0;
    for (const GateParams* g :
         {&forget_gate, &input_gate, &cell_candidate, &output_gate})
        n += g->input.param_count() + g->recurrent.param_count();
    return n + projection.param_count();
}

LstmState zero_state(const LstmConfig& cfg) {
    return {Vec(cfg.hidden, 0.0), Vec(cfg.hidden, 0.0)};
}

LstmState lstm_cell(const LstmModel& m, const Vec& x, const LstmState& state) {
    require(x.size() == m.config.latent_dim, "cell input dimension mismatch");
    require(state.hidden.size() == m.config.hidden &&
                state.cell.size() == m.config.hidden,
            "cell state dimension mismatch");
    StepTrace t = step_traced(m, x, state);
    return {t.u, t.s};
}

std::vector<double> forecast(const LstmModel& m,
                             const std::vector<std::vector<double>>& window) {
    require(window.size() == m.config.lookback,
            "forecast window length " + std::to_string(window.size()) +
                " != lookback " + std::to_string(m.config.lookback));
    LstmState st = zero_state(m.config);
    for (const auto& x : window) st = lstm_cell(m, x, st);
    Vec y(m.projection.biases.data.begin(), m.projection.biases.data.end());
    matvec_acc(m.projection.weights, st.hidden, y);
    for (double& v : y) v = activate(v, m.config.projection_activation);
    return y;
}

LossReport evaluate(const LstmModel& m,
                    const std::vector<dataset::SequenceSample>& samples) {
    require(!samples.empty(), "evaluate needs at least one sample");
    LossReport acc;
    for (const auto& s : samples) {
        check_sample(m.config, s);
        Vec y = forecast(m, s.inputs);
        double mse = 0.0, mae = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            double d = y[i] - s.target[i];
            mse += d * d;
            mae += std::fabs(d);
        }
        acc.mse += mse / static_cast<double>(y.size());
        acc.mae += mae / static_cast<double>(y.size());
    }
    acc.mse /= static_cast<double>(samples.size());
    acc.mae /= static_cast<double>(samples.size());
    return acc;
}

LossReport accumulate_gradients(LstmModel& model, const dataset::SequenceSample& sample) {
    return accumulate_sample(model, sample, 1.0);
}

double persistence_mse(const std::vector<dataset::SequenceSample>& samples) {
    require(!samples.empty(), "persistence baseline needs samples");
    double acc = 0.0;
    for (const auto& s : samples) {
        const Vec& last = s.inputs.back();
        double mse = 0.0;
        for (std::size_t i = 0; i < last.size(); ++i) {
            double d = last[i] - s.target[i];
            mse += d * d;
        }
        acc += mse / static_cast<double>(last.size());
    }
    return acc / static_cast<double>(samples.size());
}

TrainResult train_lstm(LstmModel& model, const std::vector<dataset::SequenceSample>& train,
                       const std::vector<dataset::SequenceSample>& val,
                       const TrainOptions& opts) {
    require(!train.empty(), "training set is empty");
    require(!val.empty(), "validation set is empty");
    require(opts.batch >= 1, "batch size must be positive");

    Rng order_rng = Rng(opts.seed).fork(0x57ee1);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        order_rng.shuffle(order);
        LossReport train_acc;
        for (std::size_t start = 0; start < order.size(); start += opts.batch) {
            std::size_t n = std::min(opts.batch, order.size() - start);
            double gscale = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                LossReport r = accumulate_sample(model, train[order[start + i]], gscale);
                train_acc.mse += r.mse;
                train_acc.mae += r.mae;
            }
            for_each_layer(model, [&](LayerParams& p) { adam_step(p, opts.learning_rate); });
        }
        train_acc.mse /= static_cast<double>(order.size());
        train_acc.mae /= static_cast<double>(order.size());
        if (!std::isfinite(train_acc.mse))
            throw NumericalError("surrogate training diverged at epoch " +
                                 std::to_string(epoch));

        EpochReport rep;
        rep.epoch = epoch;
        rep.train = train_acc;
        rep.val = evaluate(model, val);
        result.reports.push_back(rep);

        if (opts.early_stop_val_mse > 0.0 && epoch >= opts.min_epochs &&
            rep.val.mse < opts.early_stop_val_mse) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

void save_model(const LstmModel& m, const std::string& path) {
    std::vector<ArchRecord> arch{
        {"kind", {2}},
        {"latent_dim", {static_cast<std::uint32_t>(m.config.latent_dim)}},
        {"hidden", {static_cast<std::uint32_t>(m.config.hidden)}},
        {"lookback", {static_cast<std::uint32_t>(m.config.lookback)}},
        {"projection_activation",
         {static_cast<std::uint32_t>(m.config.projection_activation)}},
    };
    std::vector<TensorRecord> weights;
    auto push = [&](const LayerParams& p) {
        weights.push_back({p.name + ".weights", p.weights});
        if (p.biases.numel()) weights.push_back({p.name + ".biases", p.biases});
    };
    for (const GateParams* g :
         {&m.forget_gate, &m.input_gate, &m.cell_candidate, &m.output_gate}) {
        push(g->input);
        push(g->recurrent);
    }
    push(m.projection);
    write_model_file(path, arch, weights);
}

LstmModel load_model(const std::string& path) {
    std::vector<ArchRecord> arch;
    std::vector<TensorRecord> weights;
    read_model_file(path, arch, weights);
    require(arch_scalar(arch, "kind") == 2, "model file is not a surrogate");

    LstmConfig cfg;
    cfg.latent_dim = arch_scalar(arch, "latent_dim");
    cfg.hidden = arch_scalar(arch, "hidden");
    cfg.lookback = arch_scalar(arch, "lookback");
    std::uint32_t act = arch_scalar(arch, "projection_activation");
    require(act <= 4, "unknown activation code in model file");
    cfg.projection_activation = static_cast<Activation>(act);

    Rng dummy(0);
    LstmModel m = LstmModel::init(cfg, dummy);
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
    for_each_layer(m, pull);
    return m;
}

}  // namespace lada::lstm
