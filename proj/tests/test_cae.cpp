#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "lada/cae.hpp"
#include "lada/nn.hpp"
#include "lada/rng.hpp"
#include "lada/scene.hpp"
#include "lada/tensor.hpp"

using namespace lada;
using namespace lada::cae;

namespace {

CaeArchitecture tiny_arch() {
    CaeArchitecture a;
    a.input_rows = 8;
    a.input_cols = 8;
    a.layers = 2;
    a.filters = 3;
    a.latent_dim = 2;
    return a;
}

scene::Field wavy_field(std::size_t rows, std::size_t cols, double phase) {
    scene::Field f(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            f.at(r, c) = 0.5 + 0.4 * std::sin(0.3 * static_cast<double>(r) + phase) *
                                   std::cos(0.4 * static_cast<double>(c) - phase);
    return f;
}

std::vector<scene::Field> wavy_set(std::size_t n, std::size_t rows, std::size_t cols) {
    std::vector<scene::Field> fields;
    for (std::size_t i = 0; i < n; ++i)
        fields.push_back(wavy_field(rows, cols, 0.37 * static_cast<double>(i)));
    return fields;
}

// Every parameter slot of the model paired with its gradient slot, in a fixed
// traversal order, so a finite-difference sweep can visit all of them.
void collect_slots(CaeModel& m, std::vector<double*>& params, std::vector<double*>& grads) {
    auto add = [&](LayerParams& lp) {
        for (std::size_t i = 0; i < lp.weights.numel(); ++i) {
            params.push_back(&lp.weights[i]);
            grads.push_back(&lp.grad_weights[i]);
        }
        for (std::size_t i = 0; i < lp.biases.numel(); ++i) {
            params.push_back(&lp.biases[i]);
            grads.push_back(&lp.grad_biases[i]);
        }
    };
    for (auto& l : m.enc_convs) add(l);
    add(m.enc_dense);
    add(m.dec_dense);
    for (auto& l : m.dec_convs) add(l);
}

double recon_mse(const CaeModel& m, const scene::Field& f) {
    scene::Field r = reconstruct(m, f);
    double acc = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        double d = r.values[i] - f.values[i];
        acc += d * d;
    }
    return acc / static_cast<double>(f.values.size());
}

}  // namespace

TEST_CASE("architecture shape chain halves odd dims with the stride formula") {
    CaeArchitecture a;  // desk defaults 45x62, 4 layers
    auto shapes = a.level_shapes();
    REQUIRE(shapes.size() == 5);
    using Shape = std::pair<std::size_t, std::size_t>;
    CHECK(shapes[0] == Shape(45, 62));
    CHECK(shapes[1] == Shape(23, 31));
    CHECK(shapes[2] == Shape(12, 16));
    CHECK(shapes[3] == Shape(6, 8));
    CHECK(shapes[4] == Shape(3, 4));

    CaeArchitecture full;
    full.input_rows = 180;
    full.input_cols = 250;
    auto fs = full.level_shapes();
    CHECK(fs[4] == Shape(12, 16));
}

TEST_CASE("encode and decode shapes follow the architecture") {
    CaeArchitecture a = tiny_arch();
    Rng rng(1);
    CaeModel m = CaeModel::init(a, rng);

    scene::Field f = wavy_field(8, 8, 0.0);
    std::vector<double> h = encode(m, f);
    CHECK(h.size() == 2);
    CHECK(encode(m, f) == h);  // bitwise repeatable

    scene::Field g = decode(m, h);
    CHECK(g.rows == 8);
    CHECK(g.cols == 8);
    for (double v : g.values) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);  // sigmoid range
    }

    scene::Field wrong(7, 8);
    CHECK_THROWS_AS(encode(m, wrong), ConfigError);
    CHECK_THROWS_AS(decode(m, std::vector<double>{1.0, 2.0, 3.0}), ConfigError);
}

TEST_CASE("decode stays in [0,1] for extreme latents") {
    Rng rng(2);
    CaeModel m = CaeModel::init(tiny_arch(), rng);
    scene::Field g = decode(m, {1e6, -1e6});
    for (double v : g.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("end-to-end gradients match finite differences on a tiny model") {
    CaeArchitecture a = tiny_arch();
    Rng rng(3);
    CaeModel m = CaeModel::init(a, rng);
    // Freshly initialized biases are zero, which parks dead-region
    // pre-activations exactly on the relu kink where a central difference
    // straddles two slopes. Nonzero biases keep every pre-activation off
    // the kink so the comparison measures the gradient, not the corner.
    auto jitter = [&](LayerParams& lp) {
        for (std::size_t i = 0; i < lp.biases.numel(); ++i)
            lp.biases[i] = rng.uniform(-0.2, 0.2);
    };
    for (auto& l : m.enc_convs) jitter(l);
    jitter(m.enc_dense);
    jitter(m.dec_dense);
    for (auto& l : m.dec_convs) jitter(l);
    scene::Field f = wavy_field(8, 8, 0.5);

    accumulate_gradients(m, f);
    std::vector<double*> params, grads;
    collect_slots(m, params, grads);
    REQUIRE(params.size() == m.param_count());

    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double saved = *params[i];
        *params[i] = saved + h;
        double up = recon_mse(m, f);
        *params[i] = saved - h;
        double down = recon_mse(m, f);
        *params[i] = saved;
        double fd = (up - down) / (2.0 * h);
        double an = *grads[i];
        double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-5});
        worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("accumulate_gradients reports the sample reconstruction loss") {
    Rng rng(14);
    CaeModel m = CaeModel::init(tiny_arch(), rng);
    scene::Field f = wavy_field(8, 8, 0.9);
    LossReport r = accumulate_gradients(m, f);
    CHECK(r.mse == doctest::Approx(recon_mse(m, f)).epsilon(1e-15));
}

TEST_CASE("training reduces reconstruction loss and stays deterministic") {
    CaeArchitecture a = tiny_arch();
    std::vector<scene::Field> fields = wavy_set(8, 8, 8);
    std::vector<scene::Field> val = wavy_set(3, 8, 8);

    TrainOptions opts;
    opts.epochs = 30;
    opts.batch = 4;
    opts.learning_rate = 3e-3;
    opts.seed = 5;

    Rng r1(10);
    CaeModel m1 = CaeModel::init(a, r1);
    double before = evaluate(m1, val).mse;
    TrainResult t1 = train_cae(m1, fields, val, opts);
    REQUIRE(t1.reports.size() == 30);
    CHECK(!t1.stopped_early);
    double after = t1.reports.back().val.mse;
    CHECK(after < before);
    CHECK(after < t1.reports.front().val.mse);

    Rng r2(10);
    CaeModel m2 = CaeModel::init(a, r2);
    TrainResult t2 = train_cae(m2, fields, val, opts);
    for (std::size_t e = 0; e < t1.reports.size(); ++e) {
        CHECK(t1.reports[e].train.mse == t2.reports[e].train.mse);
        CHECK(t1.reports[e].val.mse == t2.reports[e].val.mse);
    }
    CHECK(m1.enc_dense.weights.data == m2.enc_dense.weights.data);
}

TEST_CASE("worker count does not change the trained weights") {
    CaeArchitecture a = tiny_arch();
    // A batch of 6 spans two chunks, so two workers split real work.
    std::vector<scene::Field> fields = wavy_set(6, 8, 8);
    std::vector<scene::Field> val = wavy_set(2, 8, 8);

    TrainOptions opts;
    opts.epochs = 4;
    opts.batch = 6;
    opts.seed = 21;

    opts.threads = 1;
    Rng r1(4);
    CaeModel m1 = CaeModel::init(a, r1);
    TrainResult t1 = train_cae(m1, fields, val, opts);

    opts.threads = 2;
    Rng r2(4);
    CaeModel m2 = CaeModel::init(a, r2);
    TrainResult t2 = train_cae(m2, fields, val, opts);

    for (std::size_t e = 0; e < t1.reports.size(); ++e) {
        CHECK(t1.reports[e].train.mse == t2.reports[e].train.mse);
        CHECK(t1.reports[e].val.mse == t2.reports[e].val.mse);
    }
    CHECK(m1.enc_dense.weights.data == m2.enc_dense.weights.data);
    for (std::size_t l = 0; l < m1.dec_convs.size(); ++l)
        CHECK(m1.dec_convs[l].weights.data == m2.dec_convs[l].weights.data);
}

TEST_CASE("zero epochs leaves the model at its initialization") {
    CaeArchitecture a = tiny_arch();
    Rng r1(6), r2(6);
    CaeModel m = CaeModel::init(a, r1);
    CaeModel ref = CaeModel::init(a, r2);
    std::vector<scene::Field> fields = wavy_set(4, 8, 8);
    TrainOptions opts;
    opts.epochs = 0;
    TrainResult t = train_cae(m, fields, fields, opts);
    CHECK(t.reports.empty());
    CHECK(m.enc_dense.weights.data == ref.enc_dense.weights.data);
    CHECK(evaluate(m, fields).mse == evaluate(ref, fields).mse);
}

TEST_CASE("overfitting one snapshot memorizes it") {
    CaeArchitecture a = tiny_arch();
    Rng rng(8);
    CaeModel m = CaeModel::init(a, rng);
    std::vector<scene::Field> one = {wavy_field(8, 8, 1.1)};
    TrainOptions opts;
    opts.epochs = 400;
    opts.batch = 1;
    opts.learning_rate = 3e-3;
    opts.seed = 9;
    TrainResult t = train_cae(m, one, one, opts);
    CHECK(t.reports.back().train.mse < 1e-4);
}

TEST_CASE("early stopping halts at the validation target deterministically") {
    CaeArchitecture a = tiny_arch();
    std::vector<scene::Field> fields = wavy_set(8, 8, 8);

    TrainOptions opts;
    opts.epochs = 200;
    opts.batch = 4;
    opts.learning_rate = 3e-3;
    opts.seed = 5;
    opts.early_stop_val_mse = 5e-3;
    opts.min_epochs = 3;

    Rng r1(10);
    CaeModel m1 = CaeModel::init(a, r1);
    TrainResult t1 = train_cae(m1, fields, fields, opts);
    CHECK(t1.stopped_early);
    CHECK(t1.reports.size() < 200);
    CHECK(t1.reports.size() >= 3);
    CHECK(t1.reports.back().val.mse < 5e-3);

    Rng r2(10);
    CaeModel m2 = CaeModel::init(a, r2);
    TrainResult t2 = train_cae(m2, fields, fields, opts);
    CHECK(t2.reports.size() == t1.reports.size());
}

TEST_CASE("model files round-trip to bit-identical encodings") {
    CaeArchitecture a = tiny_arch();
    Rng rng(12);
    CaeModel m = CaeModel::init(a, rng);
    std::vector<scene::Field> fields = wavy_set(5, 8, 8);
    TrainOptions opts;
    opts.epochs = 5;
    opts.batch = 2;
    opts.seed = 3;
    train_cae(m, fields, fields, opts);

    const std::string path = "/tmp/lada_test_cae_model.lada";
    save_model(m, path);
    CaeModel back = load_model(path);
    std::remove(path.c_str());

    CHECK(back.arch.latent_dim == a.latent_dim);
    CHECK(back.arch.layers == a.layers);
    scene::Field f = wavy_field(8, 8, 2.2);
    std::vector<double> h1 = encode(m, f);
    std::vector<double> h2 = encode(back, f);
    CHECK(h1 == h2);  // bitwise
    scene::Field d1 = decode(m, h1);
    scene::Field d2 = decode(back, h2);
    CHECK(d1.values == d2.values);
}

TEST_CASE("cross_validate aggregates fold statistics with sample std") {
    CaeArchitecture a = tiny_arch();
    std::vector<scene::Field> fields = wavy_set(10, 8, 8);
    TrainOptions opts;
    opts.epochs = 2;
    opts.batch = 4;
    opts.seed = 17;

    CvStats s = cross_validate(a, fields, 5, 1, opts);
    REQUIRE(s.cells.size() == 5);

    double mean = 0.0;
    for (const auto& c : s.cells) mean += c.holdout.mse;
    mean /= 5.0;
    double var = 0.0;
    for (const auto& c : s.cells) {
        double d = c.holdout.mse - mean;
        var += d * d;
    }
    double sd = std::sqrt(var / 4.0);
    CHECK(s.mean_mse == doctest::Approx(mean).epsilon(1e-12));
    CHECK(s.std_mse == doctest::Approx(sd).epsilon(1e-12));

    CvStats again = cross_validate(a, fields, 5, 1, opts);
    CHECK(again.mean_mse == s.mean_mse);
    CHECK(again.std_mse == s.std_mse);

    CHECK_THROWS_AS(cross_validate(a, wavy_set(3, 8, 8), 5, 1, opts), ConfigError);
}

TEST_CASE("invalid architectures are rejected") {
    CaeArchitecture a = tiny_arch();
    a.layers = 0;
    CHECK_THROWS_AS(a.validate(), ConfigError);

    a = tiny_arch();
    a.latent_dim = 0;
    CHECK_THROWS_AS(a.validate(), ConfigError);

    a = tiny_arch();
    a.kernel = 4;  // even kernels break the symmetric padding
    CHECK_THROWS_AS(a.validate(), ConfigError);

    a = tiny_arch();
    a.input_rows = 0;
    CHECK_THROWS_AS(a.validate(), ConfigError);
}
