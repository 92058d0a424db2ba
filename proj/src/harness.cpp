#include "lada/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>

namespace lada::harness {

namespace fs = std::filesystem;
using clock = std::chrono::steady_clock;

namespace {

constexpr const char* kFieldsFile = "fields.lada";
constexpr const char* kObsFile = "obs_fields.lada";
constexpr const char* kReadingsCsv = "obs_readings.csv";
constexpr const char* kSplitCsv = "split.csv";
constexpr const char* kCaeModelFile = "cae_model.lada";
constexpr const char* kCaeLogCsv = "cae_train_log.csv";
constexpr const char* kLatentsCsv = "latents.csv";
constexpr const char* kLstmModelFile = "lstm_model.lada";
constexpr const char* kLstmLogCsv = "lstm_train_log.csv";
constexpr const char* kAnalysisCsv = "analysis.csv";
constexpr const char* kAnalysisDetailCsv = "analysis_detail.csv";
constexpr const char* kLaSummaryCsv = "la_summary.csv";
constexpr const char* kSdaAnalysisCsv = "sda_analysis.csv";
constexpr const char* kSdaSummaryCsv = "sda_summary.csv";
constexpr const char* kManifest = "manifest.txt";

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

double elapsed(clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
}

struct SceneArtifacts {
    std::vector<scene::Field> fields;                // normalized
    std::vector<std::size_t> obs_timesteps;          // config order, validated
    std::vector<std::vector<double>> readings_ppm;   // per obs timestep
    std::vector<scene::Field> obs_fields;            // normalized
};

SceneArtifacts make_scene(const ExperimentConfig& cfg) {
    // The dataset keeps every snapshot_stride-th solver state: the sensor
    // cadence is coarser than the solver step, so one dataset timestep spans
    // `snapshot_stride` units of scene time.
    scene::SceneConfig sim = cfg.scene;
    sim.steps = (cfg.scene.steps - 1) * cfg.snapshot_stride + 1;
    std::vector<scene::Field> raw = scene::simulate(sim);
    std::vector<scene::Field> ppm;
    ppm.reserve(cfg.scene.steps);
    for (std::size_t t = 0; t < cfg.scene.steps; ++t)
        ppm.push_back(std::move(raw[t * cfg.snapshot_stride]));
    raw.clear();
    SceneArtifacts art;
    art.fields.reserve(ppm.size());
    for (const auto& f : ppm)
        art.fields.push_back(scene::normalize(f, cfg.scene.ambient_ppm,
                                              cfg.scene.initial_ppm));
    Rng rng = Rng(cfg.seed).fork(0x0b5e);
    for (std::size_t t : cfg.observation_timesteps) {
        require(t < ppm.size(), "observation timestep beyond the simulation");
        art.obs_timesteps.push_back(t);
        std::vector<double> readings = scene::sample_sensors(ppm[t], cfg.sensors, rng);
        art.obs_fields.push_back(scene::observation_field(
            readings, cfg.sensors, cfg.scene.rows, cfg.scene.cols, cfg.scene.ambient_ppm,
            cfg.scene.initial_ppm));
        art.readings_ppm.push_back(std::move(readings));
    }
    return art;
}

void write_scene(const ExperimentConfig& cfg, const SceneArtifacts& art) {
    io::FieldStackMeta meta;
    meta.min_ppm = cfg.scene.ambient_ppm;
    meta.max_ppm = cfg.scene.initial_ppm;
    io::save_field_stack(join(cfg.out_dir, kFieldsFile), art.fields, meta);
    io::save_field_stack(join(cfg.out_dir, kObsFile), art.obs_fields, meta);

    io::CsvWriter readings(join(cfg.out_dir, kReadingsCsv));
    std::vector<std::string> header{"timestep"};
    for (std::size_t s = 0; s < cfg.sensors.positions.size(); ++s)
        header.push_back("sensor_" + std::to_string(s));
    readings.row(header);
    for (std::size_t k = 0; k < art.obs_timesteps.size(); ++k) {
        std::vector<std::string> row{io::fmt(art.obs_timesteps[k])};
        for (double v : art.readings_ppm[k]) row.push_back(io::fmt(v));
        readings.row(row);
    }
    readings.close();

    std::string snap_dir = join(cfg.out_dir, "snapshots");
    io::ensure_dir(snap_dir);
    char name[32];
    for (std::size_t t = 0; t < art.fields.size(); ++t) {
        std::snprintf(name, sizeof name, "snap_%05zu.pgm", t);
        io::write_pgm(join(snap_dir, name), art.fields[t]);
    }
}

SceneArtifacts load_scene(const ExperimentConfig& cfg) {
    SceneArtifacts art;
    io::FieldStackMeta meta;
    art.fields = io::load_field_stack(join(cfg.out_dir, kFieldsFile), meta);
    io::FieldStackMeta obs_meta;
    art.obs_fields = io::load_field_stack(join(cfg.out_dir, kObsFile), obs_meta);
    art.obs_timesteps = cfg.observation_timesteps;
    require(art.obs_fields.size() == art.obs_timesteps.size(),
            "observation stack does not match the configured timesteps");
    return art;
}

std::vector<scene::Field> pick(const std::vector<scene::Field>& fields,
                               const std::vector<std::size_t>& idx) {
    std::vector<scene::Field> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(fields.at(i));
    return out;
}

void write_train_log(const std::string& path, const std::vector<EpochReport>& reports) {
    io::CsvWriter log(path);
    log.row({"epoch", "train_mse", "train_mae", "val_mse", "val_mae"});
    for (const auto& r : reports)
        log.row({io::fmt(r.epoch), io::fmt(r.train.mse), io::fmt(r.train.mae),
                 io::fmt(r.val.mse), io::fmt(r.val.mae)});
    log.close();
}

void write_latents_csv(const std::string& path,
                       const std::vector<std::vector<double>>& latents,
                       const dataset::SplitAssignment& split) {
    io::CsvWriter csv(path);
    std::vector<std::string> header{"timestep", "set"};
    for (std::size_t i = 0; i < latents.front().size(); ++i)
        header.push_back("h" + std::to_string(i));
    csv.row(header);
    for (std::size_t t = 0; t < latents.size(); ++t) {
        std::vector<std::string> row{io::fmt(t), dataset::to_string(split.label_of(t))};
        for (double v : latents[t]) row.push_back(io::fmt(v));
        csv.row(row);
    }
    csv.close();
}

// Pinned analysis schema shared by the latent and full-space reports.
void write_analysis_csv(const std::string& path,
                        const std::vector<std::pair<std::string, da::AssimResult>>& results) {
    io::CsvWriter csv(path);
    csv.row({"timestep", "mse_forecast", "mse_analysis", "sigma_mode",
             "correction_seconds"});
    for (const auto& [label, res] : results)
        for (const auto& rec : res.records)
            csv.row({io::fmt(rec.timestep), io::fmt(rec.mse_forecast_obs),
                     io::fmt(rec.mse_analysis_obs), label,
                     io::fmt(rec.correction_seconds)});
    csv.close();
}

void write_analysis_detail_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, da::AssimResult>>& results) {
    io::CsvWriter csv(path);
    csv.row({"timestep", "sigma_mode", "mse_forecast_obs", "mse_analysis_obs",
             "mse_forecast_truth", "mse_analysis_truth", "mse_forecast_phys",
             "mse_analysis_phys", "residual", "correction_seconds"});
    for (const auto& [label, res] : results)
        for (const auto& rec : res.records)
            csv.row({io::fmt(rec.timestep), label, io::fmt(rec.mse_forecast_obs),
                     io::fmt(rec.mse_analysis_obs), io::fmt(rec.mse_forecast_truth),
                     io::fmt(rec.mse_analysis_truth), io::fmt(rec.mse_forecast_phys),
                     io::fmt(rec.mse_analysis_phys), io::fmt(rec.residual),
                     io::fmt(rec.correction_seconds)});
    csv.close();
}

std::vector<std::size_t> strided_subset(const std::vector<std::size_t>& idx,
                                        std::size_t cap) {
    if (idx.size() <= cap) return idx;
    std::vector<std::size_t> out;
    out.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i)
        out.push_back(idx[i * (idx.size() - 1) / (cap - 1)]);
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct TrainedModels {
    cae::CaeModel cae_model;
    cae::TrainResult cae_train;
    std::vector<std::vector<double>> latents;
    lstm::LstmModel lstm_model;
    lstm::TrainResult lstm_train;
    double lstm_val_mse = 0.0;
    double persistence_val_mse = 0.0;
};

cae::CaeModel train_cae_stage(const ExperimentConfig& cfg,
                              const std::vector<scene::Field>& fields,
                              const dataset::SplitAssignment& split,
                              cae::TrainResult* out_result) {
    Rng init_rng = Rng(cfg.seed).fork(0xcae0);
    cae::CaeModel model = cae::CaeModel::init(cfg.cae.arch, init_rng);
    TrainOptions opts = cfg.cae.train;
    opts.seed = Rng(cfg.seed).fork(0xcae1).state;
    opts.threads = cfg.threads;
    cae::TrainResult res =
        cae::train_cae(model, pick(fields, split.train), pick(fields, split.val), opts);
    if (out_result) *out_result = std::move(res);
    return model;
}

std::vector<std::vector<double>> encode_all(const cae::CaeModel& model,
                                            const std::vector<scene::Field>& fields) {
    std::vector<std::vector<double>> latents;
    latents.reserve(fields.size());
    for (const auto& f : fields) latents.push_back(cae::encode(model, f));
    return latents;
}

// Largest in-set index gap a lookback window may span. Train indices arrive
// in adjacent pairs separated by the held-out slots; val and test alternate
// inside those slots, so their regular spacing is twice the pattern period.
// One extra index absorbs holes punched by observation reassignment.
std::size_t train_window_gap(const dataset::SplitAssignment& split) {
    return split.jump + 3;
}
std::size_t heldout_window_gap(const dataset::SplitAssignment& split) {
    return 2 * (split.jump + 2) + 2;
}

lstm::LstmModel train_lstm_stage(const ExperimentConfig& cfg,
                                 const lstm::LstmConfig& model_cfg,
                                 const std::vector<std::vector<double>>& latents,
                                 const dataset::SplitAssignment& split,
                                 lstm::TrainResult* out_result) {
    auto train_samples = dataset::windows_within(latents, split.train, model_cfg.lookback,
                                                 train_window_gap(split));
    auto val_samples = dataset::windows_within(latents, split.val, model_cfg.lookback,
                                               heldout_window_gap(split));
    require(!train_samples.empty(), "no surrogate training samples; series too short");
    require(!val_samples.empty(), "no surrogate validation samples");

    Rng init_rng = Rng(cfg.seed).fork(0x157b0);
    lstm::LstmModel model = lstm::LstmModel::init(model_cfg, init_rng);
    TrainOptions opts = cfg.lstm.train;
    opts.seed = Rng(cfg.seed).fork(0x157b1).state;
    lstm::TrainResult res = lstm::train_lstm(model, train_samples, val_samples, opts);
    if (out_result) *out_result = std::move(res);
    return model;
}

const std::vector<std::size_t>& background_indices(const ExperimentConfig& cfg,
                                                   const dataset::SplitAssignment& split) {
    return cfg.assimilation.background_set == "train" ? split.train : split.val;
}

// Encoded test-set trajectory: the assimilation windows over the states the
// protocol actually holds out, never the train/val ones.
da::LatentSeries test_series(const std::vector<std::vector<double>>& latents,
                             const dataset::SplitAssignment& split) {
    da::LatentSeries s;
    s.timesteps = split.test;
    s.latents.reserve(split.test.size());
    for (std::size_t t : split.test) s.latents.push_back(latents.at(t));
    return s;
}

std::vector<std::pair<std::string, da::AssimResult>> run_la_modes(
    const ExperimentConfig& cfg, const da::Codec& codec, const lstm::LstmModel& surrogate,
    const std::vector<std::vector<double>>& latents, const SceneArtifacts& art,
    const dataset::SplitAssignment& split) {
    const auto& bg_idx = background_indices(cfg, split);
    std::vector<std::vector<double>> background;
    background.reserve(bg_idx.size());
    for (std::size_t t : bg_idx) background.push_back(latents.at(t));

    da::LatentSeries test = test_series(latents, split);
    std::vector<std::pair<std::string, da::AssimResult>> results;
    for (const auto& mode : cfg.assimilation.r_modes) {
        da::AssimOptions opts;
        opts.r_mode = mode;
        opts.normalize_covariance = cfg.assimilation.normalize_covariance;
        results.emplace_back(mode.label(),
                             da::latent_assimilate(codec, surrogate, test,
                                                   art.obs_timesteps, art.obs_fields,
                                                   background, opts));
    }
    return results;
}

ResultTable la_summary_table(
    const std::vector<std::pair<std::string, da::AssimResult>>& results) {
    ResultTable t;
    t.name = "latent_assimilation_summary";
    t.columns = {"latent_mse_no_da", "latent_mse_analysis", "latent_mse_no_da_truth",
                 "latent_mse_analysis_truth", "physical_mse_forecast",
                 "physical_mse_analysis", "mean_correction_seconds"};
    for (const auto& [label, res] : results)
        t.add_row(label, {res.mean_mse_forecast_obs, res.mean_mse_analysis_obs,
                          res.mean_mse_forecast_truth, res.mean_mse_analysis_truth,
                          res.mean_mse_forecast_phys, res.mean_mse_analysis_phys,
                          res.mean_correction_seconds});
    t.validate();
    return t;
}

void write_triptychs(const ExperimentConfig& cfg, const da::Codec& codec,
                     const std::vector<std::pair<std::string, da::AssimResult>>& results,
                     const SceneArtifacts& art) {
    const da::AssimResult* chosen = nullptr;
    for (const auto& [label, res] : results)
        if (label == cfg.assimilation.triptych_mode) chosen = &res;
    require(chosen != nullptr, "triptych mode was not executed");

    std::string dir = join(cfg.out_dir, "triptychs");
    io::ensure_dir(dir);
    char name[40];
    for (const auto& rec : chosen->records) {
        std::size_t k = 0;
        while (k < art.obs_timesteps.size() && art.obs_timesteps[k] != rec.timestep) ++k;
        require(k < art.obs_timesteps.size(), "analysis record has no observation field");
        scene::Field forecast = codec.decode(rec.forecast);
        scene::Field analysis = codec.decode(rec.analysis);
        std::snprintf(name, sizeof name, "triptych_%05zu.pgm", rec.timestep);
        io::write_triptych_pgm(join(dir, name), forecast, art.obs_fields[k], analysis);
    }
}

da::AssimResult run_sda(const ExperimentConfig& cfg, const da::Codec& codec,
                        const lstm::LstmModel& surrogate,
                        const std::vector<std::vector<double>>& latents,
                        const SceneArtifacts& art, const dataset::SplitAssignment& split) {
    const std::size_t q = surrogate.config.lookback;
    da::LatentSeries test = test_series(latents, split);
    std::vector<std::size_t> timesteps;
    std::vector<scene::Field> forecasts, observations;
    for (std::size_t k = 0; k < art.obs_timesteps.size(); ++k) {
        std::size_t t = art.obs_timesteps[k];
        auto it = std::lower_bound(test.timesteps.begin(), test.timesteps.end(), t);
        std::size_t pos = static_cast<std::size_t>(it - test.timesteps.begin());
        if (it == test.timesteps.end() || *it != t || pos < q) continue;
        std::vector<std::vector<double>> window(
            test.latents.begin() + static_cast<std::ptrdiff_t>(pos - q),
            test.latents.begin() + static_cast<std::ptrdiff_t>(pos));
        forecasts.push_back(codec.decode(lstm::forecast(surrogate, window)));
        observations.push_back(art.obs_fields[k]);
        timesteps.push_back(t);
    }
    std::vector<scene::Field> background = pick(
        art.fields, strided_subset(background_indices(cfg, split), cfg.baseline.background_cap));

    da::StandardDaOptions opts;
    opts.r_mode = cfg.baseline.r_mode;
    opts.normalize_covariance = cfg.assimilation.normalize_covariance;
    opts.gain_storage_cap = cfg.baseline.gain_storage_cap;
    return da::standard_da(timesteps, forecasts, observations, background, opts);
}

}  // namespace

void ResultTable::add_row(const std::string& label, std::vector<std::optional<double>> row) {
    require(row.size() == columns.size(), "table row width mismatch in " + name);
    row_labels.push_back(label);
    cells.push_back(std::move(row));
}

void ResultTable::validate() const {
    std::set<std::string> seen;
    for (const auto& l : row_labels)
        require(seen.insert(l).second, "duplicate table row label '" + l + "'");
    for (const auto& row : cells)
        for (const auto& cell : row)
            if (cell) require(std::isfinite(*cell), "non-finite table cell in " + name);
}

void ResultTable::write_csv(const std::string& path) const {
    validate();
    io::CsvWriter csv(path);
    std::vector<std::string> header{"row"};
    header.insert(header.end(), columns.begin(), columns.end());
    csv.row(header);
    for (std::size_t r = 0; r < row_labels.size(); ++r) {
        std::vector<std::string> row{row_labels[r]};
        for (const auto& cell : cells[r]) row.push_back(cell ? io::fmt(*cell) : "failed");
        csv.row(row);
    }
    csv.close();
}

std::string ResultTable::best_row(const std::string& column) const {
    auto col_index = [&](const std::string& c) -> std::size_t {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == c) return i;
        return columns.size();
    };
    std::size_t col = col_index(column);
    require(col < columns.size(), "table has no column '" + column + "'");
    // Exact ties fall through to lower spread, then lower cost.
    std::vector<std::size_t> tiebreak;
    for (const char* c : {"std_mse", "mean_seconds"}) {
        std::size_t i = col_index(c);
        if (i < columns.size() && i != col) tiebreak.push_back(i);
    }
    auto value = [&](std::size_t r, std::size_t c) {
        const auto& cell = cells[r][c];
        return cell ? *cell : std::numeric_limits<double>::infinity();
    };
    std::size_t best = row_labels.size();
    for (std::size_t r = 0; r < row_labels.size(); ++r) {
        if (!cells[r][col]) continue;
        if (best == row_labels.size()) {
            best = r;
            continue;
        }
        double v = value(r, col), bv = value(best, col);
        bool better = v < bv;
        if (v == bv)
            for (std::size_t c : tiebreak) {
                if (value(r, c) == value(best, c)) continue;
                better = value(r, c) < value(best, c);
                break;
            }
        if (better) best = r;
    }
    require(best < row_labels.size(), "every row failed; no best cell in " + name);
    return row_labels[best];
}

PipelineResult run_full_pipeline(const ExperimentConfig& cfg) {
    cfg.validate();
    io::ensure_dir(cfg.out_dir);
    PipelineResult out;
    out.out_dir = cfg.out_dir;

    auto timed = [&](const char* stage, auto&& fn) {
        auto t0 = clock::now();
        fn();
        out.stage_seconds.emplace_back(stage, elapsed(t0));
    };

    SceneArtifacts art;
    timed("scene", [&] {
        art = make_scene(cfg);
        write_scene(cfg, art);
    });
    out.fields = art.fields;
    out.obs_fields = art.obs_fields;
    out.obs_timesteps = art.obs_timesteps;

    timed("split", [&] {
        out.split = dataset::split(cfg.scene.steps, cfg.split_jump,
                                   cfg.observation_timesteps);
        dataset::write_split_csv(join(cfg.out_dir, kSplitCsv), out.split);
    });

    timed("train_autoencoder", [&] {
        out.cae_model = train_cae_stage(cfg, art.fields, out.split, &out.cae_train);
        cae::save_model(out.cae_model, join(cfg.out_dir, kCaeModelFile));
        write_train_log(join(cfg.out_dir, kCaeLogCsv), out.cae_train.reports);
    });

    timed("encode", [&] {
        out.latents = encode_all(out.cae_model, art.fields);
        write_latents_csv(join(cfg.out_dir, kLatentsCsv), out.latents, out.split);
    });

    timed("train_surrogate", [&] {
        lstm::LstmConfig mc = cfg.lstm.model;
        mc.latent_dim = cfg.cae.arch.latent_dim;
        out.lstm_model = train_lstm_stage(cfg, mc, out.latents, out.split, &out.lstm_train);
        lstm::save_model(out.lstm_model, join(cfg.out_dir, kLstmModelFile));
        write_train_log(join(cfg.out_dir, kLstmLogCsv), out.lstm_train.reports);
        auto val_samples = dataset::windows_within(out.latents, out.split.val,
                                                   mc.lookback,
                                                   heldout_window_gap(out.split));
        out.lstm_val_mse = lstm::evaluate(out.lstm_model, val_samples).mse;
        out.lstm_persistence_val_mse = lstm::persistence_mse(val_samples);
    });

    da::Codec codec = da::make_codec(out.cae_model);
    timed("assimilate", [&] {
        out.la_results = run_la_modes(cfg, codec, out.lstm_model, out.latents, art,
                                      out.split);
        write_analysis_csv(join(cfg.out_dir, kAnalysisCsv), out.la_results);
        write_analysis_detail_csv(join(cfg.out_dir, kAnalysisDetailCsv), out.la_results);
        out.la_table = la_summary_table(out.la_results);
        out.la_table.write_csv(join(cfg.out_dir, kLaSummaryCsv));
        write_triptychs(cfg, codec, out.la_results, art);
    });

    if (cfg.baseline.enabled) {
        timed("baseline", [&] {
            out.sda_result = run_sda(cfg, codec, out.lstm_model, out.latents, art,
                                     out.split);
            std::vector<std::pair<std::string, da::AssimResult>> wrapped{
                {cfg.baseline.r_mode.label(), *out.sda_result}};
            write_analysis_csv(join(cfg.out_dir, kSdaAnalysisCsv), wrapped);
            ResultTable t;
            t.name = "full_space_baseline_summary";
            t.columns = {"physical_mse_forecast", "physical_mse_analysis",
                         "mean_correction_seconds"};
            t.add_row(cfg.baseline.r_mode.label(),
                      {out.sda_result->mean_mse_forecast_phys,
                       out.sda_result->mean_mse_analysis_phys,
                       out.sda_result->mean_correction_seconds});
            t.write_csv(join(cfg.out_dir, kSdaSummaryCsv));
        });
    }

    std::vector<std::pair<std::string, std::string>> manifest{
        {"seed", io::fmt(static_cast<std::size_t>(cfg.seed))},
        {"threads", io::fmt(cfg.threads)},
        {"grid_rows", io::fmt(cfg.scene.rows)},
        {"grid_cols", io::fmt(cfg.scene.cols)},
        {"timesteps", io::fmt(cfg.scene.steps)},
        {"latent_dim", io::fmt(cfg.cae.arch.latent_dim)},
        {"train_size", io::fmt(out.split.train.size())},
        {"val_size", io::fmt(out.split.val.size())},
        {"test_size", io::fmt(out.split.test.size())},
        {"observations", io::fmt(out.obs_timesteps.size())},
        {"cae_epochs_run", io::fmt(out.cae_train.reports.size())},
        {"cae_final_val_mse", io::fmt(out.cae_train.reports.empty()
                                          ? std::nan("")
                                          : out.cae_train.reports.back().val.mse)},
        {"lstm_val_mse", io::fmt(out.lstm_val_mse)},
        {"lstm_persistence_val_mse", io::fmt(out.lstm_persistence_val_mse)},
    };
    for (const auto& [label, res] : out.la_results)
        manifest.emplace_back("la_latent_mse_" + label, io::fmt(res.mean_mse_analysis_obs));
    if (!out.la_results.empty())
        manifest.emplace_back("la_latent_mse_no_da",
                              io::fmt(out.la_results.front().second.mean_mse_forecast_obs));
    if (out.sda_result) {
        manifest.emplace_back("sda_physical_mse", io::fmt(out.sda_result->mean_mse_analysis_phys));
        manifest.emplace_back("sda_mean_correction_seconds",
                              io::fmt(out.sda_result->mean_correction_seconds));
        if (!out.la_results.empty()) {
            double la_mean = 0.0;
            for (const auto& [label, res] : out.la_results)
                la_mean += res.mean_correction_seconds;
            la_mean /= static_cast<double>(out.la_results.size());
            manifest.emplace_back(
                "timing_ratio_sda_over_la",
                io::fmt(la_mean > 0.0 ? out.sda_result->mean_correction_seconds / la_mean
                                      : std::nan("")));
        }
    }
    for (const auto& [stage, secs] : out.stage_seconds)
        manifest.emplace_back("seconds_" + std::string(stage), io::fmt(secs));
    io::write_manifest(join(cfg.out_dir, kManifest), manifest);
    return out;
}

namespace {

struct MeanStd {
    double mean = 0.0, std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd ms;
    if (xs.empty()) return ms;
    for (double x : xs) ms.mean += x;
    ms.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double acc = 0.0;
        for (double x : xs) acc += (x - ms.mean) * (x - ms.mean);
        ms.std = std::sqrt(acc / static_cast<double>(xs.size() - 1));
    }
    return ms;
}

double median(std::vector<double> xs) {
    require(!xs.empty(), "median of an empty sample");
    std::sort(xs.begin(), xs.end());
    std::size_t m = xs.size() / 2;
    return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

bool any_filled(const ResultTable& t) {
    for (const auto& row : t.cells)
        for (const auto& cell : row)
            if (cell) return true;
    return false;
}

std::vector<std::optional<double>> failed_row(std::size_t width) {
    return std::vector<std::optional<double>>(width);
}

}  // namespace

ResultTable run_grid_search_ae(const ExperimentConfig& cfg) {
    cfg.validate();
    io::ensure_dir(cfg.out_dir);
    SceneArtifacts art = make_scene(cfg);
    auto split = dataset::split(cfg.scene.steps, cfg.split_jump, cfg.observation_timesteps);
    auto cv_fields = pick(art.fields, split.train);

    ResultTable t;
    t.name = "autoencoder_grid";
    t.columns = {"mean_mse", "std_mse", "mean_mae", "std_mae", "mean_seconds",
                 "std_seconds"};
    io::CsvWriter cells(join(cfg.out_dir, "gridsearch_ae_cells.csv"));
    cells.row({"row", "repeat", "fold", "mse", "mae", "seconds"});
    const auto& gs = cfg.gridsearch_ae;
    std::size_t combo = 0;
    char label[64];
    for (std::size_t f : gs.filters)
        for (Activation a : gs.activations)
            for (std::size_t e : gs.epochs)
                for (std::size_t b : gs.batches) {
                    cae::CaeArchitecture arch = cfg.cae.arch;
                    arch.filters = f;
                    arch.conv_activation = a;
                    TrainOptions opts = cfg.cae.train;
                    opts.epochs = e;
                    opts.batch = b;
                    opts.early_stop_val_mse = 0.0;
                    opts.threads = cfg.threads;
                    opts.seed = Rng(cfg.seed).fork(0x9a1d00 + combo).state;
                    std::snprintf(label, sizeof label, "f%zu_%s_e%zu_b%zu", f,
                                  to_string(a), e, b);
                    try {
                        cae::CvStats stats =
                            cae::cross_validate(arch, cv_fields, gs.k, gs.repeats, opts);
                        for (std::size_t c = 0; c < stats.cells.size(); ++c)
                            cells.row({label, io::fmt(c / gs.k), io::fmt(c % gs.k),
                                       io::fmt(stats.cells[c].holdout.mse),
                                       io::fmt(stats.cells[c].holdout.mae),
                                       io::fmt(stats.cells[c].train_seconds)});
                        t.add_row(label, {stats.mean_mse, stats.std_mse, stats.mean_mae,
                                          stats.std_mae, stats.mean_seconds,
                                          stats.std_seconds});
                    } catch (const NumericalError&) {
                        t.add_row(label, failed_row(t.columns.size()));
                    }
                    ++combo;
                }
    cells.close();
    t.validate();
    t.write_csv(join(cfg.out_dir, "gridsearch_ae.csv"));
    if (any_filled(t))
        io::write_manifest(join(cfg.out_dir, "gridsearch_ae_best.txt"),
                           {{"best_mean_mse", t.best_row("mean_mse")}});
    return t;
}

ResultTable run_grid_search_lstm(const ExperimentConfig& cfg) {
    cfg.validate();
    io::ensure_dir(cfg.out_dir);
    SceneArtifacts art = make_scene(cfg);
    auto split = dataset::split(cfg.scene.steps, cfg.split_jump, cfg.observation_timesteps);

    cae::CaeModel model;
    std::string model_path = join(cfg.out_dir, kCaeModelFile);
    if (fs::exists(model_path)) {
        model = cae::load_model(model_path);
    } else {
        model = train_cae_stage(cfg, art.fields, split, nullptr);
        cae::save_model(model, model_path);
    }
    auto latents = encode_all(model, art.fields);

    ResultTable t;
    t.name = "surrogate_grid";
    t.columns = {"mean_mse", "std_mse", "mean_mae", "std_mae", "mean_seconds",
                 "std_seconds"};
    io::CsvWriter cells(join(cfg.out_dir, "gridsearch_lstm_cells.csv"));
    cells.row({"row", "repeat", "mse", "mae", "seconds"});
    const auto& gs = cfg.gridsearch_lstm;
    std::size_t combo = 0;
    char label[80];
    for (std::size_t n : gs.neurons)
        for (Activation a : gs.activations)
            for (std::size_t q : gs.lookbacks)
                for (std::size_t e : gs.epochs)
                    for (std::size_t b : gs.batches) {
                        auto train_samples = dataset::windows_within(
                            latents, split.train, q, train_window_gap(split));
                        auto val_samples = dataset::windows_within(
                            latents, split.val, q, heldout_window_gap(split));
                        std::snprintf(label, sizeof label, "n%zu_%s_q%zu_e%zu_b%zu", n,
                                      to_string(a), q, e, b);
                        std::vector<double> mses, maes, secs;
                        try {
                            for (std::size_t rep = 0; rep < gs.repeats; ++rep) {
                                lstm::LstmConfig mc = cfg.lstm.model;
                                mc.latent_dim = model.arch.latent_dim;
                                mc.hidden = n;
                                mc.lookback = q;
                                mc.projection_activation = a;
                                Rng init_rng =
                                    Rng(cfg.seed).fork(0x600d00 + combo * 64 + rep);
                                lstm::LstmModel m = lstm::LstmModel::init(mc, init_rng);
                                TrainOptions opts = cfg.lstm.train;
                                opts.epochs = e;
                                opts.batch = b;
                                opts.seed =
                                    Rng(cfg.seed).fork(0x700d00 + combo * 64 + rep).state;
                                auto t0 = clock::now();
                                lstm::train_lstm(m, train_samples, val_samples, opts);
                                secs.push_back(elapsed(t0));
                                LossReport r = lstm::evaluate(m, val_samples);
                                mses.push_back(r.mse);
                                maes.push_back(r.mae);
                            }
                            for (std::size_t rep = 0; rep < mses.size(); ++rep)
                                cells.row({label, io::fmt(rep), io::fmt(mses[rep]),
                                           io::fmt(maes[rep]), io::fmt(secs[rep])});
                            MeanStd mse = mean_std(mses), mae = mean_std(maes),
                                    sec = mean_std(secs);
                            t.add_row(label, {mse.mean, mse.std, mae.mean, mae.std,
                                              sec.mean, sec.std});
                        } catch (const NumericalError&) {
                            t.add_row(label, failed_row(t.columns.size()));
                        }
                        ++combo;
                    }
    cells.close();
    t.validate();
    t.write_csv(join(cfg.out_dir, "gridsearch_lstm.csv"));
    if (any_filled(t))
        io::write_manifest(join(cfg.out_dir, "gridsearch_lstm_best.txt"),
                           {{"best_mean_mse", t.best_row("mean_mse")}});
    return t;
}

SweepResult run_latent_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    io::ensure_dir(cfg.out_dir);
    SceneArtifacts art = make_scene(cfg);
    auto split = dataset::split(cfg.scene.steps, cfg.split_jump, cfg.observation_timesteps);
    auto train_fields = pick(art.fields, split.train);
    auto val_fields = pick(art.fields, split.val);

    std::vector<std::string> mode_labels;
    for (const auto& mode : cfg.assimilation.r_modes) mode_labels.push_back(mode.label());

    SweepResult sweep;
    sweep.latent_mse.name = "sweep_latent_mse";
    sweep.latent_mse.columns = {"no_assimilation"};
    sweep.latent_mse.columns.insert(sweep.latent_mse.columns.end(), mode_labels.begin(),
                                    mode_labels.end());
    sweep.physical_mse.name = "sweep_physical_mse";
    sweep.physical_mse.columns = {"forecast"};
    sweep.physical_mse.columns.insert(sweep.physical_mse.columns.end(),
                                      mode_labels.begin(), mode_labels.end());
    sweep.timing.name = "sweep_time";
    sweep.timing.columns = mode_labels;
    sweep.timing.columns.push_back("mean_all");
    sweep.timing.columns.push_back("median_all");

    io::CsvWriter cells(join(cfg.out_dir, "sweep_cells.csv"));
    cells.row({"row", "sigma_mode", "timestep", "mse_forecast_obs", "mse_analysis_obs",
               "mse_forecast_phys", "mse_analysis_phys", "correction_seconds"});

    for (std::size_t size : cfg.sweep.latent_sizes) {
        std::string label = "p" + std::to_string(size);
        try {
            cae::CaeArchitecture arch = cfg.cae.arch;
            arch.latent_dim = size;
            Rng init_rng = Rng(cfg.seed).fork(0x5ae000 + size);
            cae::CaeModel model = cae::CaeModel::init(arch, init_rng);
            TrainOptions copts = cfg.cae.train;
            copts.epochs = cfg.sweep.cae_epochs;
            copts.early_stop_val_mse = 0.0;
            copts.threads = cfg.threads;
            copts.seed = Rng(cfg.seed).fork(0x5ae100 + size).state;
            cae::train_cae(model, train_fields, val_fields, copts);

            auto latents = encode_all(model, art.fields);
            lstm::LstmConfig mc = cfg.lstm.model;
            mc.latent_dim = size;
            auto train_samples = dataset::windows_within(latents, split.train, mc.lookback,
                                                         train_window_gap(split));
            auto val_samples = dataset::windows_within(latents, split.val, mc.lookback,
                                                       heldout_window_gap(split));
            Rng lstm_rng = Rng(cfg.seed).fork(0x5ae200 + size);
            lstm::LstmModel surrogate = lstm::LstmModel::init(mc, lstm_rng);
            TrainOptions lopts = cfg.lstm.train;
            lopts.epochs = cfg.sweep.lstm_epochs;
            lopts.seed = Rng(cfg.seed).fork(0x5ae300 + size).state;
            lstm::train_lstm(surrogate, train_samples, val_samples, lopts);

            std::vector<std::vector<double>> background;
            for (std::size_t ti : background_indices(cfg, split))
                background.push_back(latents.at(ti));
            da::Codec codec = da::make_codec(model);

            std::vector<std::optional<double>> latent_row, phys_row, time_row;
            std::vector<double> samples;
            for (const auto& mode : cfg.assimilation.r_modes) {
                da::AssimOptions opts;
                opts.r_mode = mode;
                opts.normalize_covariance = cfg.assimilation.normalize_covariance;
                da::AssimResult res = da::latent_assimilate(
                    codec, surrogate, test_series(latents, split), art.obs_timesteps,
                    art.obs_fields, background, opts);
                if (latent_row.empty()) {
                    latent_row.push_back(res.mean_mse_forecast_obs);
                    phys_row.push_back(res.mean_mse_forecast_phys);
                }
                latent_row.push_back(res.mean_mse_analysis_obs);
                phys_row.push_back(res.mean_mse_analysis_phys);
                time_row.push_back(res.mean_correction_seconds);
                for (const auto& rec : res.records) {
                    samples.push_back(rec.correction_seconds);
                    cells.row({label, mode.label(), io::fmt(rec.timestep),
                               io::fmt(rec.mse_forecast_obs), io::fmt(rec.mse_analysis_obs),
                               io::fmt(rec.mse_forecast_phys),
                               io::fmt(rec.mse_analysis_phys),
                               io::fmt(rec.correction_seconds)});
                }
            }
            time_row.push_back(mean_std(samples).mean);
            time_row.push_back(median(samples));
            sweep.latent_mse.add_row(label, latent_row);
            sweep.physical_mse.add_row(label, phys_row);
            sweep.timing.add_row(label, time_row);
            sweep.correction_samples.emplace_back(label, std::move(samples));
        } catch (const NumericalError&) {
            sweep.latent_mse.add_row(label, failed_row(sweep.latent_mse.columns.size()));
            sweep.physical_mse.add_row(label,
                                       failed_row(sweep.physical_mse.columns.size()));
            sweep.timing.add_row(label, failed_row(sweep.timing.columns.size()));
            sweep.correction_samples.emplace_back(label, std::vector<double>{});
        }
    }
    cells.close();
    sweep.latent_mse.write_csv(join(cfg.out_dir, "sweep_latent_mse.csv"));
    sweep.physical_mse.write_csv(join(cfg.out_dir, "sweep_physical_mse.csv"));
    sweep.timing.write_csv(join(cfg.out_dir, "sweep_time.csv"));
    return sweep;
}

void cli_generate(const ExperimentConfig& cfg) {
    cfg.validate();
    io::ensure_dir(cfg.out_dir);
    write_scene(cfg, make_scene(cfg));
}

void cli_split(const ExperimentConfig& cfg) {
    cfg.validate();
    io::ensure_dir(cfg.out_dir);
    dataset::write_split_csv(
        join(cfg.out_dir, kSplitCsv),
        dataset::split(cfg.scene.steps, cfg.split_jump, cfg.observation_timesteps));
}

void cli_train_ae(const ExperimentConfig& cfg) {
    cfg.validate();
    SceneArtifacts art = load_scene(cfg);
    auto split = dataset::read_split_csv(join(cfg.out_dir, kSplitCsv));
    cae::TrainResult res;
    cae::CaeModel model = train_cae_stage(cfg, art.fields, split, &res);
    cae::save_model(model, join(cfg.out_dir, kCaeModelFile));
    write_train_log(join(cfg.out_dir, kCaeLogCsv), res.reports);
}

void cli_train_lstm(const ExperimentConfig& cfg) {
    cfg.validate();
    SceneArtifacts art = load_scene(cfg);
    auto split = dataset::read_split_csv(join(cfg.out_dir, kSplitCsv));
    cae::CaeModel model = cae::load_model(join(cfg.out_dir, kCaeModelFile));
    auto latents = encode_all(model, art.fields);
    write_latents_csv(join(cfg.out_dir, kLatentsCsv), latents, split);
    lstm::LstmConfig mc = cfg.lstm.model;
    mc.latent_dim = model.arch.latent_dim;
    lstm::TrainResult res;
    lstm::LstmModel surrogate = train_lstm_stage(cfg, mc, latents, split, &res);
    lstm::save_model(surrogate, join(cfg.out_dir, kLstmModelFile));
    write_train_log(join(cfg.out_dir, kLstmLogCsv), res.reports);
}

void cli_assimilate(const ExperimentConfig& cfg) {
    cfg.validate();
    SceneArtifacts art = load_scene(cfg);
    auto split = dataset::read_split_csv(join(cfg.out_dir, kSplitCsv));
    cae::CaeModel model = cae::load_model(join(cfg.out_dir, kCaeModelFile));
    lstm::LstmModel surrogate = lstm::load_model(join(cfg.out_dir, kLstmModelFile));
    auto latents = encode_all(model, art.fields);
    da::Codec codec = da::make_codec(model);
    auto results = run_la_modes(cfg, codec, surrogate, latents, art, split);
    write_analysis_csv(join(cfg.out_dir, kAnalysisCsv), results);
    write_analysis_detail_csv(join(cfg.out_dir, kAnalysisDetailCsv), results);
    ResultTable t = la_summary_table(results);
    t.write_csv(join(cfg.out_dir, kLaSummaryCsv));
    write_triptychs(cfg, codec, results, art);
}

void cli_baseline_da(const ExperimentConfig& cfg) {
    cfg.validate();
    require(cfg.baseline.enabled, "baseline stage is disabled in this config");
    SceneArtifacts art = load_scene(cfg);
    auto split = dataset::read_split_csv(join(cfg.out_dir, kSplitCsv));
    cae::CaeModel model = cae::load_model(join(cfg.out_dir, kCaeModelFile));
    lstm::LstmModel surrogate = lstm::load_model(join(cfg.out_dir, kLstmModelFile));
    auto latents = encode_all(model, art.fields);
    da::Codec codec = da::make_codec(model);
    da::AssimResult res = run_sda(cfg, codec, surrogate, latents, art, split);
    std::vector<std::pair<std::string, da::AssimResult>> wrapped{
        {cfg.baseline.r_mode.label(), res}};
    write_analysis_csv(join(cfg.out_dir, kSdaAnalysisCsv), wrapped);
    ResultTable t;
    t.name = "full_space_baseline_summary";
    t.columns = {"physical_mse_forecast", "physical_mse_analysis",
                 "mean_correction_seconds"};
    t.add_row(cfg.baseline.r_mode.label(),
              {res.mean_mse_forecast_phys, res.mean_mse_analysis_phys,
               res.mean_correction_seconds});
    t.write_csv(join(cfg.out_dir, kSdaSummaryCsv));
}

}  // namespace lada::harness
