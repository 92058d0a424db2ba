#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lada/cae.hpp"
#include "lada/lstm.hpp"
#include "lada/scene.hpp"

namespace lada::da {

// Dense symmetric covariance, row-major dim x dim.
struct Covariance {
    std::size_t dim = 0;
    std::vector<double> values;

    Covariance() = default;
    explicit Covariance(std::size_t d) : dim(d), values(d * d, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return values[i * dim + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * dim + j]; }

    static Covariance scaled_identity(std::size_t dim, double sigma);
};

// Q = V V^T with V the column matrix of deviations from the sample mean. No
// 1/(s-1) factor unless `normalize` is set; the gain is insensitive to a
// common scaling of Q and R, and the unscaled form is the one the experiment
// tables are defined over.
Covariance sample_covariance(const std::vector<std::vector<double>>& samples,
                             bool normalize = false);

// Observation-error covariance mode for an experiment run.
struct RMode {
    enum class Kind { Sample, ScaledIdentity };
    Kind kind = Kind::ScaledIdentity;
    double sigma = 1e-4;

    std::string label() const;  // "sample" or "sigma_<value>"
};

// K = Q (Q + R)^{-1} (identity observation operator), computed via a pivoted
// LDLT solve. Raises NumericalError when the factorization fails or the
// condition estimate of Q + R exceeds 1e12. Returns row-major dim x dim.
std::vector<double> kalman_gain(const Covariance& q, const Covariance& r);

// analysis = forecast + K (observation - forecast).
std::vector<double> analysis_update(const std::vector<double>& forecast,
                                    const std::vector<double>& observation,
                                    const std::vector<double>& gain);

// Encoder/decoder pair the assimilation loop runs through. make_codec wraps a
// trained autoencoder; tests can substitute identity maps.
struct Codec {
    std::function<std::vector<double>(const scene::Field&)> encode;
    std::function<scene::Field(const std::vector<double>&)> decode;
};

Codec make_codec(const cae::CaeModel& model);

struct AnalysisRecord {
    std::size_t timestep = 0;
    std::vector<double> forecast, observation, analysis;
    std::vector<double> gain;  // row-major; empty when above the storage cap
    double correction_seconds = 0.0;
    // State-space errors against the (encoded) observation.
    double mse_forecast_obs = 0.0, mse_analysis_obs = 0.0;
    // State-space errors against the encoded ground-truth state at the same
    // timestep. The observation is interpolated from sparse sensors, so the
    // two references genuinely differ; both are reported.
    double mse_forecast_truth = 0.0, mse_analysis_truth = 0.0;
    // Physical-space errors against the observation field.
    double mse_forecast_phys = 0.0, mse_analysis_phys = 0.0;
    // Self-consistency: max |analysis - forecast - K (obs - forecast)| for
    // explicit gains, or the innovation-system solve residual otherwise.
    double residual = 0.0;
};

struct AssimOptions {
    RMode r_mode;
    bool normalize_covariance = false;
    bool store_gain = true;
};

struct AssimResult {
    std::vector<AnalysisRecord> records;
    std::vector<std::size_t> skipped;  // observation timesteps without a full window
    double mean_mse_forecast_obs = 0.0;  // the no-assimilation baseline
    double mean_mse_analysis_obs = 0.0;
    double mean_mse_forecast_truth = 0.0;
    double mean_mse_analysis_truth = 0.0;
    double mean_mse_forecast_phys = 0.0;
    double mean_mse_analysis_phys = 0.0;
    double mean_correction_seconds = 0.0;
    std::size_t dim = 0;
};

// A time-indexed encoded trajectory: `timesteps` are strictly ascending
// positions in the full run, `latents` the encoded state at each of them.
struct LatentSeries {
    std::vector<std::size_t> timesteps;
    std::vector<std::vector<double>> latents;
};

// Latent-space assimilation with a time-invariant Q estimated once from
// `background_latents`. `test` is the encoded test-set trajectory; for each
// observation timestep t the surrogate forecasts from the q nearest test
// latents before t, the observation field is encoded, and the Kalman update
// runs in latent space; both states are also decoded for physical-space error
// reporting. R is either sigma * I or the sample covariance of all encoded
// observations. Timesteps without q preceding test latents, or absent from
// `test` entirely (no truth reference), are skipped and reported.
AssimResult latent_assimilate(const Codec& codec, const lstm::LstmModel& surrogate,
                              const LatentSeries& test,
                              const std::vector<std::size_t>& obs_timesteps,
                              const std::vector<scene::Field>& obs_fields,
                              const std::vector<std::vector<double>>& background_latents,
                              const AssimOptions& opts);

struct StandardDaOptions {
    RMode r_mode;
    bool normalize_covariance = false;
    // Above this state dimension the gain is not stored or materialized; the
    // correction solves (Q+R) w = innovation once and applies Q w.
    std::size_t gain_storage_cap = 512;
};

// The same Kalman arithmetic applied directly in the flattened physical space
// (identity observation operator on the full grid). Forecast fields arrive
// already decoded; Q comes from `background_fields`.
AssimResult standard_da(const std::vector<std::size_t>& timesteps,
                        const std::vector<scene::Field>& forecast_fields,
                        const std::vector<scene::Field>& obs_fields,
                        const std::vector<scene::Field>& background_fields,
                        const StandardDaOptions& opts);

}  // namespace lada::da
