#include "lada/assimilate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace lada::da {

namespace {

using clock = std::chrono::steady_clock;

double seconds_since(clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
}

double vec_mse(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "mse over vectors of different length");
    require(!a.empty(), "mse over empty vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> as_matrix(const Covariance& c) {
    return Eigen::Map<const RowMat>(c.values.data(), static_cast<Eigen::Index>(c.dim),
                                    static_cast<Eigen::Index>(c.dim));
}

// Factorization of Q + R with the pinned conditioning guard. The D-diagonal
// ratio of the pivoted LDLT serves as the condition estimate.
Eigen::LDLT<Eigen::MatrixXd> factor_innovation(const Covariance& q, const Covariance& r) {
    require(q.dim == r.dim && q.dim > 0, "covariance dimensions disagree");
    Eigen::MatrixXd a = as_matrix(q) + as_matrix(r);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success)
        throw NumericalError("innovation covariance factorization failed");
    Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
    double dmax = d.maxCoeff(), dmin = d.minCoeff();
    if (!(dmin > 0.0) || !std::isfinite(dmax) || dmax / dmin > 1e12)
        throw NumericalError(
            "innovation covariance is numerically singular (condition estimate " +
            std::to_string(dmin > 0.0 ? dmax / dmin : std::nan("")) + " exceeds 1e12)");
    return ldlt;
}

Covariance make_r(const RMode& mode, std::size_t dim,
                  const std::vector<std::vector<double>>& obs_samples, bool normalize) {
    if (mode.kind == RMode::Kind::ScaledIdentity) {
        require(mode.sigma > 0.0, "sigma for scaled-identity R must be positive");
        return Covariance::scaled_identity(dim, mode.sigma);
    }
    Covariance r = sample_covariance(obs_samples, normalize);
    require(r.dim == dim, "observation sample dimension disagrees with the state");
    return r;
}

}  // namespace

Covariance Covariance::scaled_identity(std::size_t dim, double sigma) {
    require(dim > 0, "covariance dimension must be positive");
    require(std::isfinite(sigma) && sigma > 0.0, "sigma must be positive and finite");
    Covariance c(dim);
    for (std::size_t i = 0; i < dim; ++i) c.at(i, i) = sigma;
    return c;
}

Covariance sample_covariance(const std::vector<std::vector<double>>& samples,
                             bool normalize) {
    require(!samples.empty(), "covariance of an empty sample set");
    const std::size_t dim = samples.front().size();
    require(dim > 0, "covariance of zero-length vectors");
    for (const auto& s : samples)
        require(s.size() == dim, "covariance samples differ in length");

    std::vector<double> mean(dim, 0.0);
    for (const auto& s : samples)
        for (std::size_t i = 0; i < dim; ++i) mean[i] += s[i];
    for (double& m : mean) m /= static_cast<double>(samples.size());

    Covariance q(dim);
    // Accumulate the lower triangle of sum_k v_k v_k^T, then mirror.
    std::vector<double> dev(dim);
    for (const auto& s : samples) {
        for (std::size_t i = 0; i < dim; ++i) dev[i] = s[i] - mean[i];
        for (std::size_t i = 0; i < dim; ++i) {
            double di = dev[i];
            double* row = &q.values[i * dim];
            for (std::size_t j = 0; j <= i; ++j) row[j] += di * dev[j];
        }
    }
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i + 1; j < dim; ++j) q.at(i, j) = q.at(j, i);
    if (normalize && samples.size() > 1) {
        double f = 1.0 / static_cast<double>(samples.size() - 1);
        for (double& v : q.values) v *= f;
    }
    return q;
}

std::string RMode::label() const {
    if (kind == Kind::Sample) return "sample";
    char buf[32];
    std::snprintf(buf, sizeof buf, "sigma_%g", sigma);
    return buf;
}

std::vector<double> kalman_gain(const Covariance& q, const Covariance& r) {
    auto ldlt = factor_innovation(q, r);
    // K = Q (Q+R)^{-1}; with symmetric factors, K^T = (Q+R)^{-1} Q.
    Eigen::MatrixXd kt = ldlt.solve(as_matrix(q));
    std::vector<double> gain(q.dim * q.dim);
    for (std::size_t i = 0; i < q.dim; ++i)
        for (std::size_t j = 0; j < q.dim; ++j)
            gain[i * q.dim + j] = kt(static_cast<Eigen::Index>(j),
                                     static_cast<Eigen::Index>(i));
    return gain;
}

std::vector<double> analysis_update(const std::vector<double>& forecast,
                                    const std::vector<double>& observation,
                                    const std::vector<double>& gain) {
    const std::size_t n = forecast.size();
    require(observation.size() == n, "forecast/observation length mismatch");
    require(gain.size() == n * n, "gain size does not match the state dimension");
    std::vector<double> innovation(n);
    for (std::size_t i = 0; i < n; ++i) innovation[i] = observation[i] - forecast[i];
    std::vector<double> analysis(forecast);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* row = &gain[i * n];
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * innovation[j];
        analysis[i] += acc;
    }
    return analysis;
}

Codec make_codec(const cae::CaeModel& model) {
    Codec c;
    c.encode = [&model](const scene::Field& f) { return cae::encode(model, f); };
    c.decode = [&model](const std::vector<double>& h) { return cae::decode(model, h); };
    return c;
}

namespace {

void finalize_means(AssimResult& res) {
    if (res.records.empty()) return;
    double n = static_cast<double>(res.records.size());
    for (const auto& rec : res.records) {
        res.mean_mse_forecast_obs += rec.mse_forecast_obs;
        res.mean_mse_analysis_obs += rec.mse_analysis_obs;
        res.mean_mse_forecast_truth += rec.mse_forecast_truth;
        res.mean_mse_analysis_truth += rec.mse_analysis_truth;
        res.mean_mse_forecast_phys += rec.mse_forecast_phys;
        res.mean_mse_analysis_phys += rec.mse_analysis_phys;
        res.mean_correction_seconds += rec.correction_seconds;
    }
    res.mean_mse_forecast_obs /= n;
    res.mean_mse_analysis_obs /= n;
    res.mean_mse_forecast_truth /= n;
    res.mean_mse_analysis_truth /= n;
    res.mean_mse_forecast_phys /= n;
    res.mean_mse_analysis_phys /= n;
    res.mean_correction_seconds /= n;
}

}  // namespace

AssimResult latent_assimilate(const Codec& codec, const lstm::LstmModel& surrogate,
                              const LatentSeries& test,
                              const std::vector<std::size_t>& obs_timesteps,
                              const std::vector<scene::Field>& obs_fields,
                              const std::vector<std::vector<double>>& background_latents,
                              const AssimOptions& opts) {
    require(obs_timesteps.size() == obs_fields.size(),
            "observation timesteps and fields disagree in count");
    require(!test.latents.empty(), "empty test trajectory");
    require(test.timesteps.size() == test.latents.size(),
            "test timesteps and latents disagree in count");
    for (std::size_t i = 1; i < test.timesteps.size(); ++i)
        require(test.timesteps[i - 1] < test.timesteps[i],
                "test timesteps must be strictly ascending");
    const std::size_t p = test.latents.front().size();
    const std::size_t q_len = surrogate.config.lookback;
    require(p == surrogate.config.latent_dim, "trajectory and surrogate dimensions differ");

    AssimResult res;
    res.dim = p;

    Covariance q_cov = sample_covariance(background_latents, opts.normalize_covariance);
    require(q_cov.dim == p, "background latents have the wrong dimension");

    std::vector<std::vector<double>> encoded_obs;
    encoded_obs.reserve(obs_fields.size());
    for (const auto& f : obs_fields) encoded_obs.push_back(codec.encode(f));
    Covariance r_cov = make_r(opts.r_mode, p, encoded_obs, opts.normalize_covariance);

    for (std::size_t k = 0; k < obs_timesteps.size(); ++k) {
        std::size_t t = obs_timesteps[k];
        // The truth reference is the encoded test state at t itself; the
        // window is the q test latents nearest before t.
        auto it = std::lower_bound(test.timesteps.begin(), test.timesteps.end(), t);
        std::size_t pos = static_cast<std::size_t>(it - test.timesteps.begin());
        if (it == test.timesteps.end() || *it != t || pos < q_len) {
            res.skipped.push_back(t);
            continue;
        }
        std::vector<std::vector<double>> window(
            test.latents.begin() + static_cast<std::ptrdiff_t>(pos - q_len),
            test.latents.begin() + static_cast<std::ptrdiff_t>(pos));

        AnalysisRecord rec;
        rec.timestep = t;
        rec.forecast = lstm::forecast(surrogate, window);
        rec.observation = encoded_obs[k];

        auto t0 = clock::now();
        std::vector<double> gain = kalman_gain(q_cov, r_cov);
        rec.analysis = analysis_update(rec.forecast, rec.observation, gain);
        rec.correction_seconds = seconds_since(t0);

        // Verify the update identity with an independent pass.
        double resid = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            double acc = rec.forecast[i];
            for (std::size_t j = 0; j < p; ++j)
                acc += gain[i * p + j] * (rec.observation[j] - rec.forecast[j]);
            resid = std::max(resid, std::fabs(acc - rec.analysis[i]));
        }
        rec.residual = resid;
        if (opts.store_gain) rec.gain = std::move(gain);

        rec.mse_forecast_obs = vec_mse(rec.forecast, rec.observation);
        rec.mse_analysis_obs = vec_mse(rec.analysis, rec.observation);
        rec.mse_forecast_truth = vec_mse(rec.forecast, test.latents[pos]);
        rec.mse_analysis_truth = vec_mse(rec.analysis, test.latents[pos]);
        scene::Field dec_forecast = codec.decode(rec.forecast);
        scene::Field dec_analysis = codec.decode(rec.analysis);
        rec.mse_forecast_phys = vec_mse(dec_forecast.values, obs_fields[k].values);
        rec.mse_analysis_phys = vec_mse(dec_analysis.values, obs_fields[k].values);
        res.records.push_back(std::move(rec));
    }
    finalize_means(res);
    return res;
}

AssimResult standard_da(const std::vector<std::size_t>& timesteps,
                        const std::vector<scene::Field>& forecast_fields,
                        const std::vector<scene::Field>& obs_fields,
                        const std::vector<scene::Field>& background_fields,
                        const StandardDaOptions& opts) {
    require(timesteps.size() == forecast_fields.size() &&
                timesteps.size() == obs_fields.size(),
            "timesteps, forecasts and observations disagree in count");
    require(!forecast_fields.empty(), "no corrections to perform");
    require(!background_fields.empty(), "empty background sample set");

    const std::size_t n = forecast_fields.front().numel();
    std::vector<std::vector<double>> bg;
    bg.reserve(background_fields.size());
    for (const auto& f : background_fields) {
        require(f.numel() == n, "background field shape mismatch");
        bg.push_back(f.values);
    }

    AssimResult res;
    res.dim = n;
    Covariance q_cov = sample_covariance(bg, opts.normalize_covariance);

    std::vector<std::vector<double>> obs_flat;
    obs_flat.reserve(obs_fields.size());
    for (const auto& f : obs_fields) {
        require(f.numel() == n, "observation field shape mismatch");
        obs_flat.push_back(f.values);
    }
    Covariance r_cov = make_r(opts.r_mode, n, obs_flat, opts.normalize_covariance);

    const bool store_gain = n <= opts.gain_storage_cap;
    for (std::size_t k = 0; k < timesteps.size(); ++k) {
        require(forecast_fields[k].numel() == n, "forecast field shape mismatch");

        AnalysisRecord rec;
        rec.timestep = timesteps[k];
        rec.forecast = forecast_fields[k].values;
        rec.observation = obs_flat[k];

        if (store_gain) {
            auto t0 = clock::now();
            std::vector<double> gain = kalman_gain(q_cov, r_cov);
            rec.analysis = analysis_update(rec.forecast, rec.observation, gain);
            rec.correction_seconds = seconds_since(t0);
            double resid = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double acc = rec.forecast[i];
                for (std::size_t j = 0; j < n; ++j)
                    acc += gain[i * n + j] * (rec.observation[j] - rec.forecast[j]);
                resid = std::max(resid, std::fabs(acc - rec.analysis[i]));
            }
            rec.residual = resid;
            rec.gain = std::move(gain);
        } else {
            // analysis = f + Q (Q+R)^{-1} (o - f); one factorization and one
            // right-hand side, never materializing the n x n gain.
            auto t0 = clock::now();
            auto ldlt = factor_innovation(q_cov, r_cov);
            Eigen::VectorXd d(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i)
                d(static_cast<Eigen::Index>(i)) = rec.observation[i] - rec.forecast[i];
            Eigen::VectorXd w = ldlt.solve(d);
            Eigen::VectorXd corr = as_matrix(q_cov) * w;
            rec.analysis.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                rec.analysis[i] =
                    rec.forecast[i] + corr(static_cast<Eigen::Index>(i));
            rec.correction_seconds = seconds_since(t0);

            // Re-apply the correction with an independent summation order to
            // confirm analysis = forecast + Q w.
            double resid = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double acc = rec.forecast[i];
                const double* row = &q_cov.values[i * n];
                for (std::size_t j = 0; j < n; ++j)
                    acc += row[j] * w(static_cast<Eigen::Index>(j));
                resid = std::max(resid, std::fabs(acc - rec.analysis[i]));
            }
            rec.residual = resid;
        }

        rec.mse_forecast_obs = vec_mse(rec.forecast, rec.observation);
        rec.mse_analysis_obs = vec_mse(rec.analysis, rec.observation);
        rec.mse_forecast_phys = rec.mse_forecast_obs;
        rec.mse_analysis_phys = rec.mse_analysis_obs;
        res.records.push_back(std::move(rec));
    }
    finalize_means(res);
    return res;
}

}  // namespace lada::da
