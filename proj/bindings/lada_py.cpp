#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lada/harness.hpp"

namespace py = pybind11;
using namespace lada;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

scene::Field field_from_array(const DArray& a) {
    require(a.ndim() == 2, "expected a 2-D array");
    scene::Field f;
    f.rows = static_cast<std::size_t>(a.shape(0));
    f.cols = static_cast<std::size_t>(a.shape(1));
    f.channels = 1;
    f.values.assign(a.data(), a.data() + f.rows * f.cols);
    return f;
}

py::array_t<double> field_to_array(const scene::Field& f) {
    require(f.channels == 1, "multi-channel fields are not exposed");
    py::array_t<double> a({f.rows, f.cols});
    std::copy(f.values.begin(), f.values.end(), a.mutable_data());
    return a;
}

da::Covariance cov_from_array(const DArray& a) {
    require(a.ndim() == 2 && a.shape(0) == a.shape(1), "expected a square matrix");
    da::Covariance c(static_cast<std::size_t>(a.shape(0)));
    std::copy(a.data(), a.data() + c.dim * c.dim, c.values.begin());
    return c;
}

py::array_t<double> matrix_to_array(const std::vector<double>& m, std::size_t dim) {
    py::array_t<double> a({dim, dim});
    std::copy(m.begin(), m.end(), a.mutable_data());
    return a;
}

harness::ExperimentConfig config_from_arg(const std::string& config_json) {
    return config_json.empty() ? harness::ExperimentConfig::desk_default()
                               : harness::config_from_json_text(config_json);
}

py::dict assim_summary(const da::AssimResult& res) {
    py::dict d;
    d["records"] = res.records.size();
    d["latent_mse_no_da"] = res.mean_mse_forecast_obs;
    d["latent_mse_analysis"] = res.mean_mse_analysis_obs;
    d["physical_mse_forecast"] = res.mean_mse_forecast_phys;
    d["physical_mse_analysis"] = res.mean_mse_analysis_phys;
    d["mean_correction_seconds"] = res.mean_correction_seconds;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Latent-space data assimilation: scene simulation, dataset splitting, "
              "Kalman arithmetic and the full experiment pipeline.";

    py::register_exception<ConfigError>(m, "ConfigurationError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalFailure", PyExc_ArithmeticError);

    m.def("default_config", [] {
        return harness::config_to_json_text(harness::ExperimentConfig::desk_default());
    });

    m.def(
        "simulate",
        [](const std::string& config_json) {
            harness::ExperimentConfig cfg = config_from_arg(config_json);
            cfg.validate();
            std::vector<scene::Field> fields;
            {
                py::gil_scoped_release release;
                fields = scene::simulate(cfg.scene);
            }
            py::array_t<double> out({fields.size(), cfg.scene.rows, cfg.scene.cols});
            double* dst = out.mutable_data();
            for (const auto& f : fields)
                dst = std::copy(f.values.begin(), f.values.end(), dst);
            return out;
        },
        py::arg("config_json") = std::string(),
        "Advect/diffuse the scene; returns raw concentrations [steps, rows, cols].");

    m.def(
        "split",
        [](std::size_t total, std::size_t jump, const std::vector<std::size_t>& obs) {
            dataset::SplitAssignment s = dataset::split(total, jump, obs);
            py::dict d;
            d["train"] = s.train;
            d["val"] = s.val;
            d["test"] = s.test;
            return d;
        },
        py::arg("total"), py::arg("jump"), py::arg("observation_timesteps"));

    m.def(
        "sample_covariance",
        [](const DArray& samples, bool normalize) {
            require(samples.ndim() == 2, "expected samples as a 2-D array [s, p]");
            std::vector<std::vector<double>> rows(static_cast<std::size_t>(samples.shape(0)));
            std::size_t p = static_cast<std::size_t>(samples.shape(1));
            for (std::size_t i = 0; i < rows.size(); ++i)
                rows[i].assign(samples.data() + i * p, samples.data() + (i + 1) * p);
            da::Covariance c = da::sample_covariance(rows, normalize);
            return matrix_to_array(c.values, c.dim);
        },
        py::arg("samples"), py::arg("normalize") = false);

    m.def(
        "kalman_gain",
        [](const DArray& q, const DArray& r) {
            da::Covariance cq = cov_from_array(q), cr = cov_from_array(r);
            require(cq.dim == cr.dim, "Q and R dimensions differ");
            return matrix_to_array(da::kalman_gain(cq, cr), cq.dim);
        },
        py::arg("q"), py::arg("r"));

    m.def(
        "analysis_update",
        [](const std::vector<double>& forecast, const std::vector<double>& observation,
           const DArray& gain) {
            require(gain.ndim() == 2, "gain must be a matrix");
            std::vector<double> k(gain.data(), gain.data() + gain.size());
            return da::analysis_update(forecast, observation, k);
        },
        py::arg("forecast"), py::arg("observation"), py::arg("gain"));

    py::class_<cae::CaeModel>(m, "Autoencoder")
        .def_static("load", [](const std::string& path) { return cae::load_model(path); },
                    py::arg("path"))
        .def_property_readonly("latent_dim",
                               [](const cae::CaeModel& mdl) { return mdl.arch.latent_dim; })
        .def("encode",
             [](const cae::CaeModel& mdl, const DArray& field) {
                 return cae::encode(mdl, field_from_array(field));
             },
             py::arg("field"))
        .def("decode",
             [](const cae::CaeModel& mdl, const std::vector<double>& latent) {
                 return field_to_array(cae::decode(mdl, latent));
             },
             py::arg("latent"));

    py::class_<lstm::LstmModel>(m, "Surrogate")
        .def_static("load", [](const std::string& path) { return lstm::load_model(path); },
                    py::arg("path"))
        .def_property_readonly("lookback",
                               [](const lstm::LstmModel& mdl) { return mdl.config.lookback; })
        .def("forecast",
             [](const lstm::LstmModel& mdl, const std::vector<std::vector<double>>& window) {
                 return lstm::forecast(mdl, window);
             },
             py::arg("window"));

    m.def(
        "run_pipeline",
        [](const std::string& config_json) {
            harness::ExperimentConfig cfg = config_from_arg(config_json);
            cfg.validate();
            harness::PipelineResult res = [&] {
                py::gil_scoped_release release;
                return harness::run_full_pipeline(cfg);
            }();
            py::dict d;
            d["out_dir"] = res.out_dir;
            d["train_size"] = res.split.train.size();
            d["val_size"] = res.split.val.size();
            d["test_size"] = res.split.test.size();
            d["cae_final_val_mse"] =
                res.cae_train.reports.empty() ? 0.0 : res.cae_train.reports.back().val.mse;
            d["lstm_val_mse"] = res.lstm_val_mse;
            d["lstm_persistence_val_mse"] = res.lstm_persistence_val_mse;
            py::dict la;
            for (const auto& [label, r] : res.la_results) la[label.c_str()] = assim_summary(r);
            d["latent_assimilation"] = la;
            if (res.sda_result) d["full_space"] = assim_summary(*res.sda_result);
            py::dict stages;
            for (const auto& [stage, secs] : res.stage_seconds) stages[stage.c_str()] = secs;
            d["stage_seconds"] = stages;
            return d;
        },
        py::arg("config_json") = std::string(),
        "Run scene generation, training, and both assimilation paths; returns a summary "
        "and writes every artifact to the configured output directory.");
}
