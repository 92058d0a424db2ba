#include "lada/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lada::harness {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
}

scene::Side side_from_string(const std::string& s) {
    if (s == "left") return scene::Side::Left;
    if (s == "right") return scene::Side::Right;
    if (s == "top") return scene::Side::Top;
    if (s == "bottom") return scene::Side::Bottom;
    throw ConfigError("unknown window side '" + s + "'");
}

const char* to_string(scene::Side s) {
    switch (s) {
        case scene::Side::Left: return "left";
        case scene::Side::Right: return "right";
        case scene::Side::Top: return "top";
        case scene::Side::Bottom: return "bottom";
    }
    return "?";
}

da::RMode r_mode_from_json(const json& j) {
    da::RMode m;
    if (j.is_string()) {
        require(j.get<std::string>() == "sample",
                "R mode must be \"sample\" or a positive sigma value");
        m.kind = da::RMode::Kind::Sample;
        m.sigma = 0.0;
    } else if (j.is_number()) {
        m.kind = da::RMode::Kind::ScaledIdentity;
        m.sigma = j.get<double>();
        require(m.sigma > 0.0, "sigma for an R mode must be positive");
    } else {
        throw ConfigError("R mode must be \"sample\" or a number");
    }
    return m;
}

json r_mode_to_json(const da::RMode& m) {
    if (m.kind == da::RMode::Kind::Sample) return json("sample");
    return json(m.sigma);
}

void parse_train(const json& j, TrainOptions& t, const char* where) {
    check_keys(j,
               {"epochs", "batch", "learning_rate", "early_stop_val_mse", "min_epochs"},
               where);
    if (j.contains("epochs")) t.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("batch")) t.batch = j.at("batch").get<std::size_t>();
    if (j.contains("learning_rate")) t.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("early_stop_val_mse"))
        t.early_stop_val_mse = j.at("early_stop_val_mse").get<double>();
    if (j.contains("min_epochs")) t.min_epochs = j.at("min_epochs").get<std::size_t>();
}

json train_to_json(const TrainOptions& t) {
    return json{{"epochs", t.epochs},
                {"batch", t.batch},
                {"learning_rate", t.learning_rate},
                {"early_stop_val_mse", t.early_stop_val_mse},
                {"min_epochs", t.min_epochs}};
}

}  // namespace

ExperimentConfig ExperimentConfig::desk_default() {
    ExperimentConfig cfg;
    cfg.scene = scene::SceneConfig::desk_default();
    cfg.sensors = scene::SensorSet::desk_default(cfg.scene.rows, cfg.scene.cols);
    cfg.observation_timesteps = {45, 100, 155, 210, 265, 320, 375, 430, 485, 540};

    cfg.cae.arch.input_rows = cfg.scene.rows;
    cfg.cae.arch.input_cols = cfg.scene.cols;
    cfg.cae.train.epochs = 60;
    cfg.cae.train.batch = 16;
    cfg.cae.train.learning_rate = 1e-3;
    cfg.cae.train.early_stop_val_mse = 8e-4;
    cfg.cae.train.min_epochs = 5;

    cfg.lstm.model.latent_dim = cfg.cae.arch.latent_dim;
    cfg.lstm.train.epochs = 100;
    cfg.lstm.train.batch = 16;
    cfg.lstm.train.learning_rate = 1e-3;
    cfg.lstm.train.early_stop_val_mse = 0.0;

    cfg.assimilation.r_modes = {da::RMode{da::RMode::Kind::Sample, 0.0},
                                da::RMode{da::RMode::Kind::ScaledIdentity, 0.01},
                                da::RMode{da::RMode::Kind::ScaledIdentity, 0.001},
                                da::RMode{da::RMode::Kind::ScaledIdentity, 0.0001}};
    cfg.assimilation.triptych_mode = "sigma_0.0001";

    cfg.baseline.enabled = true;
    cfg.baseline.background_cap = 32;
    cfg.baseline.r_mode = da::RMode{da::RMode::Kind::ScaledIdentity, 0.0001};
    return cfg;
}

void ExperimentConfig::validate() const {
    require(threads >= 1, "threads must be at least 1");
    scene.validate();
    sensors.validate(scene.rows, scene.cols);
    require(!observation_timesteps.empty(), "needs at least one observation timestep");
    for (std::size_t t : observation_timesteps)
        require(t < scene.steps, "observation timestep beyond the simulated range");
    require(split_jump >= 1, "split jump must be at least 1");

    cae::CaeArchitecture arch = cae.arch;
    require(arch.input_rows == scene.rows && arch.input_cols == scene.cols,
            "autoencoder input shape must match the scene grid");
    arch.validate();
    lstm.model.validate();
    require(lstm.model.latent_dim == cae.arch.latent_dim,
            "surrogate latent dimension must match the autoencoder");
    require(!assimilation.r_modes.empty(), "needs at least one R mode");
    require(assimilation.background_set == "val" || assimilation.background_set == "train",
            "background_set must be \"val\" or \"train\"");
    bool triptych_found = false;
    for (const auto& m : assimilation.r_modes)
        if (m.label() == assimilation.triptych_mode) triptych_found = true;
    require(triptych_found, "triptych_mode does not match any configured R mode");
    require(baseline.background_cap >= 2, "baseline background cap must be at least 2");
    require(!sweep.latent_sizes.empty(), "sweep needs at least one latent size");
}

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg = ExperimentConfig::desk_default();
    check_keys(j,
               {"seed", "threads", "out_dir", "scene", "sensors", "observation_timesteps",
                "split", "cae", "lstm", "assimilation", "baseline", "gridsearch_ae",
                "gridsearch_lstm", "sweep"},
               "config root");

    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<std::size_t>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();

    if (j.contains("scene")) {
        const json& s = j.at("scene");
        check_keys(s,
                   {"rows", "cols", "diffusivity", "velocity", "windows", "initial_ppm",
                    "ambient_ppm", "steps", "seed"},
                   "scene");
        auto& sc = cfg.scene;
        if (s.contains("rows")) sc.rows = s.at("rows").get<std::size_t>();
        if (s.contains("cols")) sc.cols = s.at("cols").get<std::size_t>();
        if (s.contains("diffusivity")) sc.diffusivity = s.at("diffusivity").get<double>();
        if (s.contains("initial_ppm")) sc.initial_ppm = s.at("initial_ppm").get<double>();
        if (s.contains("ambient_ppm")) sc.ambient_ppm = s.at("ambient_ppm").get<double>();
        if (s.contains("steps")) sc.steps = s.at("steps").get<std::size_t>();
        if (s.contains("seed")) sc.seed = s.at("seed").get<std::uint64_t>();
        if (s.contains("velocity")) {
            const json& v = s.at("velocity");
            check_keys(v, {"kind", "vx", "vy", "strength"}, "scene.velocity");
            std::string kind = v.value("kind", "vortex");
            if (kind == "uniform") {
                sc.velocity.kind = scene::VelocityKind::Uniform;
                sc.velocity.vx = v.value("vx", 0.0);
                sc.velocity.vy = v.value("vy", 0.0);
            } else if (kind == "vortex") {
                sc.velocity.kind = scene::VelocityKind::Vortex;
                sc.velocity.strength = v.value("strength", 0.3);
            } else {
                throw ConfigError("unknown velocity kind '" + kind + "'");
            }
        }
        if (s.contains("windows")) {
            sc.windows.clear();
            for (const json& w : s.at("windows")) {
                check_keys(w, {"side", "from", "to", "coeff"}, "scene.windows[]");
                scene::WindowSegment seg;
                seg.side = side_from_string(w.at("side").get<std::string>());
                seg.from = w.at("from").get<std::size_t>();
                seg.to = w.at("to").get<std::size_t>();
                seg.coeff = w.value("coeff", 0.35);
                sc.windows.push_back(seg);
            }
        }
        // Grid-dependent defaults follow the (possibly resized) scene.
        cfg.sensors = scene::SensorSet::desk_default(sc.rows, sc.cols);
        cfg.cae.arch.input_rows = sc.rows;
        cfg.cae.arch.input_cols = sc.cols;
    }

    if (j.contains("sensors")) {
        const json& s = j.at("sensors");
        check_keys(s, {"positions", "zone_half_width", "noise_std"}, "sensors");
        if (s.contains("positions")) {
            cfg.sensors.positions.clear();
            for (const json& p : s.at("positions")) {
                require(p.is_array() && p.size() == 2, "sensor position must be [row, col]");
                cfg.sensors.positions.emplace_back(p.at(0).get<std::size_t>(),
                                                   p.at(1).get<std::size_t>());
            }
        }
        if (s.contains("zone_half_width"))
            cfg.sensors.zone_half_width = s.at("zone_half_width").get<std::size_t>();
        if (s.contains("noise_std")) cfg.sensors.noise_std = s.at("noise_std").get<double>();
    }

    if (j.contains("observation_timesteps"))
        cfg.observation_timesteps =
            j.at("observation_timesteps").get<std::vector<std::size_t>>();

    if (j.contains("split")) {
        check_keys(j.at("split"), {"jump"}, "split");
        if (j.at("split").contains("jump"))
            cfg.split_jump = j.at("split").at("jump").get<std::size_t>();
    }

    if (j.contains("cae")) {
        const json& c = j.at("cae");
        check_keys(c,
                   {"layers", "filters", "kernel", "conv_activation", "latent_dim",
                    "latent_activation", "train"},
                   "cae");
        auto& a = cfg.cae.arch;
        if (c.contains("layers")) a.layers = c.at("layers").get<std::size_t>();
        if (c.contains("filters")) a.filters = c.at("filters").get<std::size_t>();
        if (c.contains("kernel")) a.kernel = c.at("kernel").get<std::size_t>();
        if (c.contains("conv_activation"))
            a.conv_activation =
                activation_from_string(c.at("conv_activation").get<std::string>());
        if (c.contains("latent_dim")) a.latent_dim = c.at("latent_dim").get<std::size_t>();
        if (c.contains("latent_activation"))
            a.latent_activation =
                activation_from_string(c.at("latent_activation").get<std::string>());
        if (c.contains("train")) parse_train(c.at("train"), cfg.cae.train, "cae.train");
        cfg.lstm.model.latent_dim = a.latent_dim;
    }

    if (j.contains("lstm")) {
        const json& l = j.at("lstm");
        check_keys(l, {"hidden", "lookback", "projection_activation", "train"}, "lstm");
        if (l.contains("hidden")) cfg.lstm.model.hidden = l.at("hidden").get<std::size_t>();
        if (l.contains("lookback"))
            cfg.lstm.model.lookback = l.at("lookback").get<std::size_t>();
        if (l.contains("projection_activation"))
            cfg.lstm.model.projection_activation =
                activation_from_string(l.at("projection_activation").get<std::string>());
        if (l.contains("train")) parse_train(l.at("train"), cfg.lstm.train, "lstm.train");
    }

    if (j.contains("assimilation")) {
        const json& a = j.at("assimilation");
        check_keys(a, {"r_modes", "normalize_covariance", "background_set", "triptych_mode"},
                   "assimilation");
        if (a.contains("r_modes")) {
            cfg.assimilation.r_modes.clear();
            for (const json& m : a.at("r_modes"))
                cfg.assimilation.r_modes.push_back(r_mode_from_json(m));
        }
        if (a.contains("normalize_covariance"))
            cfg.assimilation.normalize_covariance =
                a.at("normalize_covariance").get<bool>();
        if (a.contains("background_set"))
            cfg.assimilation.background_set = a.at("background_set").get<std::string>();
        if (a.contains("triptych_mode"))
            cfg.assimilation.triptych_mode = a.at("triptych_mode").get<std::string>();
    }

    if (j.contains("baseline")) {
        const json& b = j.at("baseline");
        check_keys(b, {"enabled", "background_cap", "r_mode", "gain_storage_cap"},
                   "baseline");
        if (b.contains("enabled")) cfg.baseline.enabled = b.at("enabled").get<bool>();
        if (b.contains("background_cap"))
            cfg.baseline.background_cap = b.at("background_cap").get<std::size_t>();
        if (b.contains("r_mode")) cfg.baseline.r_mode = r_mode_from_json(b.at("r_mode"));
        if (b.contains("gain_storage_cap"))
            cfg.baseline.gain_storage_cap = b.at("gain_storage_cap").get<std::size_t>();
    }

    auto parse_acts = [](const json& arr) {
        std::vector<Activation> acts;
        for (const json& a : arr) acts.push_back(activation_from_string(a.get<std::string>()));
        return acts;
    };

    if (j.contains("gridsearch_ae")) {
        const json& g = j.at("gridsearch_ae");
        check_keys(g, {"filters", "activations", "epochs", "batches", "k", "repeats"},
                   "gridsearch_ae");
        auto& gs = cfg.gridsearch_ae;
        if (g.contains("filters")) gs.filters = g.at("filters").get<std::vector<std::size_t>>();
        if (g.contains("activations")) gs.activations = parse_acts(g.at("activations"));
        if (g.contains("epochs")) gs.epochs = g.at("epochs").get<std::vector<std::size_t>>();
        if (g.contains("batches")) gs.batches = g.at("batches").get<std::vector<std::size_t>>();
        if (g.contains("k")) gs.k = g.at("k").get<std::size_t>();
        if (g.contains("repeats")) gs.repeats = g.at("repeats").get<std::size_t>();
    }

    if (j.contains("gridsearch_lstm")) {
        const json& g = j.at("gridsearch_lstm");
        check_keys(g, {"neurons", "activations", "lookbacks", "epochs", "batches", "repeats"},
                   "gridsearch_lstm");
        auto& gs = cfg.gridsearch_lstm;
        if (g.contains("neurons")) gs.neurons = g.at("neurons").get<std::vector<std::size_t>>();
        if (g.contains("activations")) gs.activations = parse_acts(g.at("activations"));
        if (g.contains("lookbacks"))
            gs.lookbacks = g.at("lookbacks").get<std::vector<std::size_t>>();
        if (g.contains("epochs")) gs.epochs = g.at("epochs").get<std::vector<std::size_t>>();
        if (g.contains("batches")) gs.batches = g.at("batches").get<std::vector<std::size_t>>();
        if (g.contains("repeats")) gs.repeats = g.at("repeats").get<std::size_t>();
    }

    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        check_keys(s, {"latent_sizes", "cae_epochs", "lstm_epochs"}, "sweep");
        if (s.contains("latent_sizes"))
            cfg.sweep.latent_sizes = s.at("latent_sizes").get<std::vector<std::size_t>>();
        if (s.contains("cae_epochs"))
            cfg.sweep.cae_epochs = s.at("cae_epochs").get<std::size_t>();
        if (s.contains("lstm_epochs"))
            cfg.sweep.lstm_epochs = s.at("lstm_epochs").get<std::size_t>();
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig config_from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return config_from_json_text(buf.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
    json windows = json::array();
    for (const auto& w : cfg.scene.windows)
        windows.push_back({{"side", to_string(w.side)},
                           {"from", w.from},
                           {"to", w.to},
                           {"coeff", w.coeff}});
    json velocity;
    if (cfg.scene.velocity.kind == scene::VelocityKind::Uniform)
        velocity = {{"kind", "uniform"}, {"vx", cfg.scene.velocity.vx},
                    {"vy", cfg.scene.velocity.vy}};
    else
        velocity = {{"kind", "vortex"}, {"strength", cfg.scene.velocity.strength}};

    json positions = json::array();
    for (const auto& p : cfg.sensors.positions)
        positions.push_back({p.first, p.second});

    json r_modes = json::array();
    for (const auto& m : cfg.assimilation.r_modes) r_modes.push_back(r_mode_to_json(m));

    auto acts_to_json = [](const std::vector<Activation>& acts) {
        json arr = json::array();
        for (Activation a : acts) arr.push_back(to_string(a));
        return arr;
    };

    json j{
        {"seed", cfg.seed},
        {"threads", cfg.threads},
        {"out_dir", cfg.out_dir},
        {"scene",
         {{"rows", cfg.scene.rows},
          {"cols", cfg.scene.cols},
          {"diffusivity", cfg.scene.diffusivity},
          {"velocity", velocity},
          {"windows", windows},
          {"initial_ppm", cfg.scene.initial_ppm},
          {"ambient_ppm", cfg.scene.ambient_ppm},
          {"steps", cfg.scene.steps},
          {"seed", cfg.scene.seed}}},
        {"sensors",
         {{"positions", positions},
          {"zone_half_width", cfg.sensors.zone_half_width},
          {"noise_std", cfg.sensors.noise_std}}},
        {"observation_timesteps", cfg.observation_timesteps},
        {"split", {{"jump", cfg.split_jump}}},
        {"cae",
         {{"layers", cfg.cae.arch.layers},
          {"filters", cfg.cae.arch.filters},
          {"kernel", cfg.cae.arch.kernel},
          {"conv_activation", to_string(cfg.cae.arch.conv_activation)},
          {"latent_dim", cfg.cae.arch.latent_dim},
          {"latent_activation", to_string(cfg.cae.arch.latent_activation)},
          {"train", train_to_json(cfg.cae.train)}}},
        {"lstm",
         {{"hidden", cfg.lstm.model.hidden},
          {"lookback", cfg.lstm.model.lookback},
          {"projection_activation", to_string(cfg.lstm.model.projection_activation)},
          {"train", train_to_json(cfg.lstm.train)}}},
        {"assimilation",
         {{"r_modes", r_modes},
          {"normalize_covariance", cfg.assimilation.normalize_covariance},
          {"background_set", cfg.assimilation.background_set},
          {"triptych_mode", cfg.assimilation.triptych_mode}}},
        {"baseline",
         {{"enabled", cfg.baseline.enabled},
          {"background_cap", cfg.baseline.background_cap},
          {"r_mode", r_mode_to_json(cfg.baseline.r_mode)},
          {"gain_storage_cap", cfg.baseline.gain_storage_cap}}},
        {"gridsearch_ae",
         {{"filters", cfg.gridsearch_ae.filters},
          {"activations", acts_to_json(cfg.gridsearch_ae.activations)},
          {"epochs", cfg.gridsearch_ae.epochs},
          {"batches", cfg.gridsearch_ae.batches},
          {"k", cfg.gridsearch_ae.k},
          {"repeats", cfg.gridsearch_ae.repeats}}},
        {"gridsearch_lstm",
         {{"neurons", cfg.gridsearch_lstm.neurons},
          {"activations", acts_to_json(cfg.gridsearch_lstm.activations)},
          {"lookbacks", cfg.gridsearch_lstm.lookbacks},
          {"epochs", cfg.gridsearch_lstm.epochs},
          {"batches", cfg.gridsearch_lstm.batches},
          {"repeats", cfg.gridsearch_lstm.repeats}}},
        {"sweep",
         {{"latent_sizes", cfg.sweep.latent_sizes},
          {"cae_epochs", cfg.sweep.cae_epochs},
          {"lstm_epochs", cfg.sweep.lstm_epochs}}},
    };
    return j.dump(2) + "\n";
}

}  // namespace lada::harness
