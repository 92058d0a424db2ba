#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lada/rng.hpp"
#include "lada/tensor.hpp"

namespace lada::scene {

// A 2-D scalar field snapshot, row-major [channels, rows, cols]. channels is 1
// for concentration fields and 3 for RGB renderings.
struct Field {
    std::size_t rows = 0, cols = 0, channels = 1;
    std::vector<double> values;

    Field() = default;
    Field(std::size_t r, std::size_t c, std::size_t ch = 1)
        : rows(r), cols(c), channels(ch), values(r * c * ch, 0.0) {}

    double& at(std::size_t r, std::size_t c, std::size_t ch = 0) {
        return values[(ch * rows + r) * cols + c];
    }
    double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
        return values[(ch * rows + r) * cols + c];
    }
    std::size_t numel() const { return values.size(); }
};

enum class VelocityKind { Uniform, Vortex };

// Uniform: constant (vx, vy) everywhere, carried across periodic wrap faces.
// Vortex: a single closed gyre built from a stream function that vanishes on
// the walls (discretely divergence-free), scaled so the fastest face moves at
// `strength`.
struct VelocitySpec {
    VelocityKind kind = VelocityKind::Vortex;
    double vx = 0.0, vy = 0.0;  // uniform only
    double strength = 0.3;      // vortex only
};

enum class Side { Left, Right, Top, Bottom };

// Window cells relax toward ambient: c += coeff * (ambient - c). `from`/`to`
// index along the wall (rows for left/right, cols for top/bottom), half-open.
struct WindowSegment {
    Side side = Side::Left;
    std::size_t from = 0, to = 0;
    double coeff = 0.35;
};

struct SceneConfig {
    std::size_t rows = 45, cols = 62;
    double diffusivity = 0.12;
    VelocitySpec velocity;
    std::vector<WindowSegment> windows;
    double initial_ppm = 1420.0;
    double ambient_ppm = 400.0;
    std::size_t steps = 600;
    std::uint64_t seed = 0;

    static SceneConfig desk_default();

    // Rejects unstable or ill-formed configurations. Grid unit spacing and unit
    // timestep; stability needs diffusivity <= 0.25, per-cell |vx|,|vy| <= 1,
    // and the monotonicity bound 4*D + max_cell(|vx| + |vy|) <= 1.
    void validate() const;
};

// Runs the scene and returns `steps` snapshots of ppm concentration; snapshot 0
// is the initial field. Dynamics: flux-form upwind advection plus flux-form
// diffusion (mass-conserving, discrete maximum principle), then window
// relaxation. All values remain within [ambient_ppm, initial_ppm].
std::vector<Field> simulate(const SceneConfig& cfg);

// One update of an arbitrary field under cfg's dynamics; simulate() iterates
// this from the uniform initial condition.
Field step(const Field& cur, const SceneConfig& cfg);

// Affine map ppm -> [0, 1] with clamping: (v - min) / (max - min).
Field normalize(const Field& ppm, double min_ppm, double max_ppm);

// Piecewise-linear color map over normalized values, per channel between these
// breakpoints: 0 -> (0,0,1), 0.25 -> (0,1,1), 0.5 -> (0,1,0), 0.75 -> (1,1,0),
// 1 -> (1,0,0). Input 1 channel in [0,1]; output 3 channels in [0,1].
Field colormap_rgb(const Field& normalized);

struct SensorSet {
    // (row, col) grid positions; at least 3 and not all collinear.
    std::vector<std::pair<std::size_t, std::size_t>> positions;
    // Square zone of side 2*zone_half_width around each sensor, clamped to the
    // grid; every cell in a zone reports the sensor's reading. Default gives a
    // 10x10 zone.
    std::size_t zone_half_width = 5;
    double noise_std = 0.0;

    static SensorSet desk_default(std::size_t rows, std::size_t cols);
    void validate(std::size_t rows, std::size_t cols) const;
};

// reading_i = field(pos_i) + noise (if noise_std > 0). Deterministic given the
// Rng state.
std::vector<double> sample_sensors(const Field& ppm, const SensorSet& sensors, Rng& rng);

// Builds a full observation field from point readings: sensor zones carry the
// reading verbatim (overlaps resolved by nearest sensor, then lowest index);
// cells inside the convex hull of sensor positions are barycentric-interpolated
// on a triangulation of those positions; cells outside take the nearest
// sensor's reading. The result is normalized with the same affine map as model
// fields.
Field observation_field(const std::vector<double>& readings_ppm, const SensorSet& sensors,
                        std::size_t rows, std::size_t cols, double min_ppm,
                        double max_ppm);

}  // namespace lada::scene
