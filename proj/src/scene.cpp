#include "lada/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lada::scene {

namespace {

// Face-centered velocities with exactly zero discrete divergence per cell, so
// the upwind flux update is a convex combination and the concentration stays
// inside [min, max]. The vortex derives from a stream function that vanishes
// on the walls (one closed gyre, no wall-normal flow); the uniform mode
// advects periodically, wrapping both axes. Diffusion never crosses walls or
// the wrap faces.
struct FaceVelocities {
    std::size_t rows = 0, cols = 0;
    // east[r*cols+c]: through the face toward (r, c+1); c == cols-1 is the
    // wrap toward (r, 0) and stays zero unless `wraps`. south is analogous.
    std::vector<double> east, south;
    bool wraps = false;

    static FaceVelocities build(const VelocitySpec& spec, std::size_t rows,
                                std::size_t cols) {
        FaceVelocities f;
        f.rows = rows;
        f.cols = cols;
        f.east.assign(rows * cols, 0.0);
        f.south.assign(rows * cols, 0.0);
        if (spec.kind == VelocityKind::Uniform) {
            f.wraps = spec.vx != 0.0 || spec.vy != 0.0;
            std::fill(f.east.begin(), f.east.end(), spec.vx);
            std::fill(f.south.begin(), f.south.end(), spec.vy);
            return f;
        }
        // psi on cell corners, exactly zero on the boundary rows/columns.
        std::vector<double> psi((rows + 1) * (cols + 1), 0.0);
        for (std::size_t i = 1; i < rows; ++i)
            for (std::size_t j = 1; j < cols; ++j)
                psi[i * (cols + 1) + j] =
                    std::sin(M_PI * static_cast<double>(i) / static_cast<double>(rows)) *
                    std::sin(M_PI * static_cast<double>(j) / static_cast<double>(cols));
        auto at = [&](std::size_t i, std::size_t j) { return psi[i * (cols + 1) + j]; };
        double peak = 0.0;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                if (c + 1 < cols)
                    f.east[r * cols + c] = at(r + 1, c + 1) - at(r, c + 1);
                if (r + 1 < rows)
                    f.south[r * cols + c] = -(at(r + 1, c + 1) - at(r + 1, c));
                peak = std::max({peak, std::fabs(f.east[r * cols + c]),
                                 std::fabs(f.south[r * cols + c])});
            }
        if (peak > 0.0 && spec.strength != 0.0) {
            double scale = spec.strength / peak;
            for (double& v : f.east) v *= scale;
            for (double& v : f.south) v *= scale;
        } else {
            std::fill(f.east.begin(), f.east.end(), 0.0);
            std::fill(f.south.begin(), f.south.end(), 0.0);
        }
        return f;
    }

    double max_speed() const {
        double m = 0.0;
        for (double v : east) m = std::max(m, std::fabs(v));
        for (double v : south) m = std::max(m, std::fabs(v));
        return m;
    }

    // Largest per-cell sum of outgoing face speeds; the monotonicity guard
    // bounds 4*D plus this by 1.
    double max_outflow() const {
        double m = 0.0;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                double out = std::max(east[r * cols + c], 0.0) +
                             std::max(south[r * cols + c], 0.0);
                if (c > 0 || wraps)
                    out += std::max(-east[r * cols + (c + cols - 1) % cols], 0.0);
                if (r > 0 || wraps)
                    out += std::max(-south[((r + rows - 1) % rows) * cols + c], 0.0);
                m = std::max(m, out);
            }
        return m;
    }
};

}  // namespace

SceneConfig SceneConfig::desk_default() {
    SceneConfig cfg;
    cfg.rows = 45;
    cfg.cols = 62;
    cfg.diffusivity = 0.12;
    cfg.velocity = VelocitySpec{VelocityKind::Vortex, 0.0, 0.0, 0.3};
    cfg.windows = {WindowSegment{Side::Left, 8, 18, 0.35},
                   WindowSegment{Side::Left, 28, 38, 0.35}};
    cfg.initial_ppm = 1420.0;
    cfg.ambient_ppm = 400.0;
    cfg.steps = 600;
    cfg.seed = 0;
    return cfg;
}

void SceneConfig::validate() const {
    require(rows >= 3 && cols >= 3, "scene grid must be at least 3x3");
    require(steps >= 1, "scene needs at least one snapshot");
    require(std::isfinite(diffusivity) && diffusivity >= 0.0,
            "diffusivity must be finite and non-negative");
    require(diffusivity <= 0.25, "diffusivity exceeds the 0.25 stability bound");
    require(initial_ppm > ambient_ppm, "initial ppm must exceed ambient ppm");
    require(ambient_ppm >= 0.0, "ambient ppm must be non-negative");
    for (const auto& w : windows) {
        std::size_t wall = (w.side == Side::Left || w.side == Side::Right) ? rows : cols;
        require(w.from < w.to && w.to <= wall, "window segment outside the wall");
        require(w.coeff > 0.0 && w.coeff <= 1.0, "window coefficient must be in (0, 1]");
    }

    FaceVelocities faces = FaceVelocities::build(velocity, rows, cols);
    require(faces.max_speed() <= 1.0, "velocity exceeds the CFL bound of 1 cell/step");
    require(4.0 * diffusivity + faces.max_outflow() <= 1.0 + 1e-12,
            "4*diffusivity + outgoing speed exceeds 1; update would lose monotonicity");
}

namespace {

void step_into(const Field& cur, Field& next, const FaceVelocities& faces,
               const SceneConfig& cfg) {
    const std::size_t rows = cfg.rows, cols = cfg.cols;
    const double D = cfg.diffusivity;
    next.values = cur.values;
    // x-faces between (r,c) and its eastern neighbour. Fluxes are applied
    // pairwise, so total mass changes only through the windows. Diffusion
    // acts across interior faces; the wrap face (uniform mode) only advects.
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            bool wrap = c + 1 == cols;
            if (wrap && !faces.wraps) continue;
            std::size_t cn = wrap ? 0 : c + 1;
            double u = faces.east[r * cols + c];
            double a = cur.at(r, c), b = cur.at(r, cn);
            double flux = (u >= 0.0 ? u * a : u * b) - (wrap ? 0.0 : D * (b - a));
            next.at(r, c) -= flux;
            next.at(r, cn) += flux;
        }
    }
    // y-faces between (r,c) and its southern neighbour.
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            bool wrap = r + 1 == rows;
            if (wrap && !faces.wraps) continue;
            std::size_t rn = wrap ? 0 : r + 1;
            double v = faces.south[r * cols + c];
            double a = cur.at(r, c), b = cur.at(rn, c);
            double flux = (v >= 0.0 ? v * a : v * b) - (wrap ? 0.0 : D * (b - a));
            next.at(r, c) -= flux;
            next.at(rn, c) += flux;
        }
    }
    for (const auto& wseg : cfg.windows) {
        for (std::size_t i = wseg.from; i < wseg.to; ++i) {
            std::size_t r, c;
            switch (wseg.side) {
                case Side::Left: r = i; c = 0; break;
                case Side::Right: r = i; c = cols - 1; break;
                case Side::Top: r = 0; c = i; break;
                case Side::Bottom: r = rows - 1; c = i; break;
                default: continue;
            }
            next.at(r, c) += wseg.coeff * (cfg.ambient_ppm - next.at(r, c));
        }
    }
}

}  // namespace

std::vector<Field> simulate(const SceneConfig& cfg) {
    cfg.validate();
    const FaceVelocities faces = FaceVelocities::build(cfg.velocity, cfg.rows, cfg.cols);

    Field cur(cfg.rows, cfg.cols);
    for (double& v : cur.values) v = cfg.initial_ppm;

    std::vector<Field> out;
    out.reserve(cfg.steps);
    out.push_back(cur);

    Field next(cfg.rows, cfg.cols);
    for (std::size_t t = 1; t < cfg.steps; ++t) {
        step_into(cur, next, faces, cfg);
        cur.values = next.values;
        out.push_back(cur);
    }
    return out;
}

Field step(const Field& cur, const SceneConfig& cfg) {
    cfg.validate();
    require(cur.channels == 1 && cur.rows == cfg.rows && cur.cols == cfg.cols,
            "field shape disagrees with the scene grid");
    const FaceVelocities faces = FaceVelocities::build(cfg.velocity, cfg.rows, cfg.cols);
    Field next(cfg.rows, cfg.cols);
    step_into(cur, next, faces, cfg);
    return next;
}

Field normalize(const Field& ppm, double min_ppm, double max_ppm) {
    require(max_ppm > min_ppm, "normalization needs max_ppm > min_ppm");
    Field out(ppm.rows, ppm.cols, ppm.channels);
    double scale = 1.0 / (max_ppm - min_ppm);
    for (std::size_t i = 0; i < ppm.values.size(); ++i) {
        double v = (ppm.values[i] - min_ppm) * scale;
        out.values[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

Field colormap_rgb(const Field& normalized) {
    require(normalized.channels == 1, "colormap expects a single-channel field");
    // Breakpoints shared by all channels; see header.
    static constexpr double kStops[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
    static constexpr double kRgb[5][3] = {
        {0, 0, 1}, {0, 1, 1}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}};
    Field out(normalized.rows, normalized.cols, 3);
    for (std::size_t r = 0; r < normalized.rows; ++r) {
        for (std::size_t c = 0; c < normalized.cols; ++c) {
            double v = std::clamp(normalized.at(r, c), 0.0, 1.0);
            std::size_t seg = 0;
            while (seg + 2 < 5 && v > kStops[seg + 1]) ++seg;
            double t = (v - kStops[seg]) / (kStops[seg + 1] - kStops[seg]);
            for (std::size_t ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) = kRgb[seg][ch] + t * (kRgb[seg + 1][ch] - kRgb[seg][ch]);
        }
    }
    return out;
}

SensorSet SensorSet::desk_default(std::size_t rows, std::size_t cols) {
    // Relative positions spread through the room, none collinear as a whole.
    static constexpr double kFrac[7][2] = {{0.2, 0.15}, {0.2, 0.5},  {0.2, 0.85},
                                           {0.55, 0.3}, {0.55, 0.7}, {0.85, 0.2},
                                           {0.85, 0.8}};
    SensorSet s;
    for (const auto& f : kFrac)
        s.positions.emplace_back(
            static_cast<std::size_t>(std::lround(f[0] * static_cast<double>(rows - 1))),
            static_cast<std::size_t>(std::lround(f[1] * static_cast<double>(cols - 1))));
    s.zone_half_width = 2;
    s.noise_std = 0.0;
    return s;
}

void SensorSet::validate(std::size_t rows, std::size_t cols) const {
    require(positions.size() >= 3, "need at least 3 sensors");
    for (const auto& p : positions)
        require(p.first < rows && p.second < cols, "sensor position outside the grid");
    for (std::size_t i = 0; i < positions.size(); ++i)
        for (std::size_t j = i + 1; j < positions.size(); ++j)
            require(positions[i] != positions[j], "duplicate sensor positions");
    bool non_collinear = false;
    for (std::size_t i = 0; i < positions.size() && !non_collinear; ++i)
        for (std::size_t j = i + 1; j < positions.size() && !non_collinear; ++j)
            for (std::size_t k = j + 1; k < positions.size(); ++k) {
                double ax = static_cast<double>(positions[j].second) -
                            static_cast<double>(positions[i].second);
                double ay = static_cast<double>(positions[j].first) -
                            static_cast<double>(positions[i].first);
                double bx = static_cast<double>(positions[k].second) -
                            static_cast<double>(positions[i].second);
                double by = static_cast<double>(positions[k].first) -
                            static_cast<double>(positions[i].first);
                if (std::fabs(ax * by - ay * bx) > 1e-9) {
                    non_collinear = true;
                    break;
                }
            }
    require(non_collinear, "sensors are collinear; interpolation is degenerate");
}

std::vector<double> sample_sensors(const Field& ppm, const SensorSet& sensors, Rng& rng) {
    sensors.validate(ppm.rows, ppm.cols);
    std::vector<double> readings;
    readings.reserve(sensors.positions.size());
    for (const auto& p : sensors.positions) {
        double v = ppm.at(p.first, p.second);
        if (sensors.noise_std > 0.0) v += sensors.noise_std * rng.normal();
        readings.push_back(v);
    }
    return readings;
}

namespace {

struct Tri {
    std::size_t a, b, c;
};

// Brute-force Delaunay: keep every CCW triple whose circumcircle holds no other
// point strictly inside. Adequate for sensor counts in the tens.
std::vector<Tri> triangulate(const std::vector<std::pair<double, double>>& pts) {
    const std::size_t n = pts.size();
    double extent = 1.0;
    for (const auto& p : pts) extent = std::max({extent, std::fabs(p.first), std::fabs(p.second)});
    const double area_tol = 1e-9 * extent * extent;
    const double incircle_tol = 1e-9 * extent * extent * extent * extent;

    std::vector<Tri> tris;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t k = j + 1; k < n; ++k) {
                double ax = pts[i].first, ay = pts[i].second;
                double bx = pts[j].first, by = pts[j].second;
                double cx = pts[k].first, cy = pts[k].second;
                double orient = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
                if (std::fabs(orient) <= area_tol) continue;  // degenerate
                Tri t{i, j, k};
                if (orient < 0.0) {
                    std::swap(t.b, t.c);
                    std::swap(bx, cx);
                    std::swap(by, cy);
                }
                bool empty = true;
                for (std::size_t m = 0; m < n && empty; ++m) {
                    if (m == i || m == j || m == k) continue;
                    double dx = pts[m].first, dy = pts[m].second;
                    double a1 = ax - dx, a2 = ay - dy;
                    double b1 = bx - dx, b2 = by - dy;
                    double c1 = cx - dx, c2 = cy - dy;
                    double det = (a1 * a1 + a2 * a2) * (b1 * c2 - b2 * c1) -
                                 (b1 * b1 + b2 * b2) * (a1 * c2 - a2 * c1) +
                                 (c1 * c1 + c2 * c2) * (a1 * b2 - a2 * b1);
                    if (det > incircle_tol) empty = false;  // strictly inside
                }
                if (empty) tris.push_back(t);
            }
    return tris;
}

}  // namespace

Field observation_field(const std::vector<double>& readings_ppm, const SensorSet& sensors,
                        std::size_t rows, std::size_t cols, double min_ppm,
                        double max_ppm) {
    sensors.validate(rows, cols);
    require(readings_ppm.size() == sensors.positions.size(),
            "reading count does not match sensor count");

    const std::size_t n = sensors.positions.size();
    const long h = static_cast<long>(sensors.zone_half_width);

    // Zone ownership: nearest sensor center wins; ties go to the lower index.
    std::vector<long> owner(rows * cols, -1);
    std::vector<double> owner_d2(rows * cols, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        long pr = static_cast<long>(sensors.positions[s].first);
        long pc = static_cast<long>(sensors.positions[s].second);
        long r0 = std::max(0L, pr - h), r1 = std::min(static_cast<long>(rows), pr + h);
        long c0 = std::max(0L, pc - h), c1 = std::min(static_cast<long>(cols), pc + h);
        for (long r = r0; r < r1; ++r)
            for (long c = c0; c < c1; ++c) {
                double d2 = static_cast<double>((r - pr) * (r - pr) + (c - pc) * (c - pc));
                std::size_t idx = static_cast<std::size_t>(r) * cols +
                                  static_cast<std::size_t>(c);
                if (owner[idx] < 0 || d2 < owner_d2[idx]) {
                    owner[idx] = static_cast<long>(s);
                    owner_d2[idx] = d2;
                }
            }
    }

    std::vector<std::pair<double, double>> pts;
    pts.reserve(n);
    for (const auto& p : sensors.positions)
        pts.emplace_back(static_cast<double>(p.second), static_cast<double>(p.first));
    std::vector<Tri> tris = triangulate(pts);

    Field out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            std::size_t idx = r * cols + c;
            if (owner[idx] >= 0) {
                out.at(r, c) = readings_ppm[static_cast<std::size_t>(owner[idx])];
                continue;
            }
            double px = static_cast<double>(c), py = static_cast<double>(r);
            bool found = false;
            for (const Tri& t : tris) {
                double ax = pts[t.a].first, ay = pts[t.a].second;
                double bx = pts[t.b].first, by = pts[t.b].second;
                double cx = pts[t.c].first, cy = pts[t.c].second;
                double denom = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy);
                if (denom == 0.0) continue;
                double la = ((by - cy) * (px - cx) + (cx - bx) * (py - cy)) / denom;
                double lb = ((cy - ay) * (px - cx) + (ax - cx) * (py - cy)) / denom;
                double lc = 1.0 - la - lb;
                const double eps = 1e-9;
                if (la >= -eps && lb >= -eps && lc >= -eps) {
                    out.at(r, c) = la * readings_ppm[t.a] + lb * readings_ppm[t.b] +
                                   lc * readings_ppm[t.c];
                    found = true;
                    break;
                }
            }
            if (!found) {
                // Outside the hull: nearest sensor, ties to the lower index.
                double best = std::numeric_limits<double>::infinity();
                std::size_t who = 0;
                for (std::size_t s = 0; s < n; ++s) {
                    double dx = px - pts[s].first, dy = py - pts[s].second;
                    double d2 = dx * dx + dy * dy;
                    if (d2 < best) {
                        best = d2;
                        who = s;
                    }
                }
                out.at(r, c) = readings_ppm[who];
            }
        }
    }
    return normalize(out, min_ppm, max_ppm);
}

}  // namespace lada::scene
