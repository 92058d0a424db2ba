#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lada {

// Invalid shapes, malformed configs, bad file contents. CLI maps this to exit 2.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Divergence, singular systems, non-finite values. CLI maps this to exit 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major tensor of f64. Rank is dynamic; all layout math is explicit
// at call sites so there is no stride bookkeeping to get wrong.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(count(shape), 0.0);
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // 3-D accessor, shape [d0, d1, d2].
    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    // 2-D accessor, shape [d0, d1].
    double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (double& x : data) x = v;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i)
            os << (i ? ", " : "") << shape[i];
        os << ']';
        return os.str();
    }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ConfigError(std::string(what) + ": shape mismatch " + a.shape_str() +
                          " vs " + b.shape_str());
}

}  // namespace lada
