#pragma once

#include <cstddef>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldlmoe {

/// Dense row-major tensor of doubles. `node` is the tape handle assigned
/// when the tensor participates in a recorded forward pass (-1 = constant).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    int node = -1;

    Tensor() = default;

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape))
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto v : s) n *= v;
        return n;
    }

    static std::string shape_str(const std::vector<std::size_t>& s) {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << ")";
        return os.str();
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        auto n = count(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<std::size_t> s, double v) {
        auto n = count(s);
        return Tensor(std::move(s), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vec(std::vector<double> d) {
        auto n = d.size();
        return Tensor({n}, std::move(d));
    }

    /// Uniform init on [-scale, scale], deterministic per rng state.
    static Tensor uniform(std::vector<std::size_t> s, double scale, std::mt19937_64& rng) {
        auto n = count(s);
        std::vector<double> d(n);
        std::uniform_real_distribution<double> u(-scale, scale);
        for (auto& v : d) v = u(rng);
        return Tensor(std::move(s), std::move(d));
    }

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    Tensor::shape_str(a.shape) + " vs " + Tensor::shape_str(b.shape));
}

}  // namespace ldlmoe
