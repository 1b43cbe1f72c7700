#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldlmoe/tensor.hpp"

namespace ldlmoe {

/// Named parameter registry. Models allocate parameters here so the trainer,
/// optimizer and checkpoint code see one flat, deterministically ordered list.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> values;

    std::size_t add(std::string name, std::vector<std::size_t> shape, double scale, std::mt19937_64& rng) {
        names.push_back(std::move(name));
        values.push_back(Tensor::uniform(std::move(shape), scale, rng));
        return values.size() - 1;
    }

    std::size_t add_zeros(std::string name, std::vector<std::size_t> shape) {
        names.push_back(std::move(name));
        values.push_back(Tensor::zeros(std::move(shape)));
        return values.size() - 1;
    }

    std::size_t size() const { return values.size(); }
};

/// Adam with bias correction (Kingma & Ba).
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamSet& params, const std::vector<std::vector<double>>& grads) {
        if (grads.size() != params.size())
            throw std::invalid_argument("Adam::step: gradient count mismatch");
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(params.values[i].size(), 0.0);
                v_[i].assign(params.values[i].size(), 0.0);
            }
        }
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params.values[i].data;
            const auto& g = grads[i];
            if (g.size() != p.size())
                throw std::invalid_argument("Adam::step: shape mismatch for " + params.names[i]);
            for (std::size_t j = 0; j < p.size(); ++j) {
                m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
                v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
                double mhat = m_[i][j] / bc1;
                double vhat = v_[i][j] / bc2;
                p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    double lr() const { return lr_; }
    long step_count() const { return t_; }
    const std::vector<std::vector<double>>& m() const { return m_; }
    const std::vector<std::vector<double>>& v() const { return v_; }

    void restore_state(long t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
        t_ = t;
        m_ = std::move(m);
        v_ = std::move(v);
    }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Global-norm gradient clipping.
inline void clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm) {
    double sq = 0;
    for (const auto& g : grads)
        for (double v : g) sq += v * v;
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        double s = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g) v *= s;
    }
}

}  // namespace ldlmoe
