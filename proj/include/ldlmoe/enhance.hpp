#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ldlmoe/kdtree.hpp"

namespace ldlmoe {

/// Settings for label distribution enhancement.
struct EnhanceConfig {
    std::size_t k_neighbors = 5;
    double kernel_sigma = 1.0;   // Gaussian kernel width for cross-series weights
    std::size_t max_lag = 40;    // ACF search range for period detection
    std::size_t base_window = 8; // sliding window for the base variance
    double lambda_reg = 1.0;     // graph smoothing strength
    double acf_threshold = 0.3;  // minimum ACF value to accept a period
    std::size_t n_bins = 10;     // discrete variant
    double bin_low = -5.0, bin_high = 5.0;
};

constexpr double kVarianceFloor = 1e-6;

/// Weighted graph over time steps; L = D - A.
struct AdjacencyGraph {
    std::size_t n = 0;
    std::vector<double> weights;  // n*n symmetric, zero diagonal
    std::vector<double> degree;

    double& at(std::size_t i, std::size_t j) { return weights[i * n + j]; }
    double at(std::size_t i, std::size_t j) const { return weights[i * n + j]; }

    static AdjacencyGraph empty(std::size_t n) {
        return AdjacencyGraph{n, std::vector<double>(n * n, 0.0), std::vector<double>(n, 0.0)};
    }

    void add_edge(std::size_t i, std::size_t j, double w) {
        if (i == j || w <= 0) return;
        at(i, j) = std::max(at(i, j), w);
        at(j, i) = at(i, j);
    }

    void finalize_degrees() {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < n; ++j) s += at(i, j);
            degree[i] = s;
        }
    }

    /// y = L x with L = D - A.
    std::vector<double> laplacian_apply(const std::vector<double>& x) const {
        std::vector<double> y(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double s = degree[i] * x[i];
            for (std::size_t j = 0; j < n; ++j) s -= at(i, j) * x[j];
            y[i] = s;
        }
        return y;
    }

    double dirichlet_energy(const std::vector<double>& x) const {
        auto lx = laplacian_apply(x);
        double e = 0;
        for (std::size_t i = 0; i < n; ++i) e += x[i] * lx[i];
        return e;
    }
};

struct EnhancedTarget {
    double mean = 0;
    double variance = kVarianceFloor;
    std::optional<std::vector<double>> categorical;
};

/// Symmetric Gaussian-kernel KNN weights over a batch of flattened windows.
/// Neighbor search is an exact KD-tree; each row has k_neighbors nonzero
/// entries before max-symmetrization.
inline std::vector<double> knn_weights(const std::vector<std::vector<double>>& batch,
                                       const EnhanceConfig& cfg) {
    std::size_t B = batch.size();
    if (B < 2) throw std::invalid_argument("knn_weights: batch size must be >= 2");
    if (cfg.k_neighbors == 0 || cfg.k_neighbors >= B)
        throw std::invalid_argument("knn_weights: k_neighbors must be in [1, B-1]");
    if (cfg.kernel_sigma <= 0) throw std::invalid_argument("knn_weights: kernel_sigma must be > 0");
    KdTree tree(batch);
    std::vector<double> W(B * B, 0.0);
    double denom = 2.0 * cfg.kernel_sigma * cfg.kernel_sigma;
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j : tree.knn(batch[i], cfg.k_neighbors, i)) {
            double d2 = KdTree::dist2(batch[i], batch[j]);
            W[i * B + j] = std::exp(-d2 / denom);
        }
    }
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = i + 1; j < B; ++j) {
            double w = std::max(W[i * B + j], W[j * B + i]);
            W[i * B + j] = W[j * B + i] = w;
        }
    return W;
}

struct PeriodInfo {
    std::size_t period;
    double acf;  // rho(period)
};

/// Centered, variance-normalized autocorrelation at lag tau.
inline double autocorrelation(const std::vector<double>& x, std::size_t tau) {
    std::size_t T = x.size();
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(T);
    double denom = 0;
    for (double v : x) denom += (v - mean) * (v - mean);
    if (denom == 0) throw std::invalid_argument("autocorrelation: constant series");
    double num = 0;
    for (std::size_t t = tau; t < T; ++t) num += (x[t] - mean) * (x[t - tau] - mean);
    return num / denom;
}

/// Dominant period: argmax of the ACF over lags [2, max_lag], ties toward
/// the smaller lag. Throws on a constant series.
inline PeriodInfo detect_period(const std::vector<double>& series, std::size_t max_lag) {
    if (max_lag < 2 || series.size() <= max_lag)
        throw std::invalid_argument("detect_period: need series length > max_lag >= 2");
    PeriodInfo best{0, -2.0};
    for (std::size_t tau = 2; tau <= max_lag; ++tau) {
        double rho = autocorrelation(series, tau);
        if (rho > best.acf) best = {tau, rho};
    }
    return best;
}

/// Sliding-window base variance: sample variance over a centered window
/// clipped to the series bounds, floored at kVarianceFloor.
inline std::vector<double> base_variance(const std::vector<double>& series, std::size_t window) {
    if (window < 2) throw std::invalid_argument("base_variance: window must be >= 2");
    std::size_t T = series.size();
    std::vector<double> v(T);
    for (std::size_t t = 0; t < T; ++t) {
        std::size_t half = window / 2;
        std::size_t lo = t >= half ? t - half : 0;
        std::size_t hi = std::min(T, lo + window);
        lo = hi >= window ? hi - window : 0;
        std::size_t n = hi - lo;
        double m = 0;
        for (std::size_t i = lo; i < hi; ++i) m += series[i];
        m /= static_cast<double>(n);
        double s = 0;
        for (std::size_t i = lo; i < hi; ++i) s += (series[i] - m) * (series[i] - m);
        double var = n >= 2 ? s / static_cast<double>(n - 1) : 0.0;
        v[t] = std::max(var, kVarianceFloor);
    }
    return v;
}

/// Graph over T time steps: temporal edges weight 1, periodic edges weighted
/// by the clamped ACF, optional cross-series kernel weights (T*T).
inline AdjacencyGraph build_adjacency(std::size_t T, std::optional<PeriodInfo> period,
                                      const std::vector<double>* cross_weights = nullptr) {
    auto g = AdjacencyGraph::empty(T);
    for (std::size_t t = 0; t + 1 < T; ++t) g.add_edge(t, t + 1, 1.0);
    if (period) {
        std::size_t p = period->period;
        if (p < 2 || p >= T) throw std::invalid_argument("build_adjacency: period out of range");
        double w = std::clamp(period->acf, 0.0, 1.0);
        for (std::size_t t = 0; t + p < T; ++t) g.add_edge(t, t + p, w);
    }
    if (cross_weights) {
        if (cross_weights->size() != T * T)
            throw std::invalid_argument("build_adjacency: cross_weights size mismatch");
        for (std::size_t i = 0; i < T; ++i)
            for (std::size_t j = i + 1; j < T; ++j) g.add_edge(i, j, (*cross_weights)[i * T + j]);
    }
    g.finalize_degrees();
    return g;
}

/// Dense Cholesky solve of an SPD system, A x = b.
inline std::vector<double> cholesky_solve(std::vector<double> A, std::vector<double> b) {
    std::size_t n = b.size();
    // factor A = L L^T in place (lower triangle)
    for (std::size_t j = 0; j < n; ++j) {
        double d = A[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
        if (d <= 0) throw std::runtime_error("cholesky_solve: matrix not positive definite");
        A[j * n + j] = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = A[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= A[i * n + k] * A[j * n + k];
            A[i * n + j] = s / A[j * n + j];
        }
    }
    // forward then backward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= A[i * n + k] * b[k];
        b[i] = s / A[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= A[k * n + i] * b[k];
        b[i] = s / A[i * n + i];
    }
    return b;
}

/// Solve (I + lambda L) sigma = v_base; output floored at kVarianceFloor.
inline std::vector<double> smooth_variance(const std::vector<double>& v_base,
                                           const AdjacencyGraph& graph, double lambda) {
    if (lambda < 0) throw std::invalid_argument("smooth_variance: lambda must be >= 0");
    if (graph.n != v_base.size())
        throw std::invalid_argument("smooth_variance: graph size mismatch");
    std::size_t n = graph.n;
    std::vector<double> A(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        A[i * n + i] = 1.0 + lambda * graph.degree[i];
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) A[i * n + j] = -lambda * graph.at(i, j);
    }
    auto sigma = cholesky_solve(std::move(A), v_base);
    for (auto& s : sigma) s = std::max(s, kVarianceFloor);
    return sigma;
}

inline std::vector<EnhancedTarget> enhance_continuous(const std::vector<double>& labels,
                                                      const std::vector<double>& variances) {
    if (labels.size() != variances.size())
        throw std::invalid_argument("enhance_continuous: length mismatch");
    std::vector<EnhancedTarget> out;
    out.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (variances[i] <= 0) throw std::logic_error("enhance_continuous: nonpositive variance");
        out.push_back(EnhancedTarget{labels[i], variances[i], std::nullopt});
    }
    return out;
}

inline double gaussian_cdf(double x, double mean, double sd) {
    return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

/// Discretize N(y, sigma^2) over uniform bins on [bin_low, bin_high] via CDF
/// differences; tail mass folds into the edge bins. Labels outside the range
/// are clamped to the nearest bin center; the clamp count is returned.
inline std::pair<std::vector<EnhancedTarget>, std::size_t> enhance_discrete(
    const std::vector<double>& labels, const std::vector<double>& variances, const EnhanceConfig& cfg) {
    if (labels.size() != variances.size())
        throw std::invalid_argument("enhance_discrete: length mismatch");
    if (cfg.n_bins < 2) throw std::invalid_argument("enhance_discrete: n_bins must be >= 2");
    if (cfg.bin_high <= cfg.bin_low) throw std::invalid_argument("enhance_discrete: bad bin_range");
    double width = (cfg.bin_high - cfg.bin_low) / static_cast<double>(cfg.n_bins);
    std::size_t clamped = 0;
    std::vector<EnhancedTarget> out;
    out.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double y = labels[i];
        if (y < cfg.bin_low || y > cfg.bin_high) {
            ++clamped;
            std::size_t k = y < cfg.bin_low ? 0 : cfg.n_bins - 1;
            y = cfg.bin_low + (static_cast<double>(k) + 0.5) * width;
        }
        double sd = std::sqrt(std::max(variances[i], kVarianceFloor));
        std::vector<double> probs(cfg.n_bins);
        double total = 0;
        for (std::size_t k = 0; k < cfg.n_bins; ++k) {
            double lo = cfg.bin_low + static_cast<double>(k) * width;
            double hi = lo + width;
            double p = gaussian_cdf(hi, y, sd) - gaussian_cdf(lo, y, sd);
            if (k == 0) p += gaussian_cdf(cfg.bin_low, y, sd);
            if (k == cfg.n_bins - 1) p += 1.0 - gaussian_cdf(cfg.bin_high, y, sd);
            probs[k] = p;
            total += p;
        }
        for (auto& p : probs) p /= total;
        out.push_back(EnhancedTarget{labels[i], variances[i], std::move(probs)});
    }
    return {std::move(out), clamped};
}

inline std::vector<double> bin_centers(const EnhanceConfig& cfg) {
    double width = (cfg.bin_high - cfg.bin_low) / static_cast<double>(cfg.n_bins);
    std::vector<double> c(cfg.n_bins);
    for (std::size_t k = 0; k < cfg.n_bins; ++k)
        c[k] = cfg.bin_low + (static_cast<double>(k) + 0.5) * width;
    return c;
}

}  // namespace ldlmoe
