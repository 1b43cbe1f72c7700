#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "ldlmoe/mixture.hpp"

namespace ldlmoe {

/// Expected RBF kernel value between two Gaussians under bandwidth kappa:
/// E[k(x,y)] = kappa / sqrt(v1 + v2 + kappa^2) * exp(-(m1-m2)^2 / (2(v1+v2+kappa^2))).
inline double gaussian_kernel_expectation(double m1, double v1, double m2, double v2, double kappa) {
    double s = v1 + v2 + kappa * kappa;
    double d = m1 - m2;
    return kappa / std::sqrt(s) * std::exp(-d * d / (2.0 * s));
}

/// Cross-expectation E_{x~P,y~Q}[k(x,y)] for two Gaussian mixtures.
inline double mixture_kernel_expectation(const GaussianMixture1D& P, const GaussianMixture1D& Q,
                                         double kappa) {
    double e = 0;
    for (std::size_t i = 0; i < P.components(); ++i)
        for (std::size_t j = 0; j < Q.components(); ++j)
            e += P.weights[i] * Q.weights[j] *
                 gaussian_kernel_expectation(P.means[i], P.vars[i], Q.means[j], Q.vars[j], kappa);
    return e;
}

/// Closed-form squared MMD between Gaussian mixtures under an RBF kernel,
/// clamped at zero from below. The cross term is evaluated in a canonical
/// argument order so mmd2_closed(P,Q) == mmd2_closed(Q,P) bit-exactly.
inline double mmd2_closed(const GaussianMixture1D& P, const GaussianMixture1D& Q, double kappa) {
    if (kappa <= 0) throw std::invalid_argument("mmd2_closed: kappa must be > 0");
    P.validate();
    Q.validate();
    auto less = [](const GaussianMixture1D& a, const GaussianMixture1D& b) {
        if (a.weights != b.weights) return a.weights < b.weights;
        if (a.means != b.means) return a.means < b.means;
        return a.vars < b.vars;
    };
    const GaussianMixture1D& lo = less(P, Q) ? P : Q;
    const GaussianMixture1D& hi = less(P, Q) ? Q : P;
    double v = mixture_kernel_expectation(P, P, kappa) + mixture_kernel_expectation(Q, Q, kappa) -
               2.0 * mixture_kernel_expectation(lo, hi, kappa);
    return std::max(v, 0.0);
}

/// Median of all pairwise absolute differences. The median is taken over the
/// unsquared distances; throws if all samples are identical.
inline double median_bandwidth(const std::vector<double>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("median_bandwidth: need >= 2 samples");
    std::vector<double> dists;
    dists.reserve(samples.size() * (samples.size() - 1) / 2);
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j)
            dists.push_back(std::fabs(samples[i] - samples[j]));
    std::sort(dists.begin(), dists.end());
    if (dists.back() == 0.0)
        throw std::invalid_argument("median_bandwidth: all samples identical");
    std::size_t n = dists.size();
    double med = n % 2 ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
    if (med == 0.0) throw std::invalid_argument("median_bandwidth: degenerate median");
    return med;
}

/// Random Fourier feature map for the scalar RBF kernel
/// k(x,y) = exp(-(x-y)^2 / (2 kappa^2)): phi(x) = sqrt(2/D) cos(W x + b).
struct RFFMap {
    std::size_t dim;
    std::vector<double> frequencies;  // D, drawn N(0, 1/kappa^2)
    std::vector<double> phases;       // D, uniform on [0, 2pi)
    double bandwidth;

    static RFFMap create(std::size_t D, double kappa, std::uint64_t seed) {
        if (D == 0 || kappa <= 0) throw std::invalid_argument("RFFMap: need D >= 1, kappa > 0");
        RFFMap m{D, std::vector<double>(D), std::vector<double>(D), kappa};
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> freq(0.0, 1.0 / kappa);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        for (auto& f : m.frequencies) f = freq(rng);
        for (auto& p : m.phases) p = phase(rng);
        return m;
    }
};

/// Feature rows phi(x_i) for a batch of scalars: (len(x) x D).
inline std::vector<std::vector<double>> rff_features(const std::vector<double>& x, const RFFMap& map) {
    double scale = std::sqrt(2.0 / static_cast<double>(map.dim));
    std::vector<std::vector<double>> out(x.size(), std::vector<double>(map.dim));
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t k = 0; k < map.dim; ++k)
            out[i][k] = scale * std::cos(map.frequencies[k] * x[i] + map.phases[k]);
    return out;
}

/// Squared MMD estimate from mean feature embeddings; nonnegative by
/// construction.
inline double mmd2_rff(const std::vector<double>& samples_p, const std::vector<double>& samples_q,
                       const RFFMap& map) {
    if (samples_p.empty() || samples_q.empty())
        throw std::invalid_argument("mmd2_rff: empty sample set");
    auto mean_embedding = [&](const std::vector<double>& s) {
        std::vector<double> m(map.dim, 0.0);
        auto feats = rff_features(s, map);
        for (const auto& row : feats)
            for (std::size_t k = 0; k < map.dim; ++k) m[k] += row[k];
        for (auto& v : m) v /= static_cast<double>(s.size());
        return m;
    };
    auto mp = mean_embedding(samples_p);
    auto mq = mean_embedding(samples_q);
    double d2 = 0;
    for (std::size_t k = 0; k < map.dim; ++k) {
        double d = mp[k] - mq[k];
        d2 += d * d;
    }
    return d2;
}

/// KL(P || Q) with Q smoothed by 1e-10 before the log; 0 log 0 = 0.
inline double kl_categorical(const CategoricalDist& P, const CategoricalDist& Q) {
    if (P.probs.size() != Q.probs.size())
        throw std::invalid_argument("kl_categorical: length mismatch");
    constexpr double eps = 1e-10;
    double kl = 0;
    for (std::size_t k = 0; k < P.probs.size(); ++k) {
        if (P.probs[k] <= 0) continue;
        kl += P.probs[k] * std::log(P.probs[k] / (Q.probs[k] + eps));
    }
    return std::max(kl, 0.0);
}

}  // namespace ldlmoe
