#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace ldlmoe {

/// One-dimensional Gaussian mixture: weights, means, variances.
struct GaussianMixture1D {
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> vars;

    std::size_t components() const { return weights.size(); }

    static GaussianMixture1D single(double mean, double var) {
        return GaussianMixture1D{{1.0}, {mean}, {var}};
    }

    void validate() const {
        if (weights.empty() || weights.size() != means.size() || weights.size() != vars.size())
            throw std::invalid_argument("GaussianMixture1D: inconsistent component counts");
        double s = 0;
        for (double w : weights) {
            if (w < 0) throw std::invalid_argument("GaussianMixture1D: negative weight");
            s += w;
        }
        if (std::fabs(s - 1.0) > 1e-9)
            throw std::invalid_argument("GaussianMixture1D: weights must sum to 1");
        for (double v : vars)
            if (v <= 0) throw std::invalid_argument("GaussianMixture1D: nonpositive variance");
    }

    double mean() const {
        double m = 0;
        for (std::size_t i = 0; i < components(); ++i) m += weights[i] * means[i];
        return m;
    }

    /// Law of total variance.
    double variance() const {
        double m = mean(), v = 0;
        for (std::size_t i = 0; i < components(); ++i)
            v += weights[i] * (vars[i] + (means[i] - m) * (means[i] - m));
        return v;
    }

    double cdf(double x) const {
        double s = 0;
        for (std::size_t i = 0; i < components(); ++i)
            s += weights[i] * 0.5 * std::erfc(-(x - means[i]) / std::sqrt(2.0 * vars[i]));
        return s;
    }

    /// Central interval [lo, hi] covering `level` probability mass, found by
    /// bisection on the mixture CDF.
    std::pair<double, double> central_interval(double level) const {
        double alpha = (1.0 - level) / 2.0;
        auto quantile = [&](double q) {
            double lo = -1e6, hi = 1e6;
            for (int it = 0; it < 200; ++it) {
                double mid = 0.5 * (lo + hi);
                (cdf(mid) < q ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        };
        return {quantile(alpha), quantile(1.0 - alpha)};
    }
};

struct CategoricalDist {
    std::vector<double> probs;

    void validate() const {
        if (probs.empty()) throw std::invalid_argument("CategoricalDist: empty");
        double s = 0;
        for (double p : probs) {
            if (p < 0) throw std::invalid_argument("CategoricalDist: negative probability");
            s += p;
        }
        if (std::fabs(s - 1.0) > 1e-9)
            throw std::invalid_argument("CategoricalDist: probabilities must sum to 1");
    }
};

/// Draw n samples: component by weight, then a Gaussian draw. Deterministic
/// per seed.
inline std::vector<double> sample_mixture(const GaussianMixture1D& mix, std::size_t n,
                                          std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("sample_mixture: n must be >= 1");
    mix.validate();
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> comp(mix.weights.begin(), mix.weights.end());
    std::normal_distribution<double> gauss;
    std::vector<double> out(n);
    for (auto& x : out) {
        std::size_t c = comp(rng);
        x = mix.means[c] + std::sqrt(mix.vars[c]) * gauss(rng);
    }
    return out;
}

}  // namespace ldlmoe
