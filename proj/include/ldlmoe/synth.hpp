#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ldlmoe {

/// Synthetic series with additive trend, seasonality, level-shift
/// changepoints and piecewise-constant noise regimes.
struct SynthSpec {
    std::size_t T = 600;
    double trend_slope = 0.05;
    double trend_curvature = 0.0;
    std::size_t period = 24;
    double amplitude = 2.0;
    std::vector<std::pair<std::size_t, double>> changepoints;  // (t, level shift)
    double base_sigma = 0.5;
    // (start t, sigma multiplier); each regime runs until the next start
    std::vector<std::pair<std::size_t, double>> vol_regimes;
    std::uint64_t seed = 0;

    void validate() const {
        if (T == 0) throw std::invalid_argument("SynthSpec: T must be > 0");
        if (amplitude < 0 || base_sigma < 0)
            throw std::invalid_argument("SynthSpec: amplitude and sigma must be >= 0");
        if (amplitude > 0 && period < 2)
            throw std::invalid_argument("SynthSpec: period must be >= 2");
        for (const auto& [t, shift] : changepoints) {
            (void)shift;
            if (t >= T) throw std::invalid_argument("SynthSpec: changepoint beyond series end");
        }
        for (const auto& [t, mult] : vol_regimes) {
            if (t >= T) throw std::invalid_argument("SynthSpec: regime start beyond series end");
            if (mult < 0) throw std::invalid_argument("SynthSpec: negative regime multiplier");
        }
    }
};

struct SynthData {
    std::vector<double> y, trend_true, seasonal_true, cp_true, noise_sd_true;
};

/// y_t = trend_t + seasonal_t + cp_t + eps_t with eps_t ~ N(0, noise_sd_t^2).
inline SynthData synthesize(const SynthSpec& spec) {
    spec.validate();
    SynthData d;
    d.y.resize(spec.T);
    d.trend_true.resize(spec.T);
    d.seasonal_true.resize(spec.T);
    d.cp_true.resize(spec.T);
    d.noise_sd_true.resize(spec.T);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t t = 0; t < spec.T; ++t) {
        double tt = static_cast<double>(t);
        d.trend_true[t] = spec.trend_slope * tt + spec.trend_curvature * tt * tt;
        d.seasonal_true[t] =
            spec.amplitude == 0
                ? 0.0
                : spec.amplitude *
                      std::sin(2.0 * std::numbers::pi * tt / static_cast<double>(spec.period));
        double cp = 0;
        for (const auto& [ct, shift] : spec.changepoints)
            if (t >= ct) cp += shift;
        d.cp_true[t] = cp;
        double mult = 1.0;
        for (const auto& [rt, m] : spec.vol_regimes)
            if (t >= rt) mult = m;
        d.noise_sd_true[t] = spec.base_sigma * mult;
        d.y[t] = d.trend_true[t] + d.seasonal_true[t] + d.cp_true[t] +
                 (d.noise_sd_true[t] > 0 ? d.noise_sd_true[t] * unit(rng) : 0.0);
    }
    return d;
}

}  // namespace ldlmoe
