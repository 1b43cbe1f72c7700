#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldlmoe {

/// Multivariate series. Row t of `values` is the d-dimensional observation at
/// step t; column 0 is the forecast target. Timestamps, when present, must be
/// strictly increasing.
struct TimeSeries {
    std::string id;
    std::vector<std::vector<double>> values;  // T rows, each length d
    std::optional<std::vector<long>> timestamps;

    std::size_t length() const { return values.size(); }
    std::size_t dim() const { return values.empty() ? 0 : values[0].size(); }

    void validate() const {
        if (values.empty()) throw std::invalid_argument("TimeSeries: length must be >= 1");
        std::size_t d = values[0].size();
        if (d == 0) throw std::invalid_argument("TimeSeries: dimension must be >= 1");
        for (const auto& row : values)
            if (row.size() != d) throw std::invalid_argument("TimeSeries: ragged rows");
        if (timestamps) {
            if (timestamps->size() != values.size())
                throw std::invalid_argument("TimeSeries: timestamp count mismatch");
            for (std::size_t i = 1; i < timestamps->size(); ++i)
                if ((*timestamps)[i] <= (*timestamps)[i - 1])
                    throw std::invalid_argument("TimeSeries: timestamps must be strictly increasing");
        }
    }

    /// Target channel (column 0).
    std::vector<double> target() const {
        std::vector<double> y(values.size());
        for (std::size_t t = 0; t < values.size(); ++t) y[t] = values[t][0];
        return y;
    }
};

/// Rolling supervised pairs. Pair k covers input steps [starts[k], starts[k]+w)
/// and target steps [starts[k]+w, starts[k]+w+H) of the source series.
struct WindowedDataset {
    std::vector<std::vector<double>> inputs;   // each w*d, row-major (w rows of d)
    std::vector<std::vector<double>> targets;  // each length H
    std::vector<std::size_t> starts;
    std::size_t w = 0;
    std::size_t H = 0;
    std::size_t d = 1;

    std::size_t size() const { return inputs.size(); }
    bool empty() const { return inputs.empty(); }
};

struct SplitSpec {
    std::size_t test_len;       // final steps reserved for testing
    double val_fraction = 0.1;  // chronological tail of the remaining pairs
};

inline WindowedDataset make_windows(const TimeSeries& series, std::size_t w, std::size_t H) {
    series.validate();
    std::size_t T = series.length();
    if (w == 0 || H == 0) throw std::invalid_argument("make_windows: w and H must be >= 1");
    if (T < w + H)
        throw std::invalid_argument("make_windows: series length " + std::to_string(T) +
                                    " < w + H = " + std::to_string(w + H));
    WindowedDataset ds;
    ds.w = w;
    ds.H = H;
    ds.d = series.dim();
    std::size_t n = T - w - H + 1;
    ds.inputs.reserve(n);
    ds.targets.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> in;
        in.reserve(w * ds.d);
        for (std::size_t t = k; t < k + w; ++t)
            in.insert(in.end(), series.values[t].begin(), series.values[t].end());
        std::vector<double> tgt(H);
        for (std::size_t h = 0; h < H; ++h) tgt[h] = series.values[k + w + h][0];
        ds.inputs.push_back(std::move(in));
        ds.targets.push_back(std::move(tgt));
        ds.starts.push_back(k);
    }
    return ds;
}

struct Splits {
    WindowedDataset train, val, test;
};

/// Chronological split. Test takes every pair whose target range touches the
/// final `test_len` steps; the rest splits val_fraction-from-the-end into val.
inline Splits time_split(const WindowedDataset& ds, const SplitSpec& spec) {
    if (spec.val_fraction <= 0.0 || spec.val_fraction >= 1.0)
        throw std::invalid_argument("time_split: val_fraction must be in (0,1)");
    if (spec.test_len < ds.H)
        throw std::invalid_argument("time_split: test_len must be >= H");
    if (ds.empty()) throw std::invalid_argument("time_split: empty dataset");

    std::size_t T = ds.starts.back() + ds.w + ds.H;  // series length implied by last pair
    if (spec.test_len >= T) throw std::invalid_argument("time_split: test_len covers the whole series");
    std::size_t test_begin_step = T - spec.test_len;

    auto subset = [&](std::size_t lo, std::size_t hi) {
        WindowedDataset out;
        out.w = ds.w;
        out.H = ds.H;
        out.d = ds.d;
        for (std::size_t k = lo; k < hi; ++k) {
            out.inputs.push_back(ds.inputs[k]);
            out.targets.push_back(ds.targets[k]);
            out.starts.push_back(ds.starts[k]);
        }
        return out;
    };

    // Pairs are ordered by start, so the test block is a suffix.
    std::size_t first_test = ds.size();
    for (std::size_t k = 0; k < ds.size(); ++k) {
        if (ds.starts[k] + ds.w + ds.H > test_begin_step) {
            first_test = k;
            break;
        }
    }
    if (first_test == ds.size()) throw std::invalid_argument("time_split: empty test partition");

    std::size_t remaining = first_test;
    auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(remaining) * spec.val_fraction));
    if (n_val == 0 || n_val >= remaining)
        throw std::invalid_argument("time_split: empty train or val partition");

    Splits s;
    s.train = subset(0, remaining - n_val);
    s.val = subset(remaining - n_val, remaining);
    s.test = subset(first_test, ds.size());
    return s;
}

/// Per-feature z-score scaler fit on training inputs only. Zero-variance
/// features pass through (std recorded as 1).
struct Scaler {
    std::vector<double> mean, std;

    void apply(WindowedDataset& ds) const {
        for (auto& in : ds.inputs)
            for (std::size_t i = 0; i < in.size(); ++i) {
                std::size_t f = i % mean.size();
                in[i] = (in[i] - mean[f]) / std[f];
            }
    }
};

inline Scaler zscore_fit(const WindowedDataset& train) {
    if (train.empty()) throw std::invalid_argument("zscore_fit: empty training set");
    std::size_t d = train.d;
    Scaler sc;
    sc.mean.assign(d, 0.0);
    sc.std.assign(d, 0.0);
    std::size_t n = 0;
    for (const auto& in : train.inputs) {
        for (std::size_t i = 0; i < in.size(); ++i) sc.mean[i % d] += in[i];
        n += in.size() / d;
    }
    for (auto& m : sc.mean) m /= static_cast<double>(n);
    for (const auto& in : train.inputs)
        for (std::size_t i = 0; i < in.size(); ++i) {
            double c = in[i] - sc.mean[i % d];
            sc.std[i % d] += c * c;
        }
    for (std::size_t f = 0; f < d; ++f) {
        sc.std[f] = std::sqrt(sc.std[f] / static_cast<double>(n));
        if (sc.std[f] == 0.0) sc.std[f] = 1.0;
    }
    return sc;
}

inline Scaler zscore_fit_transform(WindowedDataset& train) {
    Scaler sc = zscore_fit(train);
    sc.apply(train);
    return sc;
}

// ---- point-forecast error metrics ----

namespace detail {
inline void check_lengths(const std::vector<double>& a, const std::vector<double>& b, const char* op) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument(std::string(op) + ": length mismatch or empty input");
}
}  // namespace detail

inline double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
    detail::check_lengths(pred, truth, "rmse");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double e = pred[i] - truth[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(pred.size()));
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    detail::check_lengths(pred, truth, "mae");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

/// Percent MAPE with epsilon-guarded denominator max(|truth|, 1e-8).
inline double mape(const std::vector<double>& pred, const std::vector<double>& truth) {
    detail::check_lengths(pred, truth, "mape");
    constexpr double eps = 1e-8;
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        s += std::fabs(pred[i] - truth[i]) / std::max(std::fabs(truth[i]), eps);
    return 100.0 * s / static_cast<double>(pred.size());
}

}  // namespace ldlmoe
