#pragma once

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldlmoe/csv.hpp"
#include "ldlmoe/experts.hpp"
#include "ldlmoe/lstm.hpp"
#include "ldlmoe/mixture.hpp"
#include "ldlmoe/tape.hpp"

namespace ldlmoe {

enum class ComponentKind { trend, seasonal, changepoint, volatility };

constexpr std::array<ComponentKind, 4> kAllComponents{
    ComponentKind::trend, ComponentKind::seasonal, ComponentKind::changepoint,
    ComponentKind::volatility};

inline std::string to_string(ComponentKind k) {
    switch (k) {
        case ComponentKind::trend: return "trend";
        case ComponentKind::seasonal: return "seasonal";
        case ComponentKind::changepoint: return "changepoint";
        case ComponentKind::volatility: return "volatility";
    }
    throw std::logic_error("bad ComponentKind");
}

struct RegWeights {
    double smooth = 0.01;
    double persist = 0.01;
    double period = 0.01;
    double sparse = 0.01;
    double local = 0.01;
    double hetero = 0.01;
    std::size_t p = 2;  // seasonal period

    void validate() const {
        if (smooth < 0 || persist < 0 || period < 0 || sparse < 0 || local < 0 || hetero < 0)
            throw std::invalid_argument("RegWeights: weights must be >= 0");
        if (p < 2) throw std::invalid_argument("RegWeights: p must be >= 2");
    }
};

// ---- data-level regularizers (one H-vector; summed over steps) ----

/// smooth * ||second difference||^2 + persist * ||first difference||^2.
/// Vectors shorter than 3 drop the second-difference term.
inline double reg_trend(const std::vector<double>& v, const RegWeights& w) {
    double d1 = 0, d2 = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        double d = v[i] - v[i - 1];
        d1 += d * d;
    }
    for (std::size_t i = 2; i < v.size(); ++i) {
        double d = v[i] - 2.0 * v[i - 1] + v[i - 2];
        d2 += d * d;
    }
    return w.smooth * d2 + w.persist * d1;
}

/// period * ||S_t - S_{t-p}||^2 + smooth * ||first difference||^2. The
/// periodicity term is omitted when the vector is not longer than p.
inline double reg_seasonal(const std::vector<double>& v, const RegWeights& w) {
    double d1 = 0, dp = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        double d = v[i] - v[i - 1];
        d1 += d * d;
    }
    for (std::size_t i = w.p; i < v.size(); ++i) {
        double d = v[i] - v[i - w.p];
        dp += d * d;
    }
    return w.period * dp + w.smooth * d1;
}

/// sparse * ||C||_1 + local * ||first difference||^2.
inline double reg_changepoint(const std::vector<double>& v, const RegWeights& w) {
    double l1 = 0, d1 = 0;
    for (double x : v) l1 += std::fabs(x);
    for (std::size_t i = 1; i < v.size(); ++i) {
        double d = v[i] - v[i - 1];
        d1 += d * d;
    }
    return w.sparse * l1 + w.local * d1;
}

/// hetero * ||Vol - residual_var||^2 + smooth * ||first difference of Vol||^2.
/// residual_var is the batch's per-step squared residual, a proxy for Var(y_t).
inline double reg_volatility(const std::vector<double>& vol, const std::vector<double>& residual_var,
                             const RegWeights& w) {
    if (vol.size() != residual_var.size())
        throw std::invalid_argument("reg_volatility: length mismatch");
    double gap = 0, d1 = 0;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        double d = vol[i] - residual_var[i];
        gap += d * d;
    }
    for (std::size_t i = 1; i < vol.size(); ++i) {
        double d = vol[i] - vol[i - 1];
        d1 += d * d;
    }
    return w.hetero * gap + w.smooth * d1;
}

struct ComponentOutput {
    ComponentKind kind = ComponentKind::trend;
    std::vector<double> value;        // length H
    std::vector<double> uncertainty;  // length H, > 0
    std::vector<double> gate;         // over sub-experts, sums to 1
};

struct PatternConfig {
    std::size_t n_sub = 2;      // sub-experts per component
    std::size_t hidden_dim = 32;
    std::size_t n_layers = 1;
    std::size_t window = 20;
    std::size_t horizon = 28;
    std::size_t input_dim = 1;
    double temperature = 1.5;
    double noise_std = 0.1;
    std::size_t head_hidden = 32;
    std::size_t gate_hidden = 32;

    void validate() const {
        if (n_sub < 1 || temperature <= 0 || noise_std < 0)
            throw std::invalid_argument("PatternConfig: need n_sub >= 1, tau > 0, noise_std >= 0");
        if (window == 0 || horizon == 0 || input_dim == 0 || hidden_dim == 0 || n_layers == 0)
            throw std::invalid_argument("PatternConfig: zero-sized dimension");
    }
};

/// Pattern-Aware LDL-MoE: four component groups (trend, seasonal, changepoint,
/// volatility), each a gated MoE of BiLSTM sub-experts, combined additively.
/// The per-step predictive distribution is a single Gaussian whose variance is
/// the sum of component uncertainties (independence convention).
class PatternModel {
public:
    PatternConfig cfg;
    ParamSet params;

    explicit PatternModel(PatternConfig config, std::uint64_t seed) : cfg(config) {
        cfg.validate();
        std::mt19937_64 rng(seed);
        for (auto kind : kAllComponents) {
            std::string prefix = to_string(kind);
            ComponentGroup g;
            for (std::size_t k = 0; k < cfg.n_sub; ++k) {
                std::string tag = prefix + ".sub" + std::to_string(k);
                SubExpert s;
                s.lstm = BiLstm::create(params, tag + ".lstm", cfg.input_dim, cfg.hidden_dim,
                                        cfg.n_layers, rng);
                std::size_t state = 2 * cfg.hidden_dim;
                s.mean_head = Mlp::create(params, tag + ".mean", state, cfg.head_hidden,
                                          cfg.horizon, rng);
                s.var_head = Mlp::create(params, tag + ".var", state, cfg.head_hidden,
                                         cfg.horizon, rng);
                g.subs.push_back(s);
            }
            g.gate = Mlp::create(params, prefix + ".gate", cfg.window * cfg.input_dim,
                                 cfg.gate_hidden, cfg.n_sub, rng);
            groups_.push_back(std::move(g));
        }
    }

    std::vector<Tensor> make_leaves(Tape& t) const {
        std::vector<Tensor> leaves;
        leaves.reserve(params.size());
        for (const auto& p : params.values) leaves.push_back(t.leaf(p));
        return leaves;
    }

    struct ComponentForward {
        std::vector<Tensor> mu, logvar, repr;  // per sub-expert
        Tensor gate;         // B x n_sub
        Tensor value;        // B x H, gate-weighted mean
        Tensor uncertainty;  // B x H, gate-weighted mixture variance
    };

    struct Forward {
        std::array<ComponentForward, 4> comp;
        Tensor mean;  // B x H, sum of component values
        Tensor var;   // B x H, sum of component uncertainties
    };

    Forward forward(Tape& t, const std::vector<Tensor>& leaves, const Tensor& X, bool training,
                    std::uint64_t noise_seed = 0) const {
        if (X.cols() != cfg.window * cfg.input_dim)
            throw std::invalid_argument("PatternModel::forward: input width mismatch " +
                                        Tensor::shape_str(X.shape));
        std::vector<Tensor> xs(cfg.window);
        for (std::size_t step = 0; step < cfg.window; ++step)
            xs[step] = t.slice_cols(X, step * cfg.input_dim, cfg.input_dim);

        Forward out;
        for (std::size_t c = 0; c < 4; ++c) {
            const auto& g = groups_[c];
            ComponentForward cf;
            for (const auto& s : g.subs) {
                auto r = bilstm_forward(t, s.lstm, leaves, xs);
                cf.repr.push_back(r.final_state);
                cf.mu.push_back(s.mean_head.forward(t, leaves, r.final_state));
                cf.logvar.push_back(t.clamp(s.var_head.forward(t, leaves, r.final_state),
                                            -kLogVarClamp, kLogVarClamp));
            }
            Tensor logits = g.gate.forward(t, leaves, X);
            if (training && cfg.noise_std > 0) {
                // distinct noise stream per component group
                std::mt19937_64 rng(noise_seed * 4 + c);
                std::normal_distribution<double> n(0.0, cfg.noise_std);
                Tensor eps = Tensor::zeros(logits.shape);
                for (auto& v : eps.data) v = n(rng);
                logits = t.add(logits, eps);
            }
            cf.gate = t.softmax_with_temperature(logits, cfg.temperature);

            for (std::size_t k = 0; k < cfg.n_sub; ++k) {
                Tensor gk = t.col(cf.gate, k);
                Tensor wmu = t.mul_colvec(cf.mu[k], gk);
                Tensor wsec =
                    t.mul_colvec(t.add(t.exp(cf.logvar[k]), t.square(cf.mu[k])), gk);
                cf.value = k == 0 ? wmu : t.add(cf.value, wmu);
                cf.uncertainty = k == 0 ? wsec : t.add(cf.uncertainty, wsec);
            }
            // law of total variance: E[sigma^2 + mu^2] - (E[mu])^2
            cf.uncertainty = t.sub(cf.uncertainty, t.square(cf.value));
            out.comp[c] = std::move(cf);
        }
        out.mean = t.add(t.add(out.comp[0].value, out.comp[1].value),
                         t.add(out.comp[2].value, out.comp[3].value));
        out.var = t.add(t.add(out.comp[0].uncertainty, out.comp[1].uncertainty),
                        t.add(out.comp[2].uncertainty, out.comp[3].uncertainty));
        return out;
    }

    /// Data-level component outputs for one sample of a forward pass.
    std::array<ComponentOutput, 4> component_outputs(const Forward& f, std::size_t b) const {
        std::array<ComponentOutput, 4> out;
        for (std::size_t c = 0; c < 4; ++c) {
            ComponentOutput o;
            o.kind = kAllComponents[c];
            o.value.resize(cfg.horizon);
            o.uncertainty.resize(cfg.horizon);
            for (std::size_t h = 0; h < cfg.horizon; ++h) {
                o.value[h] = f.comp[c].value(b, h);
                o.uncertainty[h] = f.comp[c].uncertainty(b, h);
            }
            o.gate.resize(cfg.n_sub);
            for (std::size_t k = 0; k < cfg.n_sub; ++k) o.gate[k] = f.comp[c].gate(b, k);
            out[c] = std::move(o);
        }
        return out;
    }

    std::vector<std::vector<double>> predict_point(const Forward& f) const {
        std::size_t B = f.mean.rows();
        std::vector<std::vector<double>> out(B, std::vector<double>(cfg.horizon));
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < cfg.horizon; ++h) out[b][h] = f.mean(b, h);
        return out;
    }

    /// Per-sample, per-step Gaussian predictive distribution.
    std::vector<std::vector<GaussianMixture1D>> mixtures(const Forward& f) const {
        std::size_t B = f.mean.rows();
        std::vector<std::vector<GaussianMixture1D>> out(B,
            std::vector<GaussianMixture1D>(cfg.horizon));
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < cfg.horizon; ++h)
                out[b][h] = GaussianMixture1D{{1.0}, {f.mean(b, h)}, {f.var(b, h)}};
        return out;
    }

    // ---- losses ----

    Tensor loss_distance(Tape& t, const Forward& f, const TargetBatch& tb, double kappa) const {
        Tensor eqq = tb.vars;
        for (auto& v : eqq.data) v = kappa / std::sqrt(2.0 * v + kappa * kappa);
        eqq.node = -1;
        Tensor epp = kernel_expectation_tape(t, f.mean, f.var, f.mean, f.var, kappa);
        Tensor epq = kernel_expectation_tape(t, f.mean, f.var, tb.means, tb.vars, kappa);
        return t.mean(t.add(t.sub(epp, t.scale(epq, 2.0)), eqq));
    }

    /// Sum over component groups of Var(u) over sub-expert utilizations.
    Tensor loss_balance(Tape& t, const Forward& f) const {
        Tensor total;
        for (std::size_t c = 0; c < 4; ++c) {
            Tensor v = t.variance(t.mean_rows(f.comp[c].gate));
            total = c == 0 ? v : t.add(total, v);
        }
        return total;
    }

    /// Sum over component groups of ordered-pair cosine similarities between
    /// batch-averaged sub-expert representations.
    Tensor loss_diversity(Tape& t, const Forward& f) const {
        Tensor total = Tensor::scalar(0.0);
        bool first = true;
        for (std::size_t c = 0; c < 4; ++c) {
            std::vector<Tensor> e(cfg.n_sub);
            for (std::size_t k = 0; k < cfg.n_sub; ++k)
                e[k] = t.mean_rows(f.comp[c].repr[k]);
            for (std::size_t i = 0; i < cfg.n_sub; ++i)
                for (std::size_t j = i + 1; j < cfg.n_sub; ++j) {
                    Tensor cij = t.scale(t.cosine_similarity(e[i], e[j]), 2.0);
                    total = first ? cij : t.add(total, cij);
                    first = false;
                }
        }
        if (first) return t.mul(t.leaf(Tensor::scalar(0.0)), Tensor::scalar(0.0));
        return total;
    }

    // ---- tape regularizers (batch mean of the per-sample vector forms) ----

    Tensor reg_trend_tape(Tape& t, const Forward& f, const RegWeights& w) const {
        const Tensor& v = f.comp[0].value;
        double B = static_cast<double>(v.rows());
        Tensor loss = t.scale(sq_sum(t, diff(t, v)), w.persist / B);
        if (cfg.horizon >= 3)
            loss = t.add(loss, t.scale(sq_sum(t, diff(t, diff(t, v))), w.smooth / B));
        return loss;
    }

    Tensor reg_seasonal_tape(Tape& t, const Forward& f, const RegWeights& w) const {
        const Tensor& v = f.comp[1].value;
        double B = static_cast<double>(v.rows());
        Tensor loss = t.scale(sq_sum(t, diff(t, v)), w.smooth / B);
        if (cfg.horizon > w.p) {
            std::size_t n = cfg.horizon - w.p;
            Tensor lag = t.sub(t.slice_cols(v, w.p, n), t.slice_cols(v, 0, n));
            loss = t.add(loss, t.scale(sq_sum(t, lag), w.period / B));
        }
        return loss;
    }

    Tensor reg_changepoint_tape(Tape& t, const Forward& f, const RegWeights& w) const {
        const Tensor& v = f.comp[2].value;
        double B = static_cast<double>(v.rows());
        Tensor loss = t.scale(t.sum(t.abs(v)), w.sparse / B);
        return t.add(loss, t.scale(sq_sum(t, diff(t, v)), w.local / B));
    }

    /// residual_var is a constant B x H tensor of squared point-forecast
    /// residuals for the batch (detached proxy for Var(y_t)).
    Tensor reg_volatility_tape(Tape& t, const Forward& f, const Tensor& residual_var,
                               const RegWeights& w) const {
        const Tensor& v = f.comp[3].value;
        require_same_shape(v, residual_var, "reg_volatility_tape");
        double B = static_cast<double>(v.rows());
        Tensor loss = t.scale(sq_sum(t, t.sub(v, residual_var)), w.hetero / B);
        return t.add(loss, t.scale(sq_sum(t, diff(t, v)), w.smooth / B));
    }

    /// L_total = L_dist + alpha L_bal + beta L_div + sum_c L_reg^(c).
    Tensor loss_total(Tape& t, const Forward& f, const TargetBatch& tb, double kappa,
                      double lambda1, double lambda2, const RegWeights& w,
                      const Tensor& residual_var) const {
        if (lambda1 < 0 || lambda2 < 0)
            throw std::invalid_argument("loss_total: weights must be >= 0");
        w.validate();
        Tensor loss = loss_distance(t, f, tb, kappa);
        if (lambda1 > 0) loss = t.add(loss, t.scale(loss_balance(t, f), lambda1));
        if (lambda2 > 0) loss = t.add(loss, t.scale(loss_diversity(t, f), lambda2));
        if (w.smooth > 0 || w.persist > 0) loss = t.add(loss, reg_trend_tape(t, f, w));
        if (w.smooth > 0 || w.period > 0) loss = t.add(loss, reg_seasonal_tape(t, f, w));
        if (w.sparse > 0 || w.local > 0) loss = t.add(loss, reg_changepoint_tape(t, f, w));
        if (w.hetero > 0 || w.smooth > 0)
            loss = t.add(loss, reg_volatility_tape(t, f, residual_var, w));
        return loss;
    }

    /// Squared residuals of the point forecast against target means, as a
    /// constant tensor for the volatility regularizer.
    static Tensor residuals_squared(const Forward& f, const TargetBatch& tb) {
        Tensor r = Tensor::zeros(tb.means.shape);
        for (std::size_t i = 0; i < r.data.size(); ++i) {
            double d = tb.means.data[i] - f.mean.data[i];
            r.data[i] = d * d;
        }
        return r;
    }

private:
    struct SubExpert {
        BiLstm lstm;
        Mlp mean_head{}, var_head{};
    };
    struct ComponentGroup {
        std::vector<SubExpert> subs;
        Mlp gate{};
    };
    std::vector<ComponentGroup> groups_;

    static Tensor diff(Tape& t, const Tensor& v) {
        std::size_t H = v.cols();
        if (H < 2) throw std::invalid_argument("diff: need >= 2 columns");
        return t.sub(t.slice_cols(v, 1, H - 1), t.slice_cols(v, 0, H - 1));
    }

    static Tensor sq_sum(Tape& t, const Tensor& v) { return t.sum(t.square(v)); }
};

/// Combine four component outputs of one sample: point forecast is the exact
/// sum of values; the per-step distribution is Gaussian with summed variances.
struct CombinedForecast {
    std::vector<double> point;
    std::vector<GaussianMixture1D> dist;
};

inline CombinedForecast additive_combine(const std::array<ComponentOutput, 4>& comps) {
    std::size_t H = comps[0].value.size();
    for (const auto& c : comps)
        if (c.value.size() != H || c.uncertainty.size() != H)
            throw std::invalid_argument("additive_combine: component length mismatch");
    CombinedForecast out;
    out.point.assign(H, 0.0);
    out.dist.resize(H);
    for (std::size_t h = 0; h < H; ++h) {
        double m = 0, v = 0;
        for (const auto& c : comps) {
            m += c.value[h];
            v += c.uncertainty[h];
        }
        out.point[h] = m;
        out.dist[h] = GaussianMixture1D{{1.0}, {m}, {v}};
    }
    return out;
}

/// Decomposition table over a windowed dataset: one row per window at its
/// first forecast step.
struct DecomposeTable {
    std::vector<std::string> header{"t",          "y_true",       "y_hat",
                                    "trend",      "seasonal",     "changepoint",
                                    "volatility", "trend_unc",    "seasonal_unc",
                                    "changepoint_unc", "volatility_unc"};
    std::vector<std::vector<double>> rows;
};

inline DecomposeTable decompose_table(const PatternModel& model,
                                      const std::vector<std::vector<double>>& inputs,
                                      const std::vector<std::vector<double>>& targets,
                                      const std::vector<std::size_t>& starts) {
    if (inputs.size() != targets.size() || inputs.size() != starts.size())
        throw std::invalid_argument("decompose_table: length mismatch");
    DecomposeTable table;
    std::size_t B = inputs.size();
    const std::size_t chunk = 64;  // bounded tape size
    for (std::size_t lo = 0; lo < B; lo += chunk) {
        std::size_t n = std::min(chunk, B - lo);
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = lo + i;
        Tensor X = batch_inputs(inputs, idx);
        Tape t;
        auto leaves = model.make_leaves(t);
        auto f = model.forward(t, leaves, X, false);
        for (std::size_t i = 0; i < n; ++i) {
            auto comps = model.component_outputs(f, i);
            auto combined = additive_combine(comps);
            std::vector<double> row;
            row.push_back(static_cast<double>(starts[lo + i] + model.cfg.window));
            row.push_back(targets[lo + i].at(0));
            row.push_back(combined.point[0]);
            for (const auto& c : comps) row.push_back(c.value[0]);
            for (const auto& c : comps) row.push_back(c.uncertainty[0]);
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

}  // namespace ldlmoe
