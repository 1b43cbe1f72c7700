#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldlmoe/enhance.hpp"
#include "ldlmoe/lstm.hpp"
#include "ldlmoe/mixture.hpp"
#include "ldlmoe/mmd.hpp"
#include "ldlmoe/tape.hpp"

namespace ldlmoe {

enum class TargetMode { continuous, discrete };

inline std::string to_string(TargetMode m) {
    return m == TargetMode::continuous ? "continuous" : "discrete";
}

inline TargetMode target_mode_from_string(const std::string& s) {
    if (s == "continuous") return TargetMode::continuous;
    if (s == "discrete") return TargetMode::discrete;
    throw std::invalid_argument("unknown target mode: " + s);
}

struct ExpertConfig {
    std::size_t n_experts = 4;
    std::size_t hidden_dim = 128;
    std::size_t n_layers = 2;
    std::size_t window = 20;
    std::size_t horizon = 28;
    std::size_t input_dim = 1;
    double temperature = 1.5;  // gate softmax temperature
    double noise_std = 0.1;    // training-time gate logit noise
    TargetMode mode = TargetMode::continuous;
    std::size_t n_bins = 10;
    double bin_low = -5.0, bin_high = 5.0;
    std::size_t head_hidden = 32;
    std::size_t gate_hidden = 32;

    void validate() const {
        if (n_experts < 1 || temperature <= 0 || noise_std < 0)
            throw std::invalid_argument("ExpertConfig: need n_experts >= 1, tau > 0, noise_std >= 0");
        if (window == 0 || horizon == 0 || input_dim == 0 || hidden_dim == 0 || n_layers == 0)
            throw std::invalid_argument("ExpertConfig: zero-sized dimension");
    }
};

constexpr double kLogVarClamp = 10.0;

/// Fixed per-sample targets for one mini-batch, assembled from EnhancedTarget
/// rows. All tensors are constants (not tracked on any tape).
struct TargetBatch {
    Tensor means;        // B x H
    Tensor vars;         // B x H
    Tensor categorical;  // (B*H) x K, discrete mode only
    double plogp = 0;    // sum over rows of sum_k p log p, for the KL constant
};

inline TargetBatch make_target_batch(const std::vector<std::vector<EnhancedTarget>>& targets,
                                     const std::vector<std::size_t>& idx, TargetMode mode,
                                     std::size_t n_bins) {
    std::size_t B = idx.size();
    std::size_t H = targets.at(idx.at(0)).size();
    TargetBatch tb;
    tb.means = Tensor::zeros({B, H});
    tb.vars = Tensor::zeros({B, H});
    if (mode == TargetMode::discrete) tb.categorical = Tensor::zeros({B * H, n_bins});
    for (std::size_t b = 0; b < B; ++b) {
        const auto& row = targets[idx[b]];
        for (std::size_t h = 0; h < H; ++h) {
            tb.means(b, h) = row[h].mean;
            tb.vars(b, h) = row[h].variance;
            if (mode == TargetMode::discrete) {
                const auto& p = row[h].categorical.value();
                for (std::size_t k = 0; k < n_bins; ++k) {
                    tb.categorical(b * H + h, k) = p[k];
                    if (p[k] > 0) tb.plogp += p[k] * std::log(p[k]);
                }
            }
        }
    }
    return tb;
}

/// Per-batch kernel bandwidth: median pairwise distance of the target means,
/// falling back to 1.0 when degenerate.
inline double batch_bandwidth(const TargetBatch& tb, double fallback = 1.0) {
    try {
        return median_bandwidth(tb.means.data);
    } catch (const std::invalid_argument&) {
        return fallback;
    }
}

/// Tape version of the closed-form Gaussian kernel expectation, elementwise
/// over same-shaped mean/variance tensors.
inline Tensor kernel_expectation_tape(Tape& t, const Tensor& mu1, const Tensor& v1,
                                      const Tensor& mu2, const Tensor& v2, double kappa) {
    Tensor s = t.add_const(t.add(v1, v2), kappa * kappa);
    Tensor arg = t.scale(t.mul(t.square(t.sub(mu1, mu2)), t.pow_scalar(s, -1.0)), -0.5);
    return t.mul(t.scale(t.pow_scalar(s, -0.5), kappa), t.exp(arg));
}

/// Multi-expert LDL model: N bidirectional LSTM experts with Gaussian (or
/// categorical) heads and a temperature-gated MLP over the flattened window.
class MultiExpertModel {
public:
    ExpertConfig cfg;
    ParamSet params;

    explicit MultiExpertModel(ExpertConfig config, std::uint64_t seed) : cfg(config) {
        cfg.validate();
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < cfg.n_experts; ++i) {
            std::string prefix = "expert" + std::to_string(i);
            ExpertParams e;
            e.lstm = BiLstm::create(params, prefix + ".lstm", cfg.input_dim, cfg.hidden_dim,
                                    cfg.n_layers, rng);
            std::size_t state = 2 * cfg.hidden_dim;
            if (cfg.mode == TargetMode::continuous) {
                e.mean_head = Mlp::create(params, prefix + ".mean", state, cfg.head_hidden,
                                          cfg.horizon, rng);
                e.var_head = Mlp::create(params, prefix + ".var", state, cfg.head_hidden,
                                         cfg.horizon, rng);
            } else {
                e.logit_head = Mlp::create(params, prefix + ".logits", state, cfg.head_hidden,
                                           cfg.horizon * cfg.n_bins, rng);
            }
            experts_.push_back(e);
        }
        gate_ = Mlp::create(params, "gate", cfg.window * cfg.input_dim, cfg.gate_hidden,
                            cfg.n_experts, rng);
    }

    std::vector<Tensor> make_leaves(Tape& t) const {
        std::vector<Tensor> leaves;
        leaves.reserve(params.size());
        for (const auto& p : params.values) leaves.push_back(t.leaf(p));
        return leaves;
    }

    struct Forward {
        std::vector<Tensor> mu;      // per expert, B x H (continuous)
        std::vector<Tensor> logvar;  // per expert, B x H, clamped
        std::vector<Tensor> logits;  // per expert, B x (H*K) (discrete)
        std::vector<Tensor> repr;    // per expert, B x 2h final state
        Tensor gate_weights;         // B x N
        Tensor gate_logits;          // B x N pre-noise
    };

    /// X is the flattened batch (B x w*d), step-major per row. During
    /// training, Gaussian noise is added to the gate logits; the noise stream
    /// is deterministic per noise_seed.
    Forward forward(Tape& t, const std::vector<Tensor>& leaves, const Tensor& X, bool training,
                    std::uint64_t noise_seed = 0) const {
        if (X.cols() != cfg.window * cfg.input_dim)
            throw std::invalid_argument("MultiExpertModel::forward: input width mismatch " +
                                        Tensor::shape_str(X.shape));
        std::vector<Tensor> xs(cfg.window);
        for (std::size_t step = 0; step < cfg.window; ++step)
            xs[step] = t.slice_cols(X, step * cfg.input_dim, cfg.input_dim);

        Forward out;
        for (const auto& e : experts_) {
            auto r = bilstm_forward(t, e.lstm, leaves, xs);
            out.repr.push_back(r.final_state);
            if (cfg.mode == TargetMode::continuous) {
                out.mu.push_back(e.mean_head.forward(t, leaves, r.final_state));
                out.logvar.push_back(
                    t.clamp(e.var_head.forward(t, leaves, r.final_state), -kLogVarClamp, kLogVarClamp));
            } else {
                out.logits.push_back(e.logit_head.forward(t, leaves, r.final_state));
            }
        }
        out.gate_logits = gate_.forward(t, leaves, X);
        Tensor noisy = out.gate_logits;
        if (training && cfg.noise_std > 0) {
            std::mt19937_64 rng(noise_seed);
            std::normal_distribution<double> n(0.0, cfg.noise_std);
            Tensor eps = Tensor::zeros(noisy.shape);
            for (auto& v : eps.data) v = n(rng);
            noisy = t.add(noisy, eps);
        }
        out.gate_weights = t.softmax_with_temperature(noisy, cfg.temperature);
        return out;
    }

    /// Per-sample, per-step predictive distributions (data-level).
    std::vector<std::vector<GaussianMixture1D>> mixtures(const Forward& f) const {
        require_continuous("mixtures");
        std::size_t B = f.gate_weights.rows(), H = cfg.horizon, N = cfg.n_experts;
        std::vector<std::vector<GaussianMixture1D>> out(B, std::vector<GaussianMixture1D>(H));
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < H; ++h) {
                GaussianMixture1D m;
                for (std::size_t i = 0; i < N; ++i) {
                    m.weights.push_back(f.gate_weights(b, i));
                    m.means.push_back(f.mu[i](b, h));
                    m.vars.push_back(std::exp(f.logvar[i](b, h)));
                }
                out[b][h] = std::move(m);
            }
        return out;
    }

    /// Gate-weighted average of per-expert softmaxed categoricals.
    std::vector<std::vector<CategoricalDist>> categorical_mixtures(const Forward& f) const {
        if (cfg.mode != TargetMode::discrete)
            throw std::logic_error("categorical_mixtures: model is continuous");
        std::size_t B = f.gate_weights.rows(), H = cfg.horizon, K = cfg.n_bins;
        std::vector<std::vector<CategoricalDist>> out(B, std::vector<CategoricalDist>(H));
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < H; ++h) {
                std::vector<double> q(K, 0.0);
                for (std::size_t i = 0; i < cfg.n_experts; ++i) {
                    // softmax over the K logits of this step
                    double mx = -1e300;
                    for (std::size_t k = 0; k < K; ++k)
                        mx = std::max(mx, f.logits[i](b, h * K + k));
                    double z = 0;
                    std::vector<double> e(K);
                    for (std::size_t k = 0; k < K; ++k) {
                        e[k] = std::exp(f.logits[i](b, h * K + k) - mx);
                        z += e[k];
                    }
                    for (std::size_t k = 0; k < K; ++k) q[k] += f.gate_weights(b, i) * e[k] / z;
                }
                out[b][h].probs = std::move(q);
            }
        return out;
    }

    /// Point forecast: mixture mean (continuous) or expected bin center.
    std::vector<std::vector<double>> predict_point(const Forward& f) const {
        std::size_t B = f.gate_weights.rows(), H = cfg.horizon;
        std::vector<std::vector<double>> out(B, std::vector<double>(H, 0.0));
        if (cfg.mode == TargetMode::continuous) {
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t i = 0; i < cfg.n_experts; ++i)
                        out[b][h] += f.gate_weights(b, i) * f.mu[i](b, h);
        } else {
            EnhanceConfig bc;
            bc.n_bins = cfg.n_bins;
            bc.bin_low = cfg.bin_low;
            bc.bin_high = cfg.bin_high;
            auto centers = bin_centers(bc);
            auto cats = categorical_mixtures(f);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t k = 0; k < cfg.n_bins; ++k)
                        out[b][h] += cats[b][h].probs[k] * centers[k];
        }
        return out;
    }

    // ---- losses (tape-tracked) ----

    /// Mean closed-form MMD^2 between the predicted mixture and the Gaussian
    /// target, per sample and horizon step (continuous mode); mean categorical
    /// KL(target || prediction) in discrete mode.
    Tensor loss_distance(Tape& t, const Forward& f, const TargetBatch& tb, double kappa) const {
        if (cfg.mode == TargetMode::discrete) return discrete_distance(t, f, tb);
        std::size_t N = cfg.n_experts, H = cfg.horizon;
        std::vector<Tensor> var(N), gate_col(N);
        for (std::size_t i = 0; i < N; ++i) {
            var[i] = t.exp(f.logvar[i]);
            gate_col[i] = t.col(f.gate_weights, i);
        }
        // E_QQ: constant in the parameters
        Tensor eqq = tb.vars;
        for (auto& v : eqq.data) v = kappa / std::sqrt(2.0 * v + kappa * kappa);
        eqq.node = -1;

        Tensor mmd = eqq;
        for (std::size_t i = 0; i < N; ++i) {
            // cross term with the target, weighted by g_i
            Tensor k_pq = kernel_expectation_tape(t, f.mu[i], var[i], tb.means, tb.vars, kappa);
            mmd = t.sub(mmd, t.scale(t.mul_colvec(k_pq, gate_col[i]), 2.0));
            // self terms
            for (std::size_t j = i; j < N; ++j) {
                Tensor k_pp = kernel_expectation_tape(t, f.mu[i], var[i], f.mu[j], var[j], kappa);
                Tensor w = t.mul(gate_col[i], gate_col[j]);
                Tensor term = t.mul_colvec(k_pp, w);
                mmd = t.add(mmd, i == j ? term : t.scale(term, 2.0));
            }
        }
        (void)H;
        return t.mean(mmd);
    }

    /// Variance of the mean expert-utilization vector u over the batch.
    Tensor loss_balance(Tape& t, const Forward& f) const {
        return t.variance(t.mean_rows(f.gate_weights));
    }

    /// Sum of pairwise cosine similarities between batch-averaged expert
    /// representations, over ordered pairs i != j.
    Tensor loss_diversity(Tape& t, const Forward& f) const {
        if (cfg.n_experts < 2) return t.scale(t.sum(Tensor::scalar(0.0)), 0.0);
        std::vector<Tensor> e(cfg.n_experts);
        for (std::size_t i = 0; i < cfg.n_experts; ++i) e[i] = t.mean_rows(f.repr[i]);
        Tensor total = Tensor::scalar(0.0);
        bool first = true;
        for (std::size_t i = 0; i < cfg.n_experts; ++i)
            for (std::size_t j = i + 1; j < cfg.n_experts; ++j) {
                Tensor c = t.cosine_similarity(e[i], e[j]);
                total = first ? c : t.add(total, c);
                first = false;
            }
        return t.scale(total, 2.0);  // ordered pairs count both (i,j) and (j,i)
    }

    /// Composite objective: distance + lambda1 * balance + lambda2 * diversity.
    Tensor loss_total(Tape& t, const Forward& f, const TargetBatch& tb, double kappa,
                      double lambda1, double lambda2) const {
        if (lambda1 < 0 || lambda2 < 0)
            throw std::invalid_argument("loss_total: weights must be >= 0");
        Tensor loss = loss_distance(t, f, tb, kappa);
        if (lambda1 > 0) loss = t.add(loss, t.scale(loss_balance(t, f), lambda1));
        if (lambda2 > 0) loss = t.add(loss, t.scale(loss_diversity(t, f), lambda2));
        return loss;
    }

private:
    struct ExpertParams {
        BiLstm lstm;
        Mlp mean_head{}, var_head{}, logit_head{};
    };

    std::vector<ExpertParams> experts_;
    Mlp gate_{};

    void require_continuous(const char* what) const {
        if (cfg.mode != TargetMode::continuous)
            throw std::logic_error(std::string(what) + ": model is discrete");
    }

    Tensor discrete_distance(Tape& t, const Forward& f, const TargetBatch& tb) const {
        std::size_t B = f.gate_weights.rows(), H = cfg.horizon, K = cfg.n_bins;
        Tensor q;  // mixture probabilities, (B*H) x K
        for (std::size_t i = 0; i < cfg.n_experts; ++i) {
            Tensor probs = t.softmax_with_temperature(
                t.reshape(f.logits[i], {B * H, K}), 1.0);
            Tensor weighted =
                t.mul_colvec(probs, t.repeat_interleave(t.col(f.gate_weights, i), H));
            q = i == 0 ? weighted : t.add(q, weighted);
        }
        // KL(P||Q) = sum P log P - sum P log(Q + eps), averaged over rows
        Tensor cross = t.sum(t.mul(tb.categorical, t.log(t.add_const(q, 1e-10))));
        Tensor kl = t.sub(Tensor::scalar(tb.plogp), cross);
        return t.div_scalar(kl, static_cast<double>(B * H));
    }
};

/// Batch rows of a windowed dataset into a (B x w*d) constant tensor.
inline Tensor batch_inputs(const std::vector<std::vector<double>>& inputs,
                           const std::vector<std::size_t>& idx) {
    std::size_t B = idx.size(), W = inputs.at(idx.at(0)).size();
    Tensor X = Tensor::zeros({B, W});
    for (std::size_t b = 0; b < B; ++b) {
        const auto& row = inputs[idx[b]];
        if (row.size() != W) throw std::invalid_argument("batch_inputs: ragged inputs");
        std::copy(row.begin(), row.end(), X.data.begin() + static_cast<long>(b * W));
    }
    return X;
}

/// Mean gate weight per expert over a batch.
inline std::vector<double> utilization(const Tensor& gate_weights) {
    std::size_t B = gate_weights.rows(), N = gate_weights.cols();
    std::vector<double> u(N, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < N; ++i) u[i] += gate_weights(b, i);
    for (auto& v : u) v /= static_cast<double>(B);
    return u;
}

}  // namespace ldlmoe
