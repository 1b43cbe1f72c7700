#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldlmoe/adam.hpp"
#include "ldlmoe/enhance.hpp"
#include "ldlmoe/experts.hpp"
#include "ldlmoe/pattern.hpp"
#include "ldlmoe/series.hpp"

namespace ldlmoe {

// ---- single-expert point-MSE baseline ----

struct BaselineConfig {
    std::size_t hidden_dim = 64;
    std::size_t n_layers = 2;
    std::size_t window = 20;
    std::size_t horizon = 28;
    std::size_t input_dim = 1;
    std::size_t head_hidden = 32;

    void validate() const {
        if (window == 0 || horizon == 0 || input_dim == 0 || hidden_dim == 0 || n_layers == 0)
            throw std::invalid_argument("BaselineConfig: zero-sized dimension");
    }
};

/// One BiLSTM with a mean head, trained on squared error. Serves as the
/// equal-budget point-forecast reference.
class LstmBaseline {
public:
    BaselineConfig cfg;
    ParamSet params;

    explicit LstmBaseline(BaselineConfig config, std::uint64_t seed) : cfg(config) {
        cfg.validate();
        std::mt19937_64 rng(seed);
        lstm_ = BiLstm::create(params, "baseline.lstm", cfg.input_dim, cfg.hidden_dim,
                               cfg.n_layers, rng);
        head_ = Mlp::create(params, "baseline.mean", 2 * cfg.hidden_dim, cfg.head_hidden,
                            cfg.horizon, rng);
    }

    std::vector<Tensor> make_leaves(Tape& t) const {
        std::vector<Tensor> leaves;
        leaves.reserve(params.size());
        for (const auto& p : params.values) leaves.push_back(t.leaf(p));
        return leaves;
    }

    Tensor forward_mu(Tape& t, const std::vector<Tensor>& leaves, const Tensor& X) const {
        if (X.cols() != cfg.window * cfg.input_dim)
            throw std::invalid_argument("LstmBaseline::forward: input width mismatch");
        std::vector<Tensor> xs(cfg.window);
        for (std::size_t step = 0; step < cfg.window; ++step)
            xs[step] = t.slice_cols(X, step * cfg.input_dim, cfg.input_dim);
        auto r = bilstm_forward(t, lstm_, leaves, xs);
        return head_.forward(t, leaves, r.final_state);
    }

    Tensor loss_mse(Tape& t, const Tensor& mu, const Tensor& target_means) const {
        return t.mean(t.square(t.sub(mu, target_means)));
    }

private:
    BiLstm lstm_;
    Mlp head_{};
};

// ---- configuration ----

enum class ModelKind { multi_expert, pattern_aware, lstm_baseline };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::multi_expert: return "multi_expert";
        case ModelKind::pattern_aware: return "pattern_aware";
        case ModelKind::lstm_baseline: return "lstm_baseline";
    }
    throw std::logic_error("bad ModelKind");
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "multi_expert") return ModelKind::multi_expert;
    if (s == "pattern_aware") return ModelKind::pattern_aware;
    if (s == "lstm_baseline") return ModelKind::lstm_baseline;
    throw std::invalid_argument("unknown model kind: " + s);
}

struct TrainConfig {
    double lr = 1e-3;
    std::size_t max_epochs = 100;
    std::size_t patience = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    ModelKind model = ModelKind::multi_expert;
    double lambda1 = 0.01;
    double lambda2 = 0.001;
    double clip_norm = 5.0;
    bool standardize = true;
    // pattern model: adopt the detected period for the seasonal regularizer
    bool auto_period = true;
    RegWeights regs;
    EnhanceConfig enhance;
    SplitSpec split;
    ExpertConfig expert;
    PatternConfig pattern;
    BaselineConfig baseline;

    void validate() const {
        if (lr <= 0) throw std::invalid_argument("TrainConfig: lr must be > 0");
        if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (clip_norm <= 0) throw std::invalid_argument("TrainConfig: clip_norm must be > 0");
        regs.validate();
    }

    std::size_t window() const {
        switch (model) {
            case ModelKind::multi_expert: return expert.window;
            case ModelKind::pattern_aware: return pattern.window;
            case ModelKind::lstm_baseline: return baseline.window;
        }
        throw std::logic_error("bad ModelKind");
    }
    std::size_t horizon() const {
        switch (model) {
            case ModelKind::multi_expert: return expert.horizon;
            case ModelKind::pattern_aware: return pattern.horizon;
            case ModelKind::lstm_baseline: return baseline.horizon;
        }
        throw std::logic_error("bad ModelKind");
    }
};

// ---- json serialization of configs ----

inline void to_json(nlohmann::json& j, const EnhanceConfig& c) {
    j = {{"k_neighbors", c.k_neighbors}, {"kernel_sigma", c.kernel_sigma},
         {"max_lag", c.max_lag},         {"base_window", c.base_window},
         {"lambda_reg", c.lambda_reg},   {"acf_threshold", c.acf_threshold},
         {"n_bins", c.n_bins},           {"bin_low", c.bin_low},
         {"bin_high", c.bin_high}};
}
inline void from_json(const nlohmann::json& j, EnhanceConfig& c) {
    c.k_neighbors = j.value("k_neighbors", c.k_neighbors);
    c.kernel_sigma = j.value("kernel_sigma", c.kernel_sigma);
    c.max_lag = j.value("max_lag", c.max_lag);
    c.base_window = j.value("base_window", c.base_window);
    c.lambda_reg = j.value("lambda_reg", c.lambda_reg);
    c.acf_threshold = j.value("acf_threshold", c.acf_threshold);
    c.n_bins = j.value("n_bins", c.n_bins);
    c.bin_low = j.value("bin_low", c.bin_low);
    c.bin_high = j.value("bin_high", c.bin_high);
}

inline void to_json(nlohmann::json& j, const RegWeights& w) {
    j = {{"smooth", w.smooth}, {"persist", w.persist}, {"period", w.period},
         {"sparse", w.sparse}, {"local", w.local},     {"hetero", w.hetero},
         {"p", w.p}};
}
inline void from_json(const nlohmann::json& j, RegWeights& w) {
    w.smooth = j.value("smooth", w.smooth);
    w.persist = j.value("persist", w.persist);
    w.period = j.value("period", w.period);
    w.sparse = j.value("sparse", w.sparse);
    w.local = j.value("local", w.local);
    w.hetero = j.value("hetero", w.hetero);
    w.p = j.value("p", w.p);
}

inline void to_json(nlohmann::json& j, const ExpertConfig& c) {
    j = {{"n_experts", c.n_experts},   {"hidden_dim", c.hidden_dim},
         {"n_layers", c.n_layers},     {"window", c.window},
         {"horizon", c.horizon},       {"input_dim", c.input_dim},
         {"temperature", c.temperature}, {"noise_std", c.noise_std},
         {"mode", to_string(c.mode)},  {"n_bins", c.n_bins},
         {"bin_low", c.bin_low},       {"bin_high", c.bin_high},
         {"head_hidden", c.head_hidden}, {"gate_hidden", c.gate_hidden}};
}
inline void from_json(const nlohmann::json& j, ExpertConfig& c) {
    c.n_experts = j.value("n_experts", c.n_experts);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.window = j.value("window", c.window);
    c.horizon = j.value("horizon", c.horizon);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.temperature = j.value("temperature", c.temperature);
    c.noise_std = j.value("noise_std", c.noise_std);
    if (j.contains("mode")) c.mode = target_mode_from_string(j.at("mode").get<std::string>());
    c.n_bins = j.value("n_bins", c.n_bins);
    c.bin_low = j.value("bin_low", c.bin_low);
    c.bin_high = j.value("bin_high", c.bin_high);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.gate_hidden = j.value("gate_hidden", c.gate_hidden);
}

inline void to_json(nlohmann::json& j, const PatternConfig& c) {
    j = {{"n_sub", c.n_sub},         {"hidden_dim", c.hidden_dim},
         {"n_layers", c.n_layers},   {"window", c.window},
         {"horizon", c.horizon},     {"input_dim", c.input_dim},
         {"temperature", c.temperature}, {"noise_std", c.noise_std},
         {"head_hidden", c.head_hidden}, {"gate_hidden", c.gate_hidden}};
}
inline void from_json(const nlohmann::json& j, PatternConfig& c) {
    c.n_sub = j.value("n_sub", c.n_sub);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.window = j.value("window", c.window);
    c.horizon = j.value("horizon", c.horizon);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.temperature = j.value("temperature", c.temperature);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.gate_hidden = j.value("gate_hidden", c.gate_hidden);
}

inline void to_json(nlohmann::json& j, const BaselineConfig& c) {
    j = {{"hidden_dim", c.hidden_dim}, {"n_layers", c.n_layers},
         {"window", c.window},         {"horizon", c.horizon},
         {"input_dim", c.input_dim},   {"head_hidden", c.head_hidden}};
}
inline void from_json(const nlohmann::json& j, BaselineConfig& c) {
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.window = j.value("window", c.window);
    c.horizon = j.value("horizon", c.horizon);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
}

inline void to_json(nlohmann::json& j, const SplitSpec& s) {
    j = {{"test_len", s.test_len}, {"val_fraction", s.val_fraction}};
}
inline void from_json(const nlohmann::json& j, SplitSpec& s) {
    s.test_len = j.value("test_len", s.test_len);
    s.val_fraction = j.value("val_fraction", s.val_fraction);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"lr", c.lr},
         {"max_epochs", c.max_epochs},
         {"patience", c.patience},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"model", to_string(c.model)},
         {"lambda1", c.lambda1},
         {"lambda2", c.lambda2},
         {"clip_norm", c.clip_norm},
         {"standardize", c.standardize},
         {"auto_period", c.auto_period},
         {"regs", c.regs},
         {"enhance", c.enhance},
         {"split", c.split},
         {"expert", c.expert},
         {"pattern", c.pattern},
         {"baseline", c.baseline}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.lr = j.value("lr", c.lr);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("model")) c.model = model_kind_from_string(j.at("model").get<std::string>());
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.standardize = j.value("standardize", c.standardize);
    c.auto_period = j.value("auto_period", c.auto_period);
    if (j.contains("regs")) j.at("regs").get_to(c.regs);
    if (j.contains("enhance")) j.at("enhance").get_to(c.enhance);
    if (j.contains("split")) j.at("split").get_to(c.split);
    if (j.contains("expert")) j.at("expert").get_to(c.expert);
    if (j.contains("pattern")) j.at("pattern").get_to(c.pattern);
    if (j.contains("baseline")) j.at("baseline").get_to(c.baseline);
}

// ---- checkpoint ----

/// Per-channel series standardization; channel 0 is the forecast target.
struct SeriesScaler {
    std::vector<double> mean, std;

    void apply(TimeSeries& s) const {
        for (auto& row : s.values)
            for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / std[c];
    }
    double unscale_target(double y) const { return mean.at(0) + std.at(0) * y; }
};

struct Checkpoint {
    TrainConfig cfg;
    SeriesScaler scaler;
    std::optional<std::size_t> period;  // detected seasonal period, if accepted
    std::optional<MultiExpertModel> moe;
    std::optional<PatternModel> pattern;
    std::optional<LstmBaseline> baseline;
    long opt_t = 0;
    std::vector<std::vector<double>> opt_m, opt_v;

    ParamSet& params() {
        switch (cfg.model) {
            case ModelKind::multi_expert: return moe->params;
            case ModelKind::pattern_aware: return pattern->params;
            case ModelKind::lstm_baseline: return baseline->params;
        }
        throw std::logic_error("bad ModelKind");
    }
    const ParamSet& params() const { return const_cast<Checkpoint*>(this)->params(); }

    static Checkpoint fresh(const TrainConfig& cfg) {
        Checkpoint ck;
        ck.cfg = cfg;
        ck.scaler.mean = {0.0};
        ck.scaler.std = {1.0};
        switch (cfg.model) {
            case ModelKind::multi_expert: ck.moe.emplace(cfg.expert, cfg.seed); break;
            case ModelKind::pattern_aware: ck.pattern.emplace(cfg.pattern, cfg.seed); break;
            case ModelKind::lstm_baseline: ck.baseline.emplace(cfg.baseline, cfg.seed); break;
        }
        return ck;
    }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    nlohmann::json j;
    j["version"] = 1;
    j["config"] = ck.cfg;
    j["scaler"] = {{"mean", ck.scaler.mean}, {"std", ck.scaler.std}};
    if (ck.period) j["period"] = *ck.period;
    const auto& ps = ck.params();
    nlohmann::json params;
    params["names"] = ps.names;
    nlohmann::json shapes = nlohmann::json::array(), values = nlohmann::json::array();
    for (const auto& v : ps.values) {
        shapes.push_back(v.shape);
        values.push_back(v.data);
    }
    params["shapes"] = std::move(shapes);
    params["values"] = std::move(values);
    j["params"] = std::move(params);
    j["optimizer"] = {{"t", ck.opt_t}, {"m", ck.opt_m}, {"v", ck.opt_v}};
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f << j.dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    f >> j;
    if (j.value("version", 0) != 1)
        throw std::runtime_error("load_checkpoint: unsupported version in " + path);
    TrainConfig cfg = j.at("config").get<TrainConfig>();
    Checkpoint ck = Checkpoint::fresh(cfg);
    ck.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
    ck.scaler.std = j.at("scaler").at("std").get<std::vector<double>>();
    if (j.contains("period")) ck.period = j.at("period").get<std::size_t>();
    auto& ps = ck.params();
    auto names = j.at("params").at("names").get<std::vector<std::string>>();
    if (names != ps.names)
        throw std::runtime_error("load_checkpoint: parameter layout mismatch in " + path);
    const auto& values = j.at("params").at("values");
    for (std::size_t i = 0; i < ps.values.size(); ++i) {
        auto data = values.at(i).get<std::vector<double>>();
        if (data.size() != ps.values[i].data.size())
            throw std::runtime_error("load_checkpoint: parameter size mismatch in " + path);
        ps.values[i].data = std::move(data);
    }
    const auto& opt = j.at("optimizer");
    ck.opt_t = opt.at("t").get<long>();
    ck.opt_m = opt.at("m").get<std::vector<std::vector<double>>>();
    ck.opt_v = opt.at("v").get<std::vector<std::vector<double>>>();
    return ck;
}

// ---- training ----

struct TrainReport {
    std::vector<double> train_loss, val_loss;            // per epoch
    std::vector<std::vector<double>> utilization;        // per epoch, per expert
    std::size_t stopped_epoch = 0;                        // epochs actually run
    std::size_t best_epoch = 0;                           // 1-based, 0 when untrained
    double best_val = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> period;
};

namespace detail {

struct BatchEval {
    double distance = 0, balance = 0, diversity = 0, regs = 0, total = 0;
    std::vector<double> utilization;
    std::vector<std::vector<double>> grads;  // per parameter tensor
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch) {
    std::uint64_t h = seed;
    h ^= (epoch + 0x9e3779b97f4a7c15ull) + (h << 6) + (h >> 2);
    h ^= (batch + 0x9e3779b97f4a7c15ull) + (h << 6) + (h >> 2);
    return h;
}

}  // namespace detail

/// Windowed data with precomputed enhanced targets, in model (scaled) space.
struct PreparedData {
    Splits splits;
    std::vector<std::vector<EnhancedTarget>> train_targets, val_targets;
    SeriesScaler scaler;
    std::optional<std::size_t> period;
};

/// Standardize, window, split, and run label enhancement once over the
/// training region (time-axis graph smoothing of the rolling variance).
inline PreparedData prepare_data(const TrainConfig& cfg, const TimeSeries& raw) {
    TimeSeries series = raw;
    series.validate();
    std::size_t T = series.values.size();
    std::size_t d = series.values.at(0).size();
    if (cfg.split.test_len >= T) throw std::invalid_argument("prepare_data: test_len >= T");
    std::size_t train_T = T - cfg.split.test_len;

    PreparedData out;
    out.scaler.mean.assign(d, 0.0);
    out.scaler.std.assign(d, 1.0);
    if (cfg.standardize) {
        for (std::size_t c = 0; c < d; ++c) {
            double m = 0;
            for (std::size_t t = 0; t < train_T; ++t) m += series.values[t][c];
            m /= static_cast<double>(train_T);
            double s = 0;
            for (std::size_t t = 0; t < train_T; ++t) {
                double dv = series.values[t][c] - m;
                s += dv * dv;
            }
            s = std::sqrt(s / static_cast<double>(train_T));
            out.scaler.mean[c] = m;
            out.scaler.std[c] = s == 0.0 ? 1.0 : s;
        }
        out.scaler.apply(series);
    }

    auto windows = make_windows(series, cfg.window(), cfg.horizon());
    out.splits = time_split(windows, cfg.split);

    auto target = series.target();
    std::vector<double> train_target(target.begin(), target.begin() + static_cast<long>(train_T));

    std::optional<PeriodInfo> period;
    if (train_T > cfg.enhance.max_lag && cfg.enhance.max_lag >= 2) {
        try {
            auto p = detect_period(train_target, cfg.enhance.max_lag);
            if (p.acf >= cfg.enhance.acf_threshold && p.period + 1 < train_T) {
                period = p;
                out.period = p.period;
            }
        } catch (const std::logic_error&) {
            // constant training region: no period
        }
    }

    bool discrete = cfg.model == ModelKind::multi_expert && cfg.expert.mode == TargetMode::discrete;
    std::vector<double> sigma;
    if (cfg.model != ModelKind::lstm_baseline) {
        auto v_base = base_variance(train_target, cfg.enhance.base_window);
        auto graph = build_adjacency(train_T, period);
        sigma = smooth_variance(v_base, graph, cfg.enhance.lambda_reg);
    }

    auto build = [&](const WindowedDataset& ds) {
        std::vector<std::vector<EnhancedTarget>> rows;
        rows.reserve(ds.size());
        for (std::size_t k = 0; k < ds.size(); ++k) {
            std::vector<double> labels = ds.targets[k];
            if (cfg.model == ModelKind::lstm_baseline) {
                std::vector<double> vars(labels.size(), 1.0);
                rows.push_back(enhance_continuous(labels, vars));
                continue;
            }
            std::vector<double> vars(labels.size());
            for (std::size_t h = 0; h < labels.size(); ++h)
                vars[h] = sigma.at(ds.starts[k] + ds.w + h);
            if (discrete)
                rows.push_back(enhance_discrete(labels, vars, cfg.enhance).first);
            else
                rows.push_back(enhance_continuous(labels, vars));
        }
        return rows;
    };
    out.train_targets = build(out.splits.train);
    out.val_targets = build(out.splits.val);
    return out;
}

/// Deterministic mini-batch training with Adam, global-norm clipping and
/// patience-based early stopping; restores the best-validation parameters.
inline std::pair<Checkpoint, TrainReport> train(const TrainConfig& config, const TimeSeries& raw) {
    TrainConfig cfg = config;
    cfg.validate();
    auto data = prepare_data(cfg, raw);
    if (data.splits.train.empty() || data.splits.val.empty())
        throw std::invalid_argument("train: empty train or val split");
    if (cfg.auto_period && data.period && *data.period >= 2) cfg.regs.p = *data.period;

    Checkpoint ck = Checkpoint::fresh(cfg);
    ck.scaler = data.scaler;
    ck.period = data.period;
    TrainReport report;
    report.period = data.period;
    if (cfg.max_epochs == 0) return {std::move(ck), std::move(report)};

    bool discrete = cfg.model == ModelKind::multi_expert && cfg.expert.mode == TargetMode::discrete;
    std::size_t n_bins = cfg.expert.n_bins;

    // Evaluates one batch; fills gradients only when training.
    auto run_batch = [&](const WindowedDataset& ds,
                         const std::vector<std::vector<EnhancedTarget>>& targets,
                         const std::vector<std::size_t>& idx, bool training,
                         std::uint64_t noise_seed) {
        detail::BatchEval ev;
        Tensor X = batch_inputs(ds.inputs, idx);
        auto tb = make_target_batch(targets, idx,
                                    discrete ? TargetMode::discrete : TargetMode::continuous,
                                    n_bins);
        Tape t;
        Tensor loss;
        switch (cfg.model) {
            case ModelKind::multi_expert: {
                auto& model = *ck.moe;
                auto leaves = model.make_leaves(t);
                auto f = model.forward(t, leaves, X, training, noise_seed);
                double kappa = discrete ? 1.0 : batch_bandwidth(tb);
                Tensor dist = model.loss_distance(t, f, tb, kappa);
                Tensor bal = model.loss_balance(t, f);
                Tensor div = model.loss_diversity(t, f);
                loss = t.add(dist, t.add(t.scale(bal, cfg.lambda1), t.scale(div, cfg.lambda2)));
                ev.distance = dist.data[0];
                ev.balance = bal.data[0];
                ev.diversity = div.data[0];
                ev.utilization = utilization(f.gate_weights);
                if (training) {
                    t.backward(loss);
                    for (const auto& leaf : leaves) ev.grads.push_back(t.grad(leaf));
                }
                break;
            }
            case ModelKind::pattern_aware: {
                auto& model = *ck.pattern;
                auto leaves = model.make_leaves(t);
                auto f = model.forward(t, leaves, X, training, noise_seed);
                double kappa = batch_bandwidth(tb);
                Tensor rv = PatternModel::residuals_squared(f, tb);
                Tensor dist = model.loss_distance(t, f, tb, kappa);
                Tensor bal = model.loss_balance(t, f);
                Tensor div = model.loss_diversity(t, f);
                Tensor regs = t.add(
                    t.add(model.reg_trend_tape(t, f, cfg.regs), model.reg_seasonal_tape(t, f, cfg.regs)),
                    t.add(model.reg_changepoint_tape(t, f, cfg.regs),
                          model.reg_volatility_tape(t, f, rv, cfg.regs)));
                loss = t.add(t.add(dist, regs),
                             t.add(t.scale(bal, cfg.lambda1), t.scale(div, cfg.lambda2)));
                ev.distance = dist.data[0];
                ev.balance = bal.data[0];
                ev.diversity = div.data[0];
                ev.regs = regs.data[0];
                for (std::size_t c = 0; c < 4; ++c) {
                    auto u = utilization(f.comp[c].gate);
                    ev.utilization.insert(ev.utilization.end(), u.begin(), u.end());
                }
                if (training) {
                    t.backward(loss);
                    for (const auto& leaf : leaves) ev.grads.push_back(t.grad(leaf));
                }
                break;
            }
            case ModelKind::lstm_baseline: {
                auto& model = *ck.baseline;
                auto leaves = model.make_leaves(t);
                Tensor mu = model.forward_mu(t, leaves, X);
                loss = model.loss_mse(t, mu, tb.means);
                ev.distance = loss.data[0];
                if (training) {
                    t.backward(loss);
                    for (const auto& leaf : leaves) ev.grads.push_back(t.grad(leaf));
                }
                break;
            }
        }
        ev.total = loss.data[0];
        return ev;
    };

    auto split_loss = [&](const WindowedDataset& ds,
                          const std::vector<std::vector<EnhancedTarget>>& targets) {
        double total = 0;
        std::size_t n = ds.size();
        for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
            std::size_t len = std::min(cfg.batch_size, n - lo);
            std::vector<std::size_t> idx(len);
            for (std::size_t i = 0; i < len; ++i) idx[i] = lo + i;
            total += run_batch(ds, targets, idx, false, 0).total * static_cast<double>(len);
        }
        return total / static_cast<double>(n);
    };

    Adam opt(cfg.lr);
    std::vector<Tensor> best_params;
    std::size_t bad_epochs = 0;
    std::vector<std::size_t> order(data.splits.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(detail::mix_seed(cfg.seed, epoch, 0));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0;
        std::vector<double> epoch_util;
        std::size_t n_train = order.size();
        std::size_t batch_id = 0;
        for (std::size_t lo = 0; lo < n_train; lo += cfg.batch_size, ++batch_id) {
            std::size_t len = std::min(cfg.batch_size, n_train - lo);
            std::vector<std::size_t> idx(order.begin() + static_cast<long>(lo),
                                         order.begin() + static_cast<long>(lo + len));
            auto ev = run_batch(data.splits.train, data.train_targets, idx, true,
                                detail::mix_seed(cfg.seed, epoch, batch_id + 1));
            if (!std::isfinite(ev.total)) {
                std::ostringstream os;
                os << "train: non-finite loss at epoch " << epoch << " batch " << batch_id
                   << " (distance=" << ev.distance << ", balance=" << ev.balance
                   << ", diversity=" << ev.diversity << ", regs=" << ev.regs << ")";
                throw std::runtime_error(os.str());
            }
            clip_global_norm(ev.grads, cfg.clip_norm);
            opt.step(ck.params(), ev.grads);
            epoch_loss += ev.total * static_cast<double>(len);
            if (!ev.utilization.empty()) {
                if (epoch_util.empty()) epoch_util.assign(ev.utilization.size(), 0.0);
                for (std::size_t i = 0; i < ev.utilization.size(); ++i)
                    epoch_util[i] += ev.utilization[i] * static_cast<double>(len);
            }
        }
        epoch_loss /= static_cast<double>(n_train);
        for (auto& u : epoch_util) u /= static_cast<double>(n_train);
        report.train_loss.push_back(epoch_loss);
        report.utilization.push_back(std::move(epoch_util));

        double val = split_loss(data.splits.val, data.val_targets);
        if (!std::isfinite(val)) {
            std::ostringstream os;
            os << "train: non-finite validation loss at epoch " << epoch;
            throw std::runtime_error(os.str());
        }
        report.val_loss.push_back(val);
        report.stopped_epoch = epoch;

        if (val < report.best_val) {
            report.best_val = val;
            report.best_epoch = epoch;
            best_params = ck.params().values;
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.patience) {
            break;
        }
    }

    if (!best_params.empty()) ck.params().values = std::move(best_params);
    ck.opt_t = opt.step_count();
    ck.opt_m = opt.m();
    ck.opt_v = opt.v();
    return {std::move(ck), std::move(report)};
}

// ---- evaluation ----

struct Metrics {
    double rmse = 0, mae = 0, mape = 0;
    double coverage90 = std::numeric_limits<double>::quiet_NaN();
    bool has_coverage = false;
};

/// Pooled point metrics over every (pair, step), with optional 90% interval
/// coverage. Predictions, truths and intervals must be in the same units.
inline Metrics compute_metrics(const std::vector<double>& preds, const std::vector<double>& truths,
                               const std::vector<std::pair<double, double>>* intervals = nullptr) {
    if (preds.size() != truths.size() || preds.empty())
        throw std::invalid_argument("compute_metrics: length mismatch or empty input");
    Metrics m;
    m.rmse = rmse(preds, truths);
    m.mae = mae(preds, truths);
    m.mape = mape(preds, truths);
    if (intervals) {
        if (intervals->size() != truths.size())
            throw std::invalid_argument("compute_metrics: interval length mismatch");
        std::size_t in = 0;
        for (std::size_t i = 0; i < truths.size(); ++i) {
            const auto& [lo, hi] = (*intervals)[i];
            if (truths[i] >= lo && truths[i] <= hi) ++in;
        }
        m.coverage90 = static_cast<double>(in) / static_cast<double>(truths.size());
        m.has_coverage = true;
    }
    return m;
}

/// Evaluate a checkpoint on a windowed dataset given in scaled (model) space.
/// Point metrics are reported in original units via the stored scaler.
inline Metrics evaluate(const Checkpoint& ck, const WindowedDataset& test) {
    if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
    if (test.H != ck.cfg.horizon() || test.w != ck.cfg.window())
        throw std::invalid_argument("evaluate: window/horizon mismatch");
    std::vector<double> preds, truths;
    std::vector<std::pair<double, double>> intervals;
    bool probabilistic = ck.cfg.model != ModelKind::lstm_baseline;
    const std::size_t chunk = 64;
    for (std::size_t lo = 0; lo < test.size(); lo += chunk) {
        std::size_t len = std::min(chunk, test.size() - lo);
        std::vector<std::size_t> idx(len);
        for (std::size_t i = 0; i < len; ++i) idx[i] = lo + i;
        Tensor X = batch_inputs(test.inputs, idx);
        Tape t;
        std::vector<std::vector<double>> points;
        std::vector<std::vector<GaussianMixture1D>> mixtures;
        switch (ck.cfg.model) {
            case ModelKind::multi_expert: {
                auto leaves = ck.moe->make_leaves(t);
                auto f = ck.moe->forward(t, leaves, X, false);
                points = ck.moe->predict_point(f);
                if (ck.cfg.expert.mode == TargetMode::continuous)
                    mixtures = ck.moe->mixtures(f);
                else
                    probabilistic = false;  // interval from bins not supported
                break;
            }
            case ModelKind::pattern_aware: {
                auto leaves = ck.pattern->make_leaves(t);
                auto f = ck.pattern->forward(t, leaves, X, false);
                points = ck.pattern->predict_point(f);
                mixtures = ck.pattern->mixtures(f);
                break;
            }
            case ModelKind::lstm_baseline: {
                auto leaves = ck.baseline->make_leaves(t);
                Tensor mu = ck.baseline->forward_mu(t, leaves, X);
                points.assign(len, std::vector<double>(test.H));
                for (std::size_t b = 0; b < len; ++b)
                    for (std::size_t h = 0; h < test.H; ++h) points[b][h] = mu(b, h);
                break;
            }
        }
        for (std::size_t b = 0; b < len; ++b)
            for (std::size_t h = 0; h < test.H; ++h) {
                preds.push_back(ck.scaler.unscale_target(points[b][h]));
                truths.push_back(ck.scaler.unscale_target(test.targets[lo + b][h]));
                if (probabilistic) {
                    auto [ilo, ihi] = mixtures[b][h].central_interval(0.9);
                    intervals.emplace_back(ck.scaler.unscale_target(ilo),
                                           ck.scaler.unscale_target(ihi));
                }
            }
    }
    return compute_metrics(preds, truths, probabilistic ? &intervals : nullptr);
}

inline nlohmann::json metrics_json(const Metrics& m) {
    nlohmann::json j = {{"rmse", m.rmse}, {"mae", m.mae}, {"mape", m.mape}};
    if (m.has_coverage) j["coverage90"] = m.coverage90;
    return j;
}

inline nlohmann::json report_json(const TrainReport& r) {
    nlohmann::json j;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["utilization"] = r.utilization;
    j["stopped_epoch"] = r.stopped_epoch;
    j["best_epoch"] = r.best_epoch;
    j["best_val"] = r.best_val;
    if (r.period) j["period"] = *r.period;
    return j;
}

}  // namespace ldlmoe
