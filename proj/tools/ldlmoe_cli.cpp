// Command-line front end: synthetic data generation, label enhancement,
// training, evaluation and decomposition export.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ldlmoe/csv.hpp"
#include "ldlmoe/enhance.hpp"
#include "ldlmoe/pattern.hpp"
#include "ldlmoe/synth.hpp"
#include "ldlmoe/train.hpp"

namespace {

using namespace ldlmoe;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::vector<std::pair<std::size_t, double>> parse_pairs(const std::string& text) {
    // "t:value,t:value" -> list of (t, value)
    std::vector<std::pair<std::size_t, double>> out;
    if (text.empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("expected t:value pairs, got '" + item + "'");
        out.emplace_back(static_cast<std::size_t>(std::stoul(item.substr(0, colon))),
                         std::stod(item.substr(colon + 1)));
    }
    return out;
}

TrainConfig load_train_config(const std::string& explicit_path) {
    std::string path = explicit_path;
    if (path.empty()) {
        if (const char* env = std::getenv("LDLMOE_CONFIG")) path = env;
    }
    TrainConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    f >> j;
    j.get_to(cfg);
    return cfg;
}

TimeSeries load_single_series(const std::string& path) {
    auto all = load_series_csv(path);
    if (all.empty()) throw std::runtime_error("no series found in " + path);
    if (all.size() > 1)
        throw std::runtime_error("expected a single series in " + path + ", found " +
                                 std::to_string(all.size()));
    return std::move(all.front());
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << j.dump(1) << '\n';
}

int cmd_synth(const SynthSpec& spec, const std::string& out) {
    auto d = synthesize(spec);
    std::vector<std::vector<double>> rows;
    rows.reserve(spec.T);
    for (std::size_t t = 0; t < spec.T; ++t)
        rows.push_back({static_cast<double>(t), d.y[t], d.trend_true[t], d.seasonal_true[t],
                        d.cp_true[t], d.noise_sd_true[t]});
    write_csv(out, {"t", "y", "trend_true", "seasonal_true", "cp_true", "noise_sd_true"}, rows);
    return kExitOk;
}

int cmd_enhance(const std::string& config_path, const std::string& data, const std::string& out,
                const std::string& mode) {
    TrainConfig cfg = load_train_config(config_path);
    const EnhanceConfig& ec = cfg.enhance;
    auto series = load_single_series(data);
    auto target = series.target();

    std::optional<PeriodInfo> period;
    if (target.size() > ec.max_lag && ec.max_lag >= 2) {
        try {
            auto p = detect_period(target, ec.max_lag);
            if (p.acf >= ec.acf_threshold && p.period + 1 < target.size()) period = p;
        } catch (const std::logic_error&) {
        }
    }
    auto v_base = base_variance(target, ec.base_window);
    auto graph = build_adjacency(target.size(), period);
    auto sigma = smooth_variance(v_base, graph, ec.lambda_reg);

    std::vector<std::string> header{"t", "y", "mean", "variance"};
    std::vector<std::vector<double>> rows;
    if (mode == "discrete") {
        for (std::size_t k = 0; k < ec.n_bins; ++k) header.push_back("p_" + std::to_string(k));
        auto [enhanced, clamped] = enhance_discrete(target, sigma, ec);
        if (clamped > 0)
            std::cerr << "warning: " << clamped << " labels outside the bin range were clamped\n";
        for (std::size_t t = 0; t < target.size(); ++t) {
            std::vector<double> row{static_cast<double>(t), target[t], enhanced[t].mean,
                                    enhanced[t].variance};
            for (double p : *enhanced[t].categorical) row.push_back(p);
            rows.push_back(std::move(row));
        }
    } else if (mode == "continuous") {
        auto enhanced = enhance_continuous(target, sigma);
        for (std::size_t t = 0; t < target.size(); ++t)
            rows.push_back({static_cast<double>(t), target[t], enhanced[t].mean,
                            enhanced[t].variance});
    } else {
        throw std::invalid_argument("unknown mode: " + mode);
    }
    write_csv(out, header, rows);
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out,
              std::optional<std::uint64_t> seed, const std::string& model, const std::string& mode,
              const std::string& report_path) {
    TrainConfig cfg = load_train_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!model.empty()) cfg.model = model_kind_from_string(model);
    if (!mode.empty()) cfg.expert.mode = target_mode_from_string(mode);
    auto series = load_single_series(data);
    auto [ck, report] = train(cfg, series);
    save_checkpoint(out, ck);
    if (!report_path.empty()) write_json(report_path, report_json(report));
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data, const std::string& out) {
    auto ck = load_checkpoint(ckpt_path);
    auto series = load_single_series(data);
    ck.scaler.apply(series);
    auto windows = make_windows(series, ck.cfg.window(), ck.cfg.horizon());
    auto splits = time_split(windows, ck.cfg.split);
    auto metrics = evaluate(ck, splits.test);
    auto j = metrics_json(metrics);
    std::cout << j.dump() << '\n';
    if (!out.empty()) write_json(out, j);
    return kExitOk;
}

int cmd_decompose(const std::string& ckpt_path, const std::string& data, const std::string& out) {
    auto ck = load_checkpoint(ckpt_path);
    if (ck.cfg.model != ModelKind::pattern_aware)
        throw std::runtime_error("decompose requires a pattern_aware checkpoint");
    auto series = load_single_series(data);
    ck.scaler.apply(series);
    auto windows = make_windows(series, ck.cfg.window(), ck.cfg.horizon());
    auto table = decompose_table(*ck.pattern, windows.inputs, windows.targets, windows.starts);
    write_csv(out, table.header, table.rows);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-expert label distribution forecasting toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic series CSV");
    SynthSpec spec;
    std::string synth_out, changepoints_text, regimes_text;
    synth->add_option("--out", synth_out, "Output CSV path")->required();
    synth->add_option("--seed", spec.seed, "RNG seed");
    synth->add_option("-T,--length", spec.T, "Series length");
    synth->add_option("--slope", spec.trend_slope, "Trend slope");
    synth->add_option("--curvature", spec.trend_curvature, "Trend curvature");
    synth->add_option("--period", spec.period, "Seasonal period");
    synth->add_option("--amplitude", spec.amplitude, "Seasonal amplitude");
    synth->add_option("--sigma", spec.base_sigma, "Base noise sigma");
    synth->add_option("--changepoints", changepoints_text, "Level shifts, t:shift[,t:shift...]");
    synth->add_option("--regimes", regimes_text, "Volatility regimes, t:multiplier[,...]");

    // enhance
    auto* enh = app.add_subcommand("enhance", "Write enhanced label distributions");
    std::string enh_config, enh_data, enh_out, enh_mode = "continuous";
    enh->add_option("--config", enh_config, "Config JSON path");
    enh->add_option("--data", enh_data, "Input series CSV")->required();
    enh->add_option("--out", enh_out, "Output CSV path")->required();
    enh->add_option("--mode", enh_mode, "continuous | discrete");

    // train
    auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
    std::string tr_config, tr_data, tr_out, tr_model, tr_mode, tr_report;
    std::optional<std::uint64_t> tr_seed;
    tr->add_option("--config", tr_config, "Config JSON path");
    tr->add_option("--data", tr_data, "Input series CSV")->required();
    tr->add_option("--out", tr_out, "Checkpoint output path")->required();
    tr->add_option("--seed", tr_seed, "Override config seed");
    tr->add_option("--model", tr_model, "multi_expert | pattern_aware | lstm_baseline");
    tr->add_option("--mode", tr_mode, "continuous | discrete");
    tr->add_option("--report", tr_report, "TrainReport JSON output path");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    std::string ev_ckpt, ev_data, ev_out;
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
    ev->add_option("--data", ev_data, "Input series CSV")->required();
    ev->add_option("--out", ev_out, "Also write metrics JSON here");

    // decompose
    auto* dec = app.add_subcommand("decompose", "Export the component decomposition CSV");
    std::string dec_ckpt, dec_data, dec_out;
    dec->add_option("--ckpt", dec_ckpt, "Checkpoint path")->required();
    dec->add_option("--data", dec_data, "Input series CSV")->required();
    dec->add_option("--out", dec_out, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        spec.changepoints = parse_pairs(changepoints_text);
        spec.vol_regimes = parse_pairs(regimes_text);
        if (synth->parsed()) return cmd_synth(spec, synth_out);
        if (enh->parsed()) return cmd_enhance(enh_config, enh_data, enh_out, enh_mode);
        if (tr->parsed())
            return cmd_train(tr_config, tr_data, tr_out, tr_seed, tr_model, tr_mode, tr_report);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_out);
        if (dec->parsed()) return cmd_decompose(dec_ckpt, dec_data, dec_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
