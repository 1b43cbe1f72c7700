#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ldlmoe/adam.hpp"
#include "ldlmoe/tape.hpp"

namespace ldlmoe {

/// Parameter indices (into a ParamSet) for one LSTM direction of one layer.
/// Gate layout in the 4h axis: input, forget, cell, output.
struct LstmDirection {
    std::size_t w_ih, w_hh, b;
};

struct BiLstm {
    std::size_t input_dim = 0;
    std::size_t hidden = 0;
    std::size_t n_layers = 0;
    std::vector<LstmDirection> fwd, bwd;  // one entry per layer

    static BiLstm create(ParamSet& ps, const std::string& prefix, std::size_t input_dim,
                         std::size_t hidden, std::size_t n_layers, std::mt19937_64& rng) {
        BiLstm m;
        m.input_dim = input_dim;
        m.hidden = hidden;
        m.n_layers = n_layers;
        for (std::size_t layer = 0; layer < n_layers; ++layer) {
            std::size_t in_dim = layer == 0 ? input_dim : 2 * hidden;
            for (auto* dir : {&m.fwd, &m.bwd}) {
                std::string tag = prefix + ".l" + std::to_string(layer) +
                                  (dir == &m.fwd ? ".fwd" : ".bwd");
                double s_in = 1.0 / std::sqrt(static_cast<double>(in_dim));
                double s_h = 1.0 / std::sqrt(static_cast<double>(hidden));
                LstmDirection d;
                d.w_ih = ps.add(tag + ".w_ih", {in_dim, 4 * hidden}, s_in, rng);
                d.w_hh = ps.add(tag + ".w_hh", {hidden, 4 * hidden}, s_h, rng);
                d.b = ps.add(tag + ".b", {4 * hidden}, s_h, rng);
                dir->push_back(d);
            }
        }
        return m;
    }
};

namespace detail {

/// One direction over a time-major sequence of (B x in_dim) inputs.
/// Returns per-step hidden states; the last entry is h_T for this direction.
inline std::vector<Tensor> lstm_direction(Tape& t, const LstmDirection& dir,
                                          const std::vector<Tensor>& leaves,
                                          const std::vector<Tensor>& xs, std::size_t hidden,
                                          bool reversed) {
    std::size_t B = xs[0].rows();
    Tensor h = Tensor::zeros({B, hidden});
    Tensor c = Tensor::zeros({B, hidden});
    std::vector<Tensor> outputs(xs.size());
    for (std::size_t step = 0; step < xs.size(); ++step) {
        std::size_t idx = reversed ? xs.size() - 1 - step : step;
        Tensor gates = t.add(t.matmul(xs[idx], leaves[dir.w_ih]), t.matmul(h, leaves[dir.w_hh]));
        gates = t.add_rowvec(gates, leaves[dir.b]);
        Tensor i = t.sigmoid(t.slice_cols(gates, 0, hidden));
        Tensor f = t.sigmoid(t.slice_cols(gates, hidden, hidden));
        Tensor g = t.tanh(t.slice_cols(gates, 2 * hidden, hidden));
        Tensor o = t.sigmoid(t.slice_cols(gates, 3 * hidden, hidden));
        c = t.add(t.mul(f, c), t.mul(i, g));
        h = t.mul(o, t.tanh(c));
        outputs[idx] = h;
    }
    return outputs;
}

}  // namespace detail

struct BiLstmResult {
    std::vector<Tensor> outputs;  // per step, B x 2h (last layer)
    Tensor final_state;           // B x 2h: concat of forward h_T and backward h_1
};

/// Stacked bidirectional forward pass. `leaves` is the per-forward leaf list
/// aligned with the ParamSet.
inline BiLstmResult bilstm_forward(Tape& t, const BiLstm& m, const std::vector<Tensor>& leaves,
                                   std::vector<Tensor> xs) {
    Tensor fwd_last, bwd_last;
    for (std::size_t layer = 0; layer < m.n_layers; ++layer) {
        auto fh = detail::lstm_direction(t, m.fwd[layer], leaves, xs, m.hidden, false);
        auto bh = detail::lstm_direction(t, m.bwd[layer], leaves, xs, m.hidden, true);
        std::vector<Tensor> merged(xs.size());
        for (std::size_t step = 0; step < xs.size(); ++step)
            merged[step] = t.concat(fh[step], bh[step]);
        fwd_last = fh.back();
        bwd_last = bh.front();
        xs = std::move(merged);
    }
    return {std::move(xs), t.concat(fwd_last, bwd_last)};
}

/// Two-layer MLP with tanh hidden activation.
struct Mlp {
    std::size_t w1, b1, w2, b2;

    static Mlp create(ParamSet& ps, const std::string& prefix, std::size_t in_dim,
                      std::size_t hidden, std::size_t out_dim, std::mt19937_64& rng) {
        double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
        double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
        return Mlp{ps.add(prefix + ".w1", {in_dim, hidden}, s1, rng),
                   ps.add(prefix + ".b1", {hidden}, s1, rng),
                   ps.add(prefix + ".w2", {hidden, out_dim}, s2, rng),
                   ps.add(prefix + ".b2", {out_dim}, s2, rng)};
    }

    Tensor forward(Tape& t, const std::vector<Tensor>& leaves, const Tensor& x) const {
        Tensor h = t.tanh(t.add_rowvec(t.matmul(x, leaves[w1]), leaves[b1]));
        return t.add_rowvec(t.matmul(h, leaves[w2]), leaves[b2]);
    }
};

}  // namespace ldlmoe
