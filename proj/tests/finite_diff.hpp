#pragma once

// Central finite-difference gradient oracle for test use. Independent of the
// tape's backward pass: it only re-runs forward evaluations.

#include <cmath>
#include <functional>
#include <vector>

#include "ldlmoe/tape.hpp"

namespace ldlmoe::testing {

using ForwardFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckResult {
    double max_rel_err = 0;
    double max_abs_err = 0;
    bool ok = true;
};

inline double eval_forward(const ForwardFn& f, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) leaves.push_back(tape.leaf(in));
    return f(tape, leaves).data[0];
}

/// Compares tape gradients against central differences at h. A component
/// passes if relative error < rel_tol, or absolute error < abs_tol near zero.
inline GradCheckResult grad_check(const ForwardFn& f, std::vector<Tensor> inputs,
                                  double h = 1e-5, double rel_tol = 1e-4,
                                  double abs_tol = 1e-7) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) leaves.push_back(tape.leaf(in));
    Tensor loss = f(tape, leaves);
    tape.backward(loss);

    GradCheckResult res;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto& g = tape.grad(leaves[i]);
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            auto plus = inputs;
            auto minus = inputs;
            plus[i].data[j] += h;
            minus[i].data[j] -= h;
            double fd = (eval_forward(f, plus) - eval_forward(f, minus)) / (2.0 * h);
            double abs_err = std::fabs(g[j] - fd);
            double denom = std::max(std::fabs(g[j]), std::fabs(fd));
            double rel_err = denom > 0 ? abs_err / denom : 0.0;
            res.max_abs_err = std::max(res.max_abs_err, abs_err);
            res.max_rel_err = std::max(res.max_rel_err, rel_err);
            if (rel_err >= rel_tol && abs_err >= abs_tol) res.ok = false;
        }
    }
    return res;
}

}  // namespace ldlmoe::testing
