#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "ldlmoe/tensor.hpp"

namespace ldlmoe {

/// Reverse-mode autodiff tape. One tape per forward pass; backward() may be
/// called once and visits nodes in reverse insertion order. Inputs with
/// node == -1 are treated as constants and receive no gradient.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Register a leaf (parameter or input) for gradient tracking.
    Tensor leaf(const Tensor& v) {
        Tensor out = v;
        out.node = new_node(out.size());
        return out;
    }

    // ---- elementwise binary ----

    Tensor add(const Tensor& a, const Tensor& b) {
        require_same_shape(a, b, "add");
        Tensor out(a.shape, a.data);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
        record(out, [an = a.node, bn = b.node](Tape& t, const std::vector<double>& g) {
            t.accum(an, g, [](double gi, std::size_t) { return gi; });
            t.accum(bn, g, [](double gi, std::size_t) { return gi; });
        });
        return out;
    }

    Tensor sub(const Tensor& a, const Tensor& b) {
        require_same_shape(a, b, "sub");
        Tensor out(a.shape, a.data);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
        record(out, [an = a.node, bn = b.node](Tape& t, const std::vector<double>& g) {
            t.accum(an, g, [](double gi, std::size_t) { return gi; });
            t.accum(bn, g, [](double gi, std::size_t) { return -gi; });
        });
        return out;
    }

    Tensor mul(const Tensor& a, const Tensor& b) {
        require_same_shape(a, b, "mul");
        Tensor out(a.shape, a.data);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
        record(out, [an = a.node, bn = b.node, av = a.data, bv = b.data](Tape& t, const std::vector<double>& g) {
            t.accum(an, g, [&](double gi, std::size_t i) { return gi * bv[i]; });
            t.accum(bn, g, [&](double gi, std::size_t i) { return gi * av[i]; });
        });
        return out;
    }

    /// matrix (r,c) + row vector (c), broadcast over rows.
    Tensor add_rowvec(const Tensor& m, const Tensor& v) {
        if (m.shape.size() != 2 || v.size() != m.cols())
            throw std::invalid_argument("add_rowvec: shape mismatch " + Tensor::shape_str(m.shape) +
                                        " vs " + Tensor::shape_str(v.shape));
        Tensor out(m.shape, m.data);
        std::size_t r = m.rows(), c = m.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += v.data[j];
        record(out, [mn = m.node, vn = v.node, r, c](Tape& t, const std::vector<double>& g) {
            t.accum(mn, g, [](double gi, std::size_t) { return gi; });
            if (vn >= 0) {
                auto& gv = t.nodes_[static_cast<std::size_t>(vn)].grad;
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
            }
        });
        return out;
    }

    /// matrix (r,c) scaled per-row by column vector (r).
    Tensor mul_colvec(const Tensor& m, const Tensor& v) {
        if (m.shape.size() != 2 || v.size() != m.rows())
            throw std::invalid_argument("mul_colvec: shape mismatch " + Tensor::shape_str(m.shape) +
                                        " vs " + Tensor::shape_str(v.shape));
        Tensor out(m.shape, m.data);
        std::size_t r = m.rows(), c = m.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] *= v.data[i];
        record(out, [mn = m.node, vn = v.node, mv = m.data, vv = v.data, r, c](Tape& t, const std::vector<double>& g) {
            if (mn >= 0) {
                auto& gm = t.nodes_[static_cast<std::size_t>(mn)].grad;
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += g[i * c + j] * vv[i];
            }
            if (vn >= 0) {
                auto& gv = t.nodes_[static_cast<std::size_t>(vn)].grad;
                for (std::size_t i = 0; i < r; ++i) {
                    double s = 0;
                    for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * mv[i * c + j];
                    gv[i] += s;
                }
            }
        });
        return out;
    }

    Tensor matmul(const Tensor& a, const Tensor& b) {
        if (a.shape.size() != 2 || b.shape.size() != 2 || a.cols() != b.rows())
            throw std::invalid_argument("matmul: shape mismatch " + Tensor::shape_str(a.shape) +
                                        " vs " + Tensor::shape_str(b.shape));
        std::size_t m = a.rows(), k = a.cols(), n = b.cols();
        Tensor out = Tensor::zeros({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double av = a.data[i * k + p];
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += av * b.data[p * n + j];
            }
        record(out, [an = a.node, bn = b.node, av = a.data, bv = b.data, m, k, n](Tape& t, const std::vector<double>& g) {
            if (an >= 0) {  // dA = G B^T
                auto& ga = t.nodes_[static_cast<std::size_t>(an)].grad;
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0;
                        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
                        ga[i * k + p] += s;
                    }
            }
            if (bn >= 0) {  // dB = A^T G
                auto& gb = t.nodes_[static_cast<std::size_t>(bn)].grad;
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double a_ip = av[i * k + p];
                        if (a_ip == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += a_ip * g[i * n + j];
                    }
            }
        });
        return out;
    }

    // ---- scalar-parameterized ----

    Tensor scale(const Tensor& x, double c) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v *= c;
        record(out, [xn = x.node, c](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [c](double gi, std::size_t) { return gi * c; });
        });
        return out;
    }

    Tensor div_scalar(const Tensor& x, double c) {
        if (c == 0.0) throw std::invalid_argument("div_scalar: division by zero");
        return scale(x, 1.0 / c);
    }

    Tensor add_const(const Tensor& x, double c) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v += c;
        record(out, [xn = x.node](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [](double gi, std::size_t) { return gi; });
        });
        return out;
    }

    // ---- elementwise unary ----

    Tensor exp(const Tensor& x) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v = std::exp(v);
        record(out, [xn = x.node, y = out.data](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [&](double gi, std::size_t i) { return gi * y[i]; });
        });
        return out;
    }

    Tensor log(const Tensor& x) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v = std::log(v);
        record(out, [xn = x.node, xv = x.data](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [&](double gi, std::size_t i) { return gi / xv[i]; });
        });
        return out;
    }

    Tensor tanh(const Tensor& x) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v = std::tanh(v);
        record(out, [xn = x.node, y = out.data](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [&](double gi, std::size_t i) { return gi * (1.0 - y[i] * y[i]); });
        });
        return out;
    }

    Tensor sigmoid(const Tensor& x) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        record(out, [xn = x.node, y = out.data](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [&](double gi, std::size_t i) { return gi * y[i] * (1.0 - y[i]); });
        });
        return out;
    }

    Tensor square(const Tensor& x) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v *= v;
        record(out, [xn = x.node, xv = x.data](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [&](double gi, std::size_t i) { return gi * 2.0 * xv[i]; });
        });
        return out;
    }

    Tensor sqrt(const Tensor& x) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v = std::sqrt(v);
        record(out, [xn = x.node, y = out.data](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [&](double gi, std::size_t i) { return gi * 0.5 / y[i]; });
        });
        return out;
    }

    /// Elementwise x^p for strictly positive inputs.
    Tensor pow_scalar(const Tensor& x, double p) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v = std::pow(v, p);
        record(out, [xn = x.node, xv = x.data, p](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [&](double gi, std::size_t i) { return gi * p * std::pow(xv[i], p - 1.0); });
        });
        return out;
    }

    Tensor abs(const Tensor& x) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v = std::fabs(v);
        record(out, [xn = x.node, xv = x.data](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [&](double gi, std::size_t i) {
                return xv[i] > 0 ? gi : (xv[i] < 0 ? -gi : 0.0);
            });
        });
        return out;
    }

    /// Hard clamp; gradient passes through only inside (lo, hi).
    Tensor clamp(const Tensor& x, double lo, double hi) {
        Tensor out(x.shape, x.data);
        for (auto& v : out.data) v = v < lo ? lo : (v > hi ? hi : v);
        record(out, [xn = x.node, xv = x.data, lo, hi](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [&](double gi, std::size_t i) {
                return (xv[i] > lo && xv[i] < hi) ? gi : 0.0;
            });
        });
        return out;
    }

    // ---- reductions ----

    Tensor sum(const Tensor& x) {
        double s = 0;
        for (double v : x.data) s += v;
        Tensor out = Tensor::scalar(s);
        record(out, [xn = x.node, n = x.size()](Tape& t, const std::vector<double>& g) {
            if (xn >= 0) {
                auto& gx = t.nodes_[static_cast<std::size_t>(xn)].grad;
                for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
            }
        });
        return out;
    }

    Tensor mean(const Tensor& x) {
        double s = 0;
        for (double v : x.data) s += v;
        auto n = static_cast<double>(x.size());
        Tensor out = Tensor::scalar(s / n);
        record(out, [xn = x.node, n, sz = x.size()](Tape& t, const std::vector<double>& g) {
            if (xn >= 0) {
                auto& gx = t.nodes_[static_cast<std::size_t>(xn)].grad;
                for (std::size_t i = 0; i < sz; ++i) gx[i] += g[0] / n;
            }
        });
        return out;
    }

    /// Population variance over all elements.
    Tensor variance(const Tensor& x) {
        auto n = static_cast<double>(x.size());
        double m = 0;
        for (double v : x.data) m += v;
        m /= n;
        double s = 0;
        for (double v : x.data) s += (v - m) * (v - m);
        Tensor out = Tensor::scalar(s / n);
        record(out, [xn = x.node, xv = x.data, m, n](Tape& t, const std::vector<double>& g) {
            t.accum(xn, std::vector<double>(xv.size(), g[0]),
                    [&](double gi, std::size_t i) { return gi * 2.0 * (xv[i] - m) / n; });
        });
        return out;
    }

    /// Column means of a matrix (r,c) -> vector (c).
    Tensor mean_rows(const Tensor& m) {
        if (m.shape.size() != 2)
            throw std::invalid_argument("mean_rows: expected matrix, got " + Tensor::shape_str(m.shape));
        std::size_t r = m.rows(), c = m.cols();
        Tensor out = Tensor::zeros({c});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[j] += m.data[i * c + j];
        for (auto& v : out.data) v /= static_cast<double>(r);
        record(out, [mn = m.node, r, c](Tape& t, const std::vector<double>& g) {
            if (mn >= 0) {
                auto& gm = t.nodes_[static_cast<std::size_t>(mn)].grad;
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += g[j] / static_cast<double>(r);
            }
        });
        return out;
    }

    Tensor dot(const Tensor& a, const Tensor& b) {
        require_same_shape(a, b, "dot");
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
        Tensor out = Tensor::scalar(s);
        record(out, [an = a.node, bn = b.node, av = a.data, bv = b.data](Tape& t, const std::vector<double>& g) {
            t.accum(an, std::vector<double>(av.size(), g[0]),
                    [&](double gi, std::size_t i) { return gi * bv[i]; });
            t.accum(bn, std::vector<double>(bv.size(), g[0]),
                    [&](double gi, std::size_t i) { return gi * av[i]; });
        });
        return out;
    }

    /// cos(a, b) with 1e-12 added to each norm.
    Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
        require_same_shape(a, b, "cosine_similarity");
        constexpr double eps = 1e-12;
        double d = 0, na2 = 0, nb2 = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            d += a.data[i] * b.data[i];
            na2 += a.data[i] * a.data[i];
            nb2 += b.data[i] * b.data[i];
        }
        double na = std::sqrt(na2) + eps, nb = std::sqrt(nb2) + eps;
        double c = d / (na * nb);
        Tensor out = Tensor::scalar(c);
        record(out, [an = a.node, bn = b.node, av = a.data, bv = b.data, d, na, nb,
                     rna = std::sqrt(na2), rnb = std::sqrt(nb2)](Tape& t, const std::vector<double>& g) {
            // dc/da_i = b_i/(na nb) - d * a_i / (na^2 nb * |a|)
            double denom = na * nb;
            t.accum(an, std::vector<double>(av.size(), g[0]), [&](double gi, std::size_t i) {
                double dn = rna > 0 ? (d / (na * na * nb)) * (av[i] / rna) : 0.0;
                return gi * (bv[i] / denom - dn);
            });
            t.accum(bn, std::vector<double>(bv.size(), g[0]), [&](double gi, std::size_t i) {
                double dn = rnb > 0 ? (d / (nb * nb * na)) * (bv[i] / rnb) : 0.0;
                return gi * (av[i] / denom - dn);
            });
        });
        return out;
    }

    /// Row-wise softmax(z / tau). 1-D input is treated as one row.
    Tensor softmax_with_temperature(const Tensor& x, double tau) {
        if (tau <= 0) throw std::invalid_argument("softmax_with_temperature: tau must be > 0");
        std::size_t r = x.shape.size() == 2 ? x.rows() : 1;
        std::size_t c = x.size() / r;
        Tensor out(x.shape, x.data);
        for (std::size_t i = 0; i < r; ++i) {
            double mx = -1e300;
            for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x.data[i * c + j] / tau);
            double s = 0;
            for (std::size_t j = 0; j < c; ++j) {
                double e = std::exp(x.data[i * c + j] / tau - mx);
                out.data[i * c + j] = e;
                s += e;
            }
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] /= s;
        }
        record(out, [xn = x.node, y = out.data, r, c, tau](Tape& t, const std::vector<double>& g) {
            if (xn >= 0) {
                auto& gx = t.nodes_[static_cast<std::size_t>(xn)].grad;
                for (std::size_t i = 0; i < r; ++i) {
                    double gy = 0;
                    for (std::size_t j = 0; j < c; ++j) gy += g[i * c + j] * y[i * c + j];
                    for (std::size_t j = 0; j < c; ++j)
                        gx[i * c + j] += y[i * c + j] * (g[i * c + j] - gy) / tau;
                }
            }
        });
        return out;
    }

    // ---- structural ----

    Tensor reshape(const Tensor& x, std::vector<std::size_t> s) {
        if (Tensor::count(s) != x.size())
            throw std::invalid_argument("reshape: element count mismatch " + Tensor::shape_str(x.shape) +
                                        " -> " + Tensor::shape_str(s));
        Tensor out(std::move(s), x.data);
        record(out, [xn = x.node](Tape& t, const std::vector<double>& g) {
            t.accum(xn, g, [](double gi, std::size_t) { return gi; });
        });
        return out;
    }

    /// Concatenate two vectors, or two matrices along columns.
    Tensor concat(const Tensor& a, const Tensor& b) {
        if (a.shape.size() == 1 && b.shape.size() == 1) {
            Tensor out = Tensor::zeros({a.size() + b.size()});
            std::copy(a.data.begin(), a.data.end(), out.data.begin());
            std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<long>(a.size()));
            record(out, [an = a.node, bn = b.node, na = a.size(), nb = b.size()](Tape& t, const std::vector<double>& g) {
                if (an >= 0) {
                    auto& ga = t.nodes_[static_cast<std::size_t>(an)].grad;
                    for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                }
                if (bn >= 0) {
                    auto& gb = t.nodes_[static_cast<std::size_t>(bn)].grad;
                    for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
                }
            });
            return out;
        }
        if (a.shape.size() != 2 || b.shape.size() != 2 || a.rows() != b.rows())
            throw std::invalid_argument("concat: shape mismatch " + Tensor::shape_str(a.shape) +
                                        " vs " + Tensor::shape_str(b.shape));
        std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
        Tensor out = Tensor::zeros({r, ca + cb});
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < ca; ++j) out.data[i * (ca + cb) + j] = a.data[i * ca + j];
            for (std::size_t j = 0; j < cb; ++j) out.data[i * (ca + cb) + ca + j] = b.data[i * cb + j];
        }
        record(out, [an = a.node, bn = b.node, r, ca, cb](Tape& t, const std::vector<double>& g) {
            if (an >= 0) {
                auto& ga = t.nodes_[static_cast<std::size_t>(an)].grad;
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
            }
            if (bn >= 0) {
                auto& gb = t.nodes_[static_cast<std::size_t>(bn)].grad;
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * (ca + cb) + ca + j];
            }
        });
        return out;
    }

    /// Contiguous slice of a vector.
    Tensor slice(const Tensor& x, std::size_t start, std::size_t len) {
        if (x.shape.size() != 1 || start + len > x.size())
            throw std::invalid_argument("slice: out of range on " + Tensor::shape_str(x.shape));
        Tensor out = Tensor::zeros({len});
        std::copy(x.data.begin() + static_cast<long>(start),
                  x.data.begin() + static_cast<long>(start + len), out.data.begin());
        record(out, [xn = x.node, start, len](Tape& t, const std::vector<double>& g) {
            if (xn >= 0) {
                auto& gx = t.nodes_[static_cast<std::size_t>(xn)].grad;
                for (std::size_t i = 0; i < len; ++i) gx[start + i] += g[i];
            }
        });
        return out;
    }

    /// Column slice [start, start+len) of a matrix.
    Tensor slice_cols(const Tensor& m, std::size_t start, std::size_t len) {
        if (m.shape.size() != 2 || start + len > m.cols())
            throw std::invalid_argument("slice_cols: out of range on " + Tensor::shape_str(m.shape));
        std::size_t r = m.rows(), c = m.cols();
        Tensor out = Tensor::zeros({r, len});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < len; ++j) out.data[i * len + j] = m.data[i * c + start + j];
        record(out, [mn = m.node, r, c, start, len](Tape& t, const std::vector<double>& g) {
            if (mn >= 0) {
                auto& gm = t.nodes_[static_cast<std::size_t>(mn)].grad;
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < len; ++j) gm[i * c + start + j] += g[i * len + j];
            }
        });
        return out;
    }

    /// Column j of a matrix as a vector (r).
    Tensor col(const Tensor& m, std::size_t j) {
        auto s = slice_cols(m, j, 1);
        return reshape(s, {m.rows()});
    }

    /// Repeat each element of a vector `times` consecutive times.
    Tensor repeat_interleave(const Tensor& v, std::size_t times) {
        if (v.shape.size() != 1)
            throw std::invalid_argument("repeat_interleave: expected vector, got " + Tensor::shape_str(v.shape));
        std::size_t n = v.size();
        Tensor out = Tensor::zeros({n * times});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < times; ++k) out.data[i * times + k] = v.data[i];
        record(out, [vn = v.node, n, times](Tape& t, const std::vector<double>& g) {
            if (vn >= 0) {
                auto& gv = t.nodes_[static_cast<std::size_t>(vn)].grad;
                for (std::size_t i = 0; i < n; ++i) {
                    double s = 0;
                    for (std::size_t k = 0; k < times; ++k) s += g[i * times + k];
                    gv[i] += s;
                }
            }
        });
        return out;
    }

    // ---- backward ----

    void backward(const Tensor& loss) {
        if (loss.size() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " + Tensor::shape_str(loss.shape));
        if (loss.node < 0) throw std::invalid_argument("backward: loss is not on this tape");
        if (consumed_) throw std::logic_error("backward: tape already consumed");
        consumed_ = true;
        nodes_[static_cast<std::size_t>(loss.node)].grad[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].back) nodes_[i].back(*this, nodes_[i].grad);
        }
    }

    const std::vector<double>& grad(const Tensor& t) const {
        if (t.node < 0) throw std::invalid_argument("grad: tensor is not tracked on this tape");
        return nodes_[static_cast<std::size_t>(t.node)].grad;
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<double> grad;
        std::function<void(Tape&, const std::vector<double>&)> back;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;

    int new_node(std::size_t size) {
        nodes_.push_back(Node{std::vector<double>(size, 0.0), nullptr});
        return static_cast<int>(nodes_.size() - 1);
    }

    void record(Tensor& out, std::function<void(Tape&, const std::vector<double>&)> back) {
        out.node = new_node(out.size());
        nodes_[static_cast<std::size_t>(out.node)].back = std::move(back);
    }

    template <typename F>
    void accum(int node, const std::vector<double>& g, F&& f) {
        if (node < 0) return;
        auto& dst = nodes_[static_cast<std::size_t>(node)].grad;
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += f(g[i], i);
    }

    friend class TapeAccess;
};

}  // namespace ldlmoe
