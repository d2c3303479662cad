#include "mspt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mspt/kernels.hpp"

namespace mspt {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

using NodePtr = std::shared_ptr<detail::TensorNode>;

void check(bool ok, const std::string& msg) {
    if (!ok) throw DimensionError(msg);
}

// Accumulates g into the node's grad buffer if it participates in autodiff.
void accum(const NodePtr& n, const std::vector<double>& g) {
    if (!n->requires_grad) return;
    if (n->grad.empty()) n->grad.assign(n->values.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) n->grad[i] += g[i];
}

bool wants_grad(Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

} // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill) {
    node_ = std::make_shared<detail::TensorNode>();
    node_->rows = rows;
    node_->cols = cols;
    node_->values.assign(rows * cols, fill);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    Tensor t(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        check(row.size() == c, "from_rows: ragged initializer");
        std::size_t j = 0;
        for (double v : row) t.at(i, j++) = v;
        ++i;
    }
    return t;
}

Tensor Tensor::from_values(std::size_t rows, std::size_t cols, std::vector<double> values) {
    check(values.size() == rows * cols,
          "from_values: " + std::to_string(values.size()) + " values for shape " +
              shape_str(rows, cols));
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->rows = rows;
    t.node_->cols = cols;
    t.node_->values = std::move(values);
    return t;
}

Tensor Tensor::randn(std::size_t rows, std::size_t cols, Rng& rng, double mean, double sd) {
    Tensor t(rows, cols);
    for (auto& v : t.values()) v = rng.normal(mean, sd);
    return t;
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw Error("gradient requested but never populated");
    return node_->grad;
}

void Tensor::accumulate_grad(const double* g, std::size_t len) {
    check(len == size(), "accumulate_grad: length " + std::to_string(len) +
                             " vs tensor " + shape_str(rows(), cols()));
    if (node_->grad.empty()) node_->grad.assign(size(), 0.0);
    for (std::size_t i = 0; i < len; ++i) node_->grad[i] += g[i];
}

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item: tensor is " + shape_str(rows(), cols()) + ", expected 1x1");
    return node_->values[0];
}

Tensor Tensor::clone() const {
    if (!defined()) return Tensor();
    Tensor t = Tensor::from_values(rows(), cols(), node_->values);
    t.node_->requires_grad = node_->requires_grad;
    return t;
}

void Tape::backward(Tensor& loss) {
    if (loss.size() != 1)
        throw Error("backward: loss is " + shape_str(loss.rows(), loss.cols()) + ", expected a 1x1 scalar");
    const double one = 1.0;
    loss.accumulate_grad(&one, 1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    steps_.clear();
}

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    check(a.cols() == b.rows(), "matmul: " + shape_str(a.rows(), a.cols()) + " * " +
                                    shape_str(b.rows(), b.cols()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out(m, n);
    kernels::gemm_nn(m, k, n, a.values().data(), b.values().data(), out.values().data());
    if (wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), bn = b.node(), on = out.node(), m, k, n]() {
            if (on->grad.empty()) return;
            if (an->requires_grad) {
                std::vector<double> ga(m * k);
                kernels::gemm_nt(m, n, k, on->grad.data(), bn->values.data(), ga.data());
                accum(an, ga);
            }
            if (bn->requires_grad) {
                std::vector<double> gb(k * n);
                kernels::gemm_tn(k, m, n, an->values.data(), on->grad.data(), gb.data());
                accum(bn, gb);
            }
        });
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b, Tape* tape) {
    check(a.cols() == b.cols(), "matmul_nt: " + shape_str(a.rows(), a.cols()) + " * " +
                                    shape_str(b.rows(), b.cols()) + "^T");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor out(m, n);
    kernels::gemm_nt(m, k, n, a.values().data(), b.values().data(), out.values().data());
    if (wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), bn = b.node(), on = out.node(), m, k, n]() {
            if (on->grad.empty()) return;
            if (an->requires_grad) {
                std::vector<double> ga(m * k);
                kernels::gemm_nn(m, n, k, on->grad.data(), bn->values.data(), ga.data());
                accum(an, ga);
            }
            if (bn->requires_grad) {
                std::vector<double> gb(n * k);
                kernels::gemm_tn(n, m, k, on->grad.data(), an->values.data(), gb.data());
                accum(bn, gb);
            }
        });
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b, Tape* tape) {
    check(a.rows() == b.rows(), "matmul_tn: " + shape_str(a.rows(), a.cols()) + "^T * " +
                                    shape_str(b.rows(), b.cols()));
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    Tensor out(m, n);
    kernels::gemm_tn(m, k, n, a.values().data(), b.values().data(), out.values().data());
    if (wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), bn = b.node(), on = out.node(), m, k, n]() {
            if (on->grad.empty()) return;
            if (an->requires_grad) {
                std::vector<double> ga(k * m);
                kernels::gemm_nt(k, n, m, bn->values.data(), on->grad.data(), ga.data());
                accum(an, ga);
            }
            if (bn->requires_grad) {
                std::vector<double> gb(k * n);
                kernels::gemm_nn(k, m, n, an->values.data(), on->grad.data(), gb.data());
                accum(bn, gb);
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    check(a.rows() == b.rows() && a.cols() == b.cols(),
          "add: " + shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
    Tensor out(a.rows(), a.cols());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), bn = b.node(), on = out.node()]() {
            if (on->grad.empty()) return;
            accum(an, on->grad);
            accum(bn, on->grad);
        });
    }
    return out;
}

Tensor scale(const Tensor& a, double factor, Tape* tape) {
    Tensor out(a.rows(), a.cols());
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = factor * av[i];
    if (wants_grad(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), on = out.node(), factor]() {
            if (on->grad.empty()) return;
            std::vector<double> g(on->grad.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = factor * on->grad[i];
            accum(an, g);
        });
    }
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b, Tape* tape) {
    check(a.rows() == b.rows() && a.cols() == b.cols(),
          "hadamard: " + shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
    Tensor out(a.rows(), a.cols());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (wants_grad(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), bn = b.node(), on = out.node()]() {
            if (on->grad.empty()) return;
            const std::size_t sz = on->grad.size();
            if (an->requires_grad) {
                std::vector<double> g(sz);
                for (std::size_t i = 0; i < sz; ++i) g[i] = bn->values[i] * on->grad[i];
                accum(an, g);
            }
            if (bn->requires_grad) {
                std::vector<double> g(sz);
                for (std::size_t i = 0; i < sz; ++i) g[i] = an->values[i] * on->grad[i];
                accum(bn, g);
            }
        });
    }
    return out;
}

Tensor add_row_vector(const Tensor& m, const Tensor& v, Tape* tape) {
    check(v.rows() == 1 && v.cols() == m.cols(),
          "add_row_vector: " + shape_str(m.rows(), m.cols()) + " + " + shape_str(v.rows(), v.cols()));
    Tensor out(m.rows(), m.cols());
    const std::size_t r = m.rows(), c = m.cols();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out.at(i, j) = m.at(i, j) + v.values()[j];
    if (wants_grad(tape, {&m, &v})) {
        out.set_requires_grad(true);
        tape->record([mn = m.node(), vn = v.node(), on = out.node(), r, c]() {
            if (on->grad.empty()) return;
            accum(mn, on->grad);
            if (vn->requires_grad) {
                std::vector<double> g(c, 0.0);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[j] += on->grad[i * c + j];
                accum(vn, g);
            }
        });
    }
    return out;
}

Tensor add_col_vector(const Tensor& m, const Tensor& v, Tape* tape) {
    check(v.cols() == 1 && v.rows() == m.rows(),
          "add_col_vector: " + shape_str(m.rows(), m.cols()) + " + " + shape_str(v.rows(), v.cols()));
    Tensor out(m.rows(), m.cols());
    const std::size_t r = m.rows(), c = m.cols();
    for (std::size_t i = 0; i < r; ++i) {
        const double vi = v.values()[i];
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = m.at(i, j) + vi;
    }
    if (wants_grad(tape, {&m, &v})) {
        out.set_requires_grad(true);
        tape->record([mn = m.node(), vn = v.node(), on = out.node(), r, c]() {
            if (on->grad.empty()) return;
            accum(mn, on->grad);
            if (vn->requires_grad) {
                std::vector<double> g(r, 0.0);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[i] += on->grad[i * c + j];
                accum(vn, g);
            }
        });
    }
    return out;
}

Tensor softmax_rows(const Tensor& a, Tape* tape) {
    Tensor out(a.rows(), a.cols());
    kernels::softmax_rows(a.rows(), a.cols(), a.values().data(), out.values().data());
    if (wants_grad(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), on = out.node()]() {
            if (on->grad.empty()) return;
            const std::size_t r = on->rows, c = on->cols;
            std::vector<double> g(r * c);
            for (std::size_t i = 0; i < r; ++i) {
                const double* y = on->values.data() + i * c;
                const double* dy = on->grad.data() + i * c;
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] = y[j] * (dy[j] - dot);
            }
            accum(an, g);
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps, Tape* tape) {
    check(gain.rows() == 1 && gain.cols() == a.cols() && bias.rows() == 1 && bias.cols() == a.cols(),
          "layer_norm: input " + shape_str(a.rows(), a.cols()) + ", gain " +
              shape_str(gain.rows(), gain.cols()) + ", bias " + shape_str(bias.rows(), bias.cols()));
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out(r, c);
    auto xhat = std::make_shared<std::vector<double>>(r * c);
    auto inv_sd = std::make_shared<std::vector<double>>(r);
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = a.values().data() + i * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += x[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = x[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_sd)[i] = inv;
        for (std::size_t j = 0; j < c; ++j) {
            const double xh = (x[j] - mean) * inv;
            (*xhat)[i * c + j] = xh;
            out.at(i, j) = gain.values()[j] * xh + bias.values()[j];
        }
    }
    if (wants_grad(tape, {&a, &gain, &bias})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), gn = gain.node(), bn = bias.node(), on = out.node(),
                      xhat, inv_sd, r, c]() {
            if (on->grad.empty()) return;
            if (bn->requires_grad) {
                std::vector<double> g(c, 0.0);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[j] += on->grad[i * c + j];
                accum(bn, g);
            }
            if (gn->requires_grad) {
                std::vector<double> g(c, 0.0);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        g[j] += on->grad[i * c + j] * (*xhat)[i * c + j];
                accum(gn, g);
            }
            if (an->requires_grad) {
                std::vector<double> g(r * c);
                const double invc = 1.0 / static_cast<double>(c);
                for (std::size_t i = 0; i < r; ++i) {
                    double mean_dxh = 0.0;
                    double mean_dxh_xh = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double dxh = on->grad[i * c + j] * gn->values[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * (*xhat)[i * c + j];
                    }
                    mean_dxh *= invc;
                    mean_dxh_xh *= invc;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double dxh = on->grad[i * c + j] * gn->values[j];
                        g[i * c + j] = (*inv_sd)[i] *
                                       (dxh - mean_dxh - (*xhat)[i * c + j] * mean_dxh_xh);
                    }
                }
                accum(an, g);
            }
        });
    }
    return out;
}

Tensor gelu(const Tensor& a, Tape* tape) {
    Tensor out(a.rows(), a.cols());
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        const double x = av[i];
        ov[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    if (wants_grad(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), on = out.node()]() {
            if (on->grad.empty()) return;
            std::vector<double> g(on->grad.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = an->values[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                g[i] = on->grad[i] * (cdf + x * pdf);
            }
            accum(an, g);
        });
    }
    return out;
}

Tensor tanh_elem(const Tensor& a, Tape* tape) {
    Tensor out(a.rows(), a.cols());
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(av[i]);
    if (wants_grad(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), on = out.node()]() {
            if (on->grad.empty()) return;
            std::vector<double> g(on->grad.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double t = on->values[i];
                g[i] = on->grad[i] * (1.0 - t * t);
            }
            accum(an, g);
        });
    }
    return out;
}

Tensor sigmoid_elem(const Tensor& a, Tape* tape) {
    Tensor out(a.rows(), a.cols());
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-av[i]));
    if (wants_grad(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), on = out.node()]() {
            if (on->grad.empty()) return;
            std::vector<double> g(on->grad.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = on->values[i];
                g[i] = on->grad[i] * s * (1.0 - s);
            }
            accum(an, g);
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& pieces, Tape* tape) {
    if (pieces.empty()) throw DimensionError("concat_cols: no pieces");
    const std::size_t r = pieces.front().rows();
    std::size_t total = 0;
    for (const auto& p : pieces) {
        check(p.rows() == r, "concat_cols: row mismatch " + shape_str(p.rows(), p.cols()) +
                                 " vs " + shape_str(r, pieces.front().cols()));
        total += p.cols();
    }
    Tensor out(r, total);
    std::size_t off = 0;
    for (const auto& p : pieces) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) out.at(i, off + j) = p.at(i, j);
        off += p.cols();
    }
    bool any = false;
    for (const auto& p : pieces) any = any || p.requires_grad();
    if (tape && any) {
        out.set_requires_grad(true);
        std::vector<NodePtr> nodes;
        std::vector<std::size_t> widths;
        for (const auto& p : pieces) {
            nodes.push_back(p.node());
            widths.push_back(p.cols());
        }
        tape->record([nodes, widths, on = out.node(), r, total]() {
            if (on->grad.empty()) return;
            std::size_t off = 0;
            for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                const std::size_t w = widths[pi];
                if (nodes[pi]->requires_grad) {
                    std::vector<double> g(r * w);
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < w; ++j)
                            g[i * w + j] = on->grad[i * total + off + j];
                    accum(nodes[pi], g);
                }
                off += w;
            }
        });
    }
    return out;
}

Tensor flatten_to_row(const Tensor& a, Tape* tape) {
    Tensor out = Tensor::from_values(1, a.size(), a.values());
    if (wants_grad(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), on = out.node()]() {
            if (on->grad.empty()) return;
            accum(an, on->grad);
        });
    }
    return out;
}

Tensor col_max(const Tensor& a, Tape* tape) {
    check(a.rows() >= 1, "col_max: empty input");
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out(1, c);
    auto arg = std::make_shared<std::vector<std::size_t>>(c, 0);
    for (std::size_t j = 0; j < c; ++j) {
        double best = a.at(0, j);
        std::size_t bi = 0;
        for (std::size_t i = 1; i < r; ++i) {
            if (a.at(i, j) > best) {
                best = a.at(i, j);
                bi = i;
            }
        }
        out.at(0, j) = best;
        (*arg)[j] = bi;
    }
    if (wants_grad(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), on = out.node(), arg, c]() {
            if (on->grad.empty()) return;
            std::vector<double> g(an->values.size(), 0.0);
            for (std::size_t j = 0; j < c; ++j) g[(*arg)[j] * c + j] = on->grad[j];
            accum(an, g);
        });
    }
    return out;
}

Tensor col_mean(const Tensor& a, Tape* tape) {
    check(a.rows() >= 1, "col_mean: empty input");
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out(1, c);
    for (std::size_t j = 0; j < c; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < r; ++i) s += a.at(i, j);
        out.at(0, j) = s / static_cast<double>(r);
    }
    if (wants_grad(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), on = out.node(), r, c]() {
            if (on->grad.empty()) return;
            const double invr = 1.0 / static_cast<double>(r);
            std::vector<double> g(r * c);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] = on->grad[j] * invr;
            accum(an, g);
        });
    }
    return out;
}

Tensor sum_all(const Tensor& a, Tape* tape) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    Tensor out = Tensor::from_values(1, 1, {s});
    if (wants_grad(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), on = out.node()]() {
            if (on->grad.empty()) return;
            std::vector<double> g(an->values.size(), on->grad[0]);
            accum(an, g);
        });
    }
    return out;
}

Tensor cross_entropy_loss(const Tensor& logits, std::size_t label, Tape* tape) {
    check(logits.rows() == 1, "cross_entropy_loss: logits are " +
                                  shape_str(logits.rows(), logits.cols()) + ", expected 1 x d_out");
    if (label >= logits.cols())
        throw Error("cross_entropy_loss: label " + std::to_string(label) +
                    " out of range for " + std::to_string(logits.cols()) + " classes");
    const std::size_t c = logits.cols();
    const double* l = logits.values().data();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, l[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(l[j] - mx);
    const double lse = mx + std::log(sum);
    Tensor out = Tensor::from_values(1, 1, {lse - l[label]});
    if (wants_grad(tape, {&logits})) {
        out.set_requires_grad(true);
        tape->record([ln = logits.node(), on = out.node(), label, c, mx, sum]() {
            if (on->grad.empty()) return;
            const double d = on->grad[0];
            std::vector<double> g(c);
            for (std::size_t j = 0; j < c; ++j) {
                const double p = std::exp(ln->values[j] - mx) / sum;
                g[j] = d * (p - (j == label ? 1.0 : 0.0));
            }
            accum(ln, g);
        });
    }
    return out;
}

} // namespace mspt
