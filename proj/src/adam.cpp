#include "mspt/adam.hpp"

#include <cmath>

namespace mspt {

void Adam::step(std::vector<Param>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].value.size(), 0.0);
            v_[i].assign(params[i].value.size(), 0.0);
        }
    }
    if (m_.size() != params.size())
        throw Error("adam: parameter count changed between steps");

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = params[i];
        if (!p.value.has_grad())
            throw Error("adam: missing gradient for parameter '" + p.name + "'");
        const std::vector<double>& g = p.value.grad();
        std::vector<double>& w = p.value.values();
        if (g.size() != w.size())
            throw Error("adam: gradient size mismatch for parameter '" + p.name + "'");

        for (std::size_t j = 0; j < w.size(); ++j) {
            w[j] -= cfg_.lr * cfg_.weight_decay * w[j];
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double m_hat = m_[i][j] / bc1;
            const double v_hat = v_[i][j] / bc2;
            w[j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

} // namespace mspt
