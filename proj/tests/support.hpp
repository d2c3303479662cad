#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mspt/adam.hpp"
#include "mspt/tensor.hpp"

namespace testsupport {

// Relative error with an absolute floor so near-zero gradients compare on an
// absolute scale instead of blowing up the ratio.
inline double rel_err(double a, double b, double floor = 1e-3) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite differences for d(loss)/d(param), entry by entry. `loss_fn`
// must recompute the full forward pass from current parameter values and must
// not itself touch gradients.
inline std::vector<double> fd_gradient(mspt::Tensor& param,
                                       const std::function<double()>& loss_fn,
                                       double h = 1e-5) {
    std::vector<double> g(param.size());
    auto& w = param.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double saved = w[i];
        w[i] = saved + h;
        const double up = loss_fn();
        w[i] = saved - h;
        const double down = loss_fn();
        w[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Max relative error between reverse-mode and finite-difference gradients
// across a parameter list. The autodiff gradients must already be populated.
inline double max_grad_rel_err(std::vector<mspt::Param>& params,
                               const std::function<double()>& loss_fn,
                               double h = 1e-5, std::string* worst_name = nullptr) {
    double worst = 0.0;
    for (auto& p : params) {
        const auto fd = fd_gradient(p.value, loss_fn, h);
        const auto& ad = p.value.grad();
        for (std::size_t i = 0; i < fd.size(); ++i) {
            const double e = rel_err(ad[i], fd[i]);
            if (e > worst) {
                worst = e;
                if (worst_name) *worst_name = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return worst;
}

} // namespace testsupport
