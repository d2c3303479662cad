#pragma once

#include <string>
#include <vector>

#include "mspt/tensor.hpp"

namespace mspt {

// A named trainable tensor. Names are stable identifiers used by the
// optimizer's error messages and by model serialization.
struct Param {
    std::string name;
    Tensor value;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
};

// Adam with decoupled weight decay: p -= lr*wd*p is applied before the
// bias-corrected moment update, so decay never enters the moment buffers.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    // One update across all params. Every param must carry a populated
    // gradient; a missing one is a contract violation naming the parameter.
    void step(std::vector<Param>& params);

    std::size_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

} // namespace mspt
