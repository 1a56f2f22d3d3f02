#pragma once

#include "gladcf/graph.hpp"

#include <vector>

namespace gladcf {

/// Adaptive-moment optimiser (bias-corrected first/second moment estimates).
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// One update. params and grads must keep the same order and shapes between calls.
    void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads);

    double learning_rate() const noexcept { return lr_; }
    long steps() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

}  // namespace gladcf
