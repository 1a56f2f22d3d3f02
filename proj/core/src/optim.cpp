#include "gladcf/optim.hpp"

#include "gladcf/errors.hpp"

#include <cmath>

namespace gladcf {

void Adam::step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads) {
    if (params.size() != grads.size()) throw SizeError("Adam::step: parameter/gradient count mismatch");
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.push_back(Matrix::Zero(p->rows(), p->cols()));
            v_.push_back(Matrix::Zero(p->rows(), p->cols()));
        }
    }
    if (m_.size() != params.size()) throw SizeError("Adam::step: parameter count changed between steps");

    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& g = *grads[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseAbs2();
        params[i]->array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

}  // namespace gladcf
