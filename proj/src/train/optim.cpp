#include "sttvc/optim.hpp"

#include <cmath>

namespace sttvc::optim {

double clip_grad_norm(const nn::ParamStore& params, double max_norm)
{
    double sq = 0.0;
    for (const auto& [name, p] : params.items()) {
        if (!p.has_grad()) continue;
        for (double g : p.grad().span()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto& [name, p] : params.items()) {
            if (!p.has_grad()) continue;
            Var q = p;
            for (double& g : q.node()->grad.span()) g *= s;
        }
    }
    return norm;
}

Adam::Adam(const nn::ParamStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps)
{
    for (const auto& [name, p] : params.items()) {
        params_.push_back(p);
        m_.push_back(Tensor::zeros_like(p.value()));
        v_.push_back(Tensor::zeros_like(p.value()));
    }
}

void Adam::step(double lr)
{
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Var& p = params_[i];
        if (!p.has_grad()) continue;
        double* w = p.mutable_value().data();
        const double* g = p.grad().data();
        double* m = m_[i].data();
        double* v = v_[i].data();
        const std::int64_t n = p.numel();
#pragma omp parallel for if (n > 65536)
        for (std::int64_t j = 0; j < n; ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        }
    }
}

}  // namespace sttvc::optim
