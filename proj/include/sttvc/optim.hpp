#pragma once

#include <vector>

#include "sttvc/nn.hpp"

namespace sttvc::optim {

// Scales all gradients so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(const nn::ParamStore& params, double max_norm);

class Adam {
public:
    explicit Adam(const nn::ParamStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    // Parameters without a gradient are left alone.
    void step(double lr);
    long steps() const { return t_; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace sttvc::optim
