#pragma once

#include <vector>

#include "sttvc/config.hpp"
#include "sttvc/nn.hpp"

namespace sttvc {

// Pixel frame (3 x H x W, RGB in [0,1]) to half-resolution feature:
// F_conv = relu(conv5x5/2(X)), F = ResBlocks(F_conv) + F_conv.
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg);
    Var operator()(const Var& frame) const;

private:
    nn::Conv2d stem_;
    std::vector<nn::ResBlock> blocks_;
};

// Feature back to a 3 x H x W frame: ResBlocks, conv to 12 channels, 2x
// pixel shuffle. The output is not clamped; see clamp_frame.
class FrameReconstructor {
public:
    FrameReconstructor() = default;
    FrameReconstructor(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg);
    Var operator()(const Var& feature) const;

private:
    std::vector<nn::ResBlock> blocks_;
    nn::Conv2d out_;
};

Var clamp_frame(const Var& frame);

// Dot-product non-local block over the current feature and the reference
// features, computed at 1/down resolution:
//   y = F + up(W_z softmax(theta(F) phi(S)^T) g(S)),  S = {F, refs...}.
class NonLocalEnhancer {
public:
    NonLocalEnhancer() = default;
    NonLocalEnhancer(nn::ParamStore& ps, const std::string& name, int channels, int down);
    Var operator()(const Var& feature, const std::vector<Var>& refs) const;

    int inner() const { return inner_; }
    nn::Linear theta, phi, g, wz;

private:
    int inner_ = 1;
    int down_ = 4;
};

}  // namespace sttvc
