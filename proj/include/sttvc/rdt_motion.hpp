#pragma once

#include <random>
#include <vector>

#include "sttvc/config.hpp"
#include "sttvc/entropy.hpp"
#include "sttvc/nn.hpp"
#include "sttvc/transformer.hpp"

namespace sttvc {

// Decoded motion: offsets (G*9*2) x H x W laid out (group, tap, {dx, dy})
// in feature pixels, and a (G*9) x H x W mask.
struct MotionField {
    Var offsets;
    Var mask;
};

// 1x1 convolution over the channel concatenation <cur, ref>, 2C -> C.
Var fuse_frame_pair(const nn::Conv2d& fuse, const Var& cur, const Var& ref);

// Motion estimation: fuse the pair, then the Uformer (or, with use_rdt off,
// a plain convolutional stack) produces the motion feature F_o.
class MotionEstimator {
public:
    MotionEstimator() = default;
    MotionEstimator(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg);
    Var operator()(const Var& cur, const Var& ref) const;

    nn::Conv2d fuse;

private:
    bool transformer_ = true;
    Uformer uformer_;
    std::vector<nn::Conv2d> cnn_;
};

// Head turning a feature into offsets and a normalized mask: one 1x1 conv
// emitting G*18 offset and G*9 mask-logit channels. The offset part starts
// at zero and the center tap's logit starts high.
class MotionHead {
public:
    MotionHead() = default;
    MotionHead(nn::ParamStore& ps, const std::string& name, int in_channels, const ModelConfig& cfg);
    MotionField operator()(const Var& feature) const;

    nn::Conv2d conv;

private:
    int groups_ = 8;
    MaskNorm norm_ = MaskNorm::softmax;
};

// Motion autoencoder with a factorized entropy model. Two stride-2 stages
// each way; the decoder ends in the motion head.
class MotionCodec {
public:
    MotionCodec() = default;
    MotionCodec(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg);

    Var analysis(const Var& motion_feature) const;
    MotionField synthesis(const Var& latent) const;

    entropy::FactorizedModel prior;

private:
    nn::Conv2d enc1_, enc2_, dec1_, dec2_;
    MotionHead head_;
};

// Modulated deformable 3x3 convolution with per-tap, non-shared weights.
// Starts as the identity per tap, so with a one-hot center mask and zero
// offsets it returns the reference unchanged.
class DeformCompensator {
public:
    DeformCompensator() = default;
    DeformCompensator(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg);
    Var operator()(const Var& ref, const MotionField& mv) const;

    Var weight, bias;

private:
    int groups_ = 8;
};

}  // namespace sttvc
