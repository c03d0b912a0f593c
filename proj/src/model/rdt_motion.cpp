#include "sttvc/rdt_motion.hpp"

#include <stdexcept>

namespace sttvc {

Var fuse_frame_pair(const nn::Conv2d& fuse, const Var& cur, const Var& ref)
{
    if (cur.shape() != ref.shape()) throw ShapeError("fuse_frame_pair: feature shapes differ");
    return fuse(ops::concat_channels({cur, ref}));
}

MotionEstimator::MotionEstimator(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg)
    : transformer_(cfg.use_rdt)
{
    fuse = nn::conv(ps, name + ".fuse", 2 * cfg.channels, cfg.channels, 1);
    if (transformer_) {
        uformer_ = Uformer(ps, name + ".uformer", cfg.channels, cfg.motion_channels, cfg.uformer_dim,
                           cfg.uformer_depth, cfg.heads, cfg.window, cfg.mlp_ratio);
    } else {
        cnn_.push_back(nn::conv(ps, name + ".cnn0", cfg.channels, cfg.channels, 3));
        cnn_.push_back(nn::conv(ps, name + ".cnn1", cfg.channels, cfg.channels, 3));
        cnn_.push_back(nn::conv(ps, name + ".cnn2", cfg.channels, cfg.motion_channels, 3));
    }
}

Var MotionEstimator::operator()(const Var& cur, const Var& ref) const
{
    const Var fused = fuse_frame_pair(fuse, cur, ref);
    if (transformer_) return uformer_(fused);
    Var x = fused;
    for (std::size_t i = 0; i < cnn_.size(); ++i) {
        x = cnn_[i](x);
        if (i + 1 < cnn_.size()) x = ops::relu(x);
    }
    return x;
}

MotionHead::MotionHead(nn::ParamStore& ps, const std::string& name, int in_channels, const ModelConfig& cfg)
    : groups_(cfg.groups()), norm_(cfg.mask_norm)
{
    const int g = groups_;
    conv.weight = ps.add(name + ".weight", {g * 27, in_channels, 1, 1}, [g](Tensor& t, std::mt19937_64& rng) {
        // Offset rows stay zero; mask rows get a small random start.
        std::uniform_real_distribution<double> u(-0.01, 0.01);
        const int per = t.dim(1);
        for (int o = g * 18; o < g * 27; ++o)
            for (int i = 0; i < per; ++i) t[static_cast<std::int64_t>(o) * per + i] = u(rng);
    });
    conv.bias = ps.add(name + ".bias", {g * 27}, [g](Tensor& t, std::mt19937_64&) {
        for (int grp = 0; grp < g; ++grp) t[g * 18 + grp * 9 + 4] = 4.0;
    });
    conv.stride = 1;
    conv.pad = 0;
}

MotionField MotionHead::operator()(const Var& feature) const
{
    const Var out = conv(feature);
    MotionField mv;
    mv.offsets = ops::slice_channels(out, 0, groups_ * 18);
    const Var logits = ops::slice_channels(out, groups_ * 18, groups_ * 9);
    mv.mask = norm_ == MaskNorm::softmax ? ops::group_softmax(logits, groups_, 9) : ops::sigmoid(logits);
    return mv;
}

MotionCodec::MotionCodec(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg)
{
    const int m = cfg.motion_latent_channels;
    enc1_ = nn::conv(ps, name + ".enc1", cfg.motion_channels, m, 3, 2);
    enc2_ = nn::conv(ps, name + ".enc2", m, m, 3, 2);
    dec1_ = nn::conv(ps, name + ".dec1", m, 4 * m, 3);
    dec2_ = nn::conv(ps, name + ".dec2", m, 4 * m, 3);
    head_ = MotionHead(ps, name + ".head", m, cfg);
    prior = entropy::FactorizedModel(ps, name + ".prior", m, cfg.mixture_components);
}

Var MotionCodec::analysis(const Var& motion_feature) const { return enc2_(ops::relu(enc1_(motion_feature))); }

MotionField MotionCodec::synthesis(const Var& latent) const
{
    Var x = ops::relu(ops::pixel_shuffle(dec1_(latent), 2));
    x = ops::relu(ops::pixel_shuffle(dec2_(x), 2));
    return head_(x);
}

DeformCompensator::DeformCompensator(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg)
    : groups_(cfg.groups())
{
    const int c = cfg.channels;
    weight = ps.add(name + ".weight", {c, c, 9}, [c](Tensor& t, std::mt19937_64&) {
        for (int o = 0; o < c; ++o)
            for (int k = 0; k < 9; ++k) t[(static_cast<std::int64_t>(o) * c + o) * 9 + k] = 1.0;
    });
    bias = ps.add(name + ".bias", {c}, nn::init::zeros());
}

Var DeformCompensator::operator()(const Var& ref, const MotionField& mv) const
{
    return ops::deform_conv(ref, mv.offsets, mv.mask, weight, bias, groups_);
}

}  // namespace sttvc
