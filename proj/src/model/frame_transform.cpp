#include "sttvc/frame_transform.hpp"

#include <algorithm>
#include <stdexcept>

namespace sttvc {

FeatureExtractor::FeatureExtractor(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg)
{
    stem_ = nn::conv(ps, name + ".stem", 3, cfg.channels, cfg.stem_kernel, 2);
    for (int i = 0; i < cfg.resblocks; ++i) blocks_.push_back(nn::res_block(ps, name + ".res" + std::to_string(i), cfg.channels));
}

Var FeatureExtractor::operator()(const Var& frame) const
{
    if (frame.value().rank() != 3 || frame.dim(0) != 3) throw ShapeError("extract_features: expected 3 x H x W frame");
    if (!frame.value().all_finite()) throw std::invalid_argument("extract_features: non-finite input");
    const Var f_conv = ops::relu(stem_(frame));
    Var x = f_conv;
    for (const auto& b : blocks_) x = b(x);
    return blocks_.empty() ? f_conv : ops::add(x, f_conv);
}

FrameReconstructor::FrameReconstructor(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg)
{
    for (int i = 0; i < cfg.resblocks; ++i) blocks_.push_back(nn::res_block(ps, name + ".res" + std::to_string(i), cfg.channels));
    out_ = nn::conv(ps, name + ".out", cfg.channels, 12, 3);
}

Var FrameReconstructor::operator()(const Var& feature) const
{
    Var x = feature;
    for (const auto& b : blocks_) x = b(x);
    return ops::pixel_shuffle(out_(x), 2);
}

Var clamp_frame(const Var& frame) { return ops::clamp(frame, 0.0, 1.0); }

NonLocalEnhancer::NonLocalEnhancer(nn::ParamStore& ps, const std::string& name, int channels, int down)
    : inner_(std::max(1, channels / 2)), down_(down)
{
    theta = nn::linear(ps, name + ".theta", channels, inner_);
    phi = nn::linear(ps, name + ".phi", channels, inner_);
    g = nn::linear(ps, name + ".g", channels, inner_);
    // Zero-initialized output projection: the block starts as the identity.
    wz.weight = ps.add(name + ".wz.weight", {channels, inner_}, nn::init::zeros());
    wz.bias = ps.add(name + ".wz.bias", {channels}, nn::init::zeros());
}

Var NonLocalEnhancer::operator()(const Var& feature, const std::vector<Var>& refs) const
{
    if (refs.empty()) throw std::invalid_argument("enhance_reconstruction: empty reference list");
    for (const Var& r : refs)
        if (r.shape() != feature.shape()) throw ShapeError("enhance_reconstruction: reference shape mismatch");
    const int h = feature.dim(1), w = feature.dim(2);
    const int d = (h % down_ == 0 && w % down_ == 0) ? down_ : 1;
    const Var cur = d > 1 ? ops::avg_pool(feature, d) : feature;
    const Var cur_tok = ops::chw_to_tokens(cur);
    std::vector<Var> keys{cur_tok};
    for (const Var& r : refs) keys.push_back(ops::chw_to_tokens(d > 1 ? ops::avg_pool(r, d) : r));
    // Stack all key/value tokens along the token axis.
    std::vector<Var> stacked;
    for (const Var& k : keys) stacked.push_back(ops::reshape(k, {k.dim(0) * k.dim(1), 1, 1}));
    const int n_keys = static_cast<int>(keys.size()) * cur_tok.dim(0);
    const Var all = ops::reshape(ops::concat_channels(stacked), {n_keys, feature.dim(0)});

    const Var th = theta(cur_tok);
    const Var ph = phi(all);
    const Var gv = g(all);
    const Var attn = ops::softmax_rows(ops::matmul(th, ops::transpose2d(ph)));
    const Var y = wz(ops::matmul(attn, gv));
    Var up = ops::tokens_to_chw(y, cur.dim(1), cur.dim(2));
    if (d > 1) up = ops::upsample_nearest(up, d);
    return ops::add(feature, up);
}

}  // namespace sttvc
