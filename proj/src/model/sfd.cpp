#include "sttvc/sfd.hpp"

#include <stdexcept>

namespace sttvc {

SfdCoder::SfdCoder(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg)
    : channels_(cfg.channels), d0_(cfg.sfd_dim(0)), use_prior_(cfg.use_sfd_prior)
{
    embed_ = nn::linear(ps, name + ".embed", 4 * channels_, d0_);
    for (int l = 0; l < kLevels; ++l) {
        const int d = cfg.sfd_dim(l);
        std::vector<SfdBlock> e, dd;
        for (int i = 0; i < cfg.sfd_encoder_depths[l]; ++i)
            e.push_back(SfdBlock::make(ps, name + ".enc" + std::to_string(l) + "_" + std::to_string(i), d, cfg.heads,
                                       cfg.window, cfg.mlp_ratio));
        // Decoder stages run from the coarsest level down.
        for (int i = 0; i < cfg.sfd_decoder_depths[kLevels - 1 - l]; ++i)
            dd.push_back(SfdBlock::make(ps, name + ".dec" + std::to_string(l) + "_" + std::to_string(i), d, cfg.heads,
                                        cfg.window, cfg.mlp_ratio));
        enc_.push_back(std::move(e));
        dec_.push_back(std::move(dd));
        if (l + 1 < kLevels) {
            const std::string tag = std::to_string(l);
            merge_norm_.push_back(nn::layer_norm(ps, name + ".merge" + tag + ".ln", 4 * d));
            merge_.push_back(nn::linear(ps, name + ".merge" + tag, 4 * d, 2 * d, false));
            split_.push_back(nn::linear(ps, name + ".split" + tag, 2 * d, 4 * d));
            if (use_prior_) {
                prior_down_q_.push_back(nn::linear(ps, name + ".prior_down_q" + tag, 4 * d, 2 * d));
                prior_down_k_.push_back(nn::linear(ps, name + ".prior_down_k" + tag, 4 * d, 2 * d));
                prior_norm_q_.push_back(nn::layer_norm(ps, name + ".prior_ln_q" + tag, 2 * d));
                prior_norm_k_.push_back(nn::layer_norm(ps, name + ".prior_ln_k" + tag, 2 * d));
            }
        }
    }
    if (enc_[0].empty()) throw std::invalid_argument("residual coder needs at least one level-0 block");
    const int d3 = cfg.sfd_dim(kLevels - 1);
    enc_out_ = nn::linear(ps, name + ".enc_out", d3, cfg.residual_latent_channels);
    dec_in_ = nn::linear(ps, name + ".dec_in", cfg.residual_latent_channels, d3);
    dec_out_ = nn::linear(ps, name + ".dec_out", d0_, 4 * channels_);
}

Var SfdCoder::embed_patches(const Var& feature) const
{
    const int h = feature.dim(1), w = feature.dim(2);
    if (feature.dim(0) != channels_) throw ShapeError("embed_patches: channel mismatch");
    if (h % 16 || w % 16) throw ShapeError("embed_patches: feature dims must be divisible by 16");
    return embed_(ops::chw_to_tokens(ops::pixel_unshuffle(feature, 2)));
}

Var SfdCoder::downsample_prior(const Var& tokens, int level, int which, int height, int width) const
{
    if (height % 2 || width % 2) throw ShapeError("downsample_prior: odd token grid");
    const auto& lin = which == 0 ? prior_down_q_ : prior_down_k_;
    const auto& ln = which == 0 ? prior_norm_q_ : prior_norm_k_;
    return ln[level](lin[level](group_tokens_2x2(tokens, height, width)));
}

PriorTokens SfdCoder::derive_prior(const Var& prediction) const
{
    PriorTokens p;
    int h = prediction.dim(1) / 2, w = prediction.dim(2) / 2;
    for (int l = 0; l < kLevels; ++l) {
        p.grid.emplace_back(h, w);
        h /= 2;
        w /= 2;
    }
    if (!use_prior_) return p;
    // Level 0 reuses the residual embedding and the first block's projections.
    const SfdBlock& first = enc_[0][0];
    const Var normed = first.ln1(embed_patches(prediction));
    p.q.push_back(first.attn.q(normed));
    p.k.push_back(first.attn.k(normed));
    for (int l = 0; l + 1 < kLevels; ++l) {
        const auto [gh, gw] = p.grid[l];
        p.q.push_back(downsample_prior(p.q[l], l, 0, gh, gw));
        p.k.push_back(downsample_prior(p.k[l], l, 1, gh, gw));
    }
    return p;
}

Var SfdCoder::prior_q(const PriorTokens& p, int level) const { return use_prior_ ? p.q[level] : Var(); }
Var SfdCoder::prior_k(const PriorTokens& p, int level) const { return use_prior_ ? p.k[level] : Var(); }

Var SfdCoder::encode(const Var& residual, const PriorTokens& prior) const
{
    Var t = embed_patches(residual);
    for (int l = 0; l < kLevels; ++l) {
        const auto [h, w] = prior.grid[l];
        if (t.dim(0) != h * w) throw ShapeError("sfd_encode: residual/prior token count mismatch");
        for (const auto& b : enc_[l]) t = b(t, h, w, prior_q(prior, l), prior_k(prior, l));
        if (l + 1 < kLevels) t = merge_[l](merge_norm_[l](group_tokens_2x2(t, h, w)));
    }
    const auto [h3, w3] = prior.grid[kLevels - 1];
    return ops::tokens_to_chw(enc_out_(t), h3, w3);
}

Var SfdCoder::decode(const Var& latent, const PriorTokens& prior) const
{
    const auto [h3, w3] = prior.grid[kLevels - 1];
    if (latent.dim(1) != h3 || latent.dim(2) != w3) throw ShapeError("sfd_decode: latent/prior grid mismatch");
    Var t = dec_in_(ops::chw_to_tokens(latent));
    for (int l = kLevels - 1; l >= 0; --l) {
        const auto [h, w] = prior.grid[l];
        for (const auto& b : dec_[l]) t = b(t, h, w, prior_q(prior, l), prior_k(prior, l));
        if (l > 0) t = split_tokens_2x2(split_[l - 1](t), h, w);
    }
    const auto [h0, w0] = prior.grid[0];
    return ops::pixel_shuffle(ops::tokens_to_chw(dec_out_(t), h0, w0), 2);
}

Hyperprior::Hyperprior(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg)
    : latent_channels_(cfg.residual_latent_channels)
{
    const int cr = cfg.residual_latent_channels, cz = cfg.hyper_channels;
    a1_ = nn::conv(ps, name + ".ha1", cr, cz, 3);
    a2_ = nn::conv(ps, name + ".ha2", cz, cz, 3, 2);
    a3_ = nn::conv(ps, name + ".ha3", cz, cz, 3, 2);
    s1_ = nn::conv(ps, name + ".hs1", cz, 4 * cz, 3);
    s2_ = nn::conv(ps, name + ".hs2", cz, 4 * cz, 3);
    s3_ = nn::conv(ps, name + ".hs3", cz, 2 * cr, 1);
    prior = entropy::FactorizedModel(ps, name + ".prior", cz, cfg.mixture_components);
}

Var Hyperprior::analysis(const Var& latent) const
{
    return a3_(ops::relu(a2_(ops::relu(a1_(latent)))));
}

std::pair<Var, Var> Hyperprior::synthesis(const Var& z_hat, int height, int width) const
{
    Var x = ops::relu(ops::pixel_shuffle(s1_(z_hat), 2));
    x = ops::relu(ops::pixel_shuffle(s2_(x), 2));
    const Var params = s3_(ops::crop(x, height, width));
    const Var mu = ops::slice_channels(params, 0, latent_channels_);
    const Var sigma = ops::add_scalar(ops::softplus(ops::slice_channels(params, latent_channels_, latent_channels_)),
                                      entropy::kScaleMin);
    return {mu, sigma};
}

}  // namespace sttvc
