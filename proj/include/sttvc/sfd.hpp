#pragma once

#include <utility>
#include <vector>

#include "sttvc/config.hpp"
#include "sttvc/entropy.hpp"
#include "sttvc/transformer.hpp"

namespace sttvc {

// Prior query/key tokens for each of the four levels of the residual coder.
struct PriorTokens {
    std::vector<Var> q, k;
    std::vector<std::pair<int, int>> grid;  // token grid (h, w) per level
};

// Residual transform coder. Level l works on a (H/4 / 2^l) x (W/4 / 2^l)
// token grid of width C * 2^l, where H x W is the padded frame size. The
// attention logits of every block carry the prior similarity term qp.kp,
// with the prior tokens derived from the prediction feature.
class SfdCoder {
public:
    static constexpr int kLevels = 4;

    SfdCoder() = default;
    SfdCoder(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg);

    // 2x2 patches of a C x h x w feature, linearly embedded: (h/2 * w/2) x d0.
    Var embed_patches(const Var& feature) const;
    PriorTokens derive_prior(const Var& prediction) const;
    // One 2x2 prior downsampling step from level l to l+1 (q when which == 0).
    Var downsample_prior(const Var& tokens, int level, int which, int height, int width) const;

    Var encode(const Var& residual, const PriorTokens& prior) const;
    Var decode(const Var& latent, const PriorTokens& prior) const;

    const std::vector<SfdBlock>& encoder_blocks(int level) const { return enc_[static_cast<std::size_t>(level)]; }
    bool uses_prior() const { return use_prior_; }

private:
    Var prior_q(const PriorTokens& p, int level) const;
    Var prior_k(const PriorTokens& p, int level) const;

    int channels_ = 0;
    int d0_ = 0;
    bool use_prior_ = true;
    nn::Linear embed_;
    std::vector<std::vector<SfdBlock>> enc_, dec_;
    std::vector<nn::LayerNorm> merge_norm_;
    std::vector<nn::Linear> merge_;
    nn::Linear enc_out_, dec_in_, dec_out_;
    std::vector<nn::Linear> split_;
    std::vector<nn::Linear> prior_down_q_, prior_down_k_;
    std::vector<nn::LayerNorm> prior_norm_q_, prior_norm_k_;
};

// Mean-scale hyperprior for the residual latent. z = h_a(y) at 1/4 of the
// latent grid (ceil), coded with a factorized model; h_s(z_hat) gives
// mu and sigma = 0.11 + softplus(.) per latent element.
class Hyperprior {
public:
    Hyperprior() = default;
    Hyperprior(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg);

    Var analysis(const Var& latent) const;
    std::pair<Var, Var> synthesis(const Var& z_hat, int height, int width) const;

    entropy::FactorizedModel prior;

private:
    int latent_channels_ = 0;
    nn::Conv2d a1_, a2_, a3_, s1_, s2_, s3_;
};

}  // namespace sttvc
