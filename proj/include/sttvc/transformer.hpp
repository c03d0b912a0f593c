#pragma once

#include <string>
#include <vector>

#include "sttvc/nn.hpp"

namespace sttvc {

// Adds a window_area x C table to N x C tokens by position inside the
// window: token (y, x) receives table[(y % w) * w + x % w].
Var add_window_position(const Var& tokens, const Var& table, int height, int width, int window);

// Largest window not above `window` that divides both sides of an h x w
// grid. Coarse latents of 64-aligned frames need not be multiples of 8.
int effective_window(int window, int height, int width);

// Multi-head windowed self-attention with relative position bias and an
// output projection. The optional prior (qp, kp) and per-head mod terms are
// added to the logits.
struct WindowAttention {
    nn::Linear q, k, v, proj;
    Var bias_table;
    Var mod;  // undefined unless the block carries one
    int heads = 1;
    int window = 8;

    static WindowAttention make(nn::ParamStore& ps, const std::string& name, int dim, int heads, int window,
                                bool with_mod);
    Var operator()(const Var& tokens, int height, int width, const Var& qp = Var(), const Var& kp = Var()) const;
};

// Locally-enhanced window transformer layer:
//   F_a = W-MSA(LN(x + F_pos)) + x
//   out = fc2(gelu(dwconv3x3(gelu(fc1(LN(F_a)))))) + F_a
struct LeWinBlock {
    Var pos;
    nn::LayerNorm ln1, ln2;
    WindowAttention attn;
    nn::Linear fc1, fc2;
    nn::Conv2d dw;

    static LeWinBlock make(nn::ParamStore& ps, const std::string& name, int dim, int heads, int window, int mlp_ratio);
    Var operator()(const Var& tokens, int height, int width) const;
};

// Three-scale U-shaped stack of LeWin layers on a C x H x W map. Down:
// 2x2 unshuffle + linear (dim doubles); up: linear + 2x2 shuffle; skips are
// concatenated and projected back.
class Uformer {
public:
    Uformer() = default;
    Uformer(nn::ParamStore& ps, const std::string& name, int in_channels, int out_channels, int dim, int depth,
            int heads, int window, int mlp_ratio);
    Var operator()(const Var& x) const;

private:
    nn::Linear in_, out_;
    std::vector<LeWinBlock> enc0_, enc1_, mid_, dec1_, dec0_;
    nn::Linear down0_, down1_, up1_, up0_, skip1_, skip0_;
};

// Transformer block of the residual coder: attention logits carry the
// optional prior similarity term and a per-head modulator.
struct SfdBlock {
    nn::LayerNorm ln1, ln2;
    WindowAttention attn;
    nn::Linear fc1, fc2;

    static SfdBlock make(nn::ParamStore& ps, const std::string& name, int dim, int heads, int window, int mlp_ratio);
    Var operator()(const Var& tokens, int height, int width, const Var& qp, const Var& kp) const;
};

// N x C tokens on an h x w grid to (N/4) x 4C by 2x2 grouping.
Var group_tokens_2x2(const Var& tokens, int height, int width);
// Inverse of group_tokens_2x2 up to the channel split: (N) x 4C -> 4N x C.
Var split_tokens_2x2(const Var& tokens, int height, int width);

}  // namespace sttvc
