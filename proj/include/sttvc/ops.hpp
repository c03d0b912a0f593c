#pragma once

#include <optional>
#include <random>
#include <vector>

#include "sttvc/autograd.hpp"

// Differentiable operations. Feature maps are C x H x W, token sequences
// N x C, scalars have shape [1].
namespace sttvc::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
// Sum of any number of same-shaped inputs.
Var sum_of(const std::vector<Var>& xs);

Var relu(const Var& x);
Var gelu(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
// x^p for x >= 0; the gradient at 0 is taken as 0.
Var pow_scalar(const Var& x, double p);
// Clamps the forward value; gradient passes where the input is inside.
Var clamp(const Var& x, double lo, double hi);

Var sum(const Var& x);
Var mean(const Var& x);
Var mse(const Var& a, const Var& b);

Var reshape(const Var& x, Shape shape);
Var chw_to_tokens(const Var& x);
Var tokens_to_chw(const Var& x, int height, int width);
Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int start, int count);
// Concatenation of N x C_i token sequences along the feature axis.
Var concat_features(const std::vector<Var>& xs);
Var pixel_shuffle(const Var& x, int r);
Var pixel_unshuffle(const Var& x, int r);
// Keeps the top-left height x width window of a C x H x W map.
Var crop(const Var& x, int height, int width);
Var avg_pool(const Var& x, int k);
Var upsample_nearest(const Var& x, int r);
// 2x2 average pooling that zero-pads odd dimensions by one on each side,
// always dividing by 4.
Var avg_pool2_padded(const Var& x);
// Valid 1-D correlation of every channel along axis 1 (rows) or 2 (columns).
Var filter_valid(const Var& x, const std::vector<double>& taps, int axis);
Var transpose2d(const Var& x);
Var matmul(const Var& a, const Var& b);
Var softmax_rows(const Var& x);

// Global pooling of C x H x W to [C].
Var global_avg_pool(const Var& x);
Var global_max_pool(const Var& x);
// Pooling across channels to 1 x H x W.
Var channel_mean(const Var& x);
Var channel_max(const Var& x);
// x * s[c] and x * s[0, y, x].
Var mul_channels(const Var& x, const Var& s);
Var mul_spatial(const Var& x, const Var& s);

// bias may be an undefined Var.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int groups = 1);
Var linear(const Var& x, const Var& w, const Var& b);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

struct AttentionOptions {
    int height = 0;
    int width = 0;
    int window = 8;
    int heads = 1;
    double scale = 1.0;
};

// Windowed multi-head attention. Optional terms are passed as undefined Vars.
Var window_attention(const Var& q, const Var& k, const Var& v, const Var& bias_table, const Var& q_prior,
                     const Var& k_prior, const Var& mod, const AttentionOptions& opt);

// Modulated deformable 3x3 convolution, see kernels::DeformGeometry.
Var deform_conv(const Var& x, const Var& offset, const Var& mask, const Var& weight, const Var& bias, int groups);
// Softmax over `taps` consecutive channels within each of `groups` blocks.
Var group_softmax(const Var& logits, int groups, int taps);

// x + u, u ~ U(-0.5, 0.5) iid. The noise is a constant of the graph.
Var add_uniform_noise(const Var& x, std::mt19937_64& rng);

}  // namespace sttvc::ops
