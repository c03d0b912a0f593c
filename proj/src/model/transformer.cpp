#include "sttvc/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sttvc {

namespace {

// out[i, :] = table[idx[i], :]
Var gather_rows(const Var& table, std::vector<int> idx)
{
    const int cols = table.dim(1);
    Tensor out(Shape{static_cast<int>(idx.size()), cols});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(table.value().data() + static_cast<std::int64_t>(idx[i]) * cols, cols,
                    out.data() + static_cast<std::int64_t>(i) * cols);
    return make_result(std::move(out), {table}, [idx = std::move(idx), cols](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (int c = 0; c < cols; ++c)
                g[static_cast<std::int64_t>(idx[i]) * cols + c] += n.grad[static_cast<std::int64_t>(i) * cols + c];
    });
}

// out[:, j] = table[:, idx[j]]
Var gather_cols(const Var& table, std::vector<int> idx)
{
    const int rows = table.dim(0), cols = table.dim(1);
    const int n_out = static_cast<int>(idx.size());
    Tensor out(Shape{rows, n_out});
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < n_out; ++j) out.at(r, j) = table.value().at(r, idx[j]);
    return make_result(std::move(out), {table}, [idx = std::move(idx), rows, cols, n_out](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < n_out; ++j) g[static_cast<std::int64_t>(r) * cols + idx[j]] += n.grad.at(r, j);
    });
}

// Relative-bias table of a smaller window taken from a table built for `full`.
Var shrink_bias_table(const Var& table, int full, int window)
{
    if (window == full) return table;
    const int span = 2 * window - 1, full_span = 2 * full - 1;
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(span) * span);
    for (int dy = 0; dy < span; ++dy)
        for (int dx = 0; dx < span; ++dx) idx.push_back((dy + full - window) * full_span + dx + full - window);
    return gather_cols(table, std::move(idx));
}

}  // namespace

int effective_window(int window, int height, int width)
{
    if (window <= 0 || height <= 0 || width <= 0)
        throw ShapeError("window " + std::to_string(window) + " cannot tile a " + std::to_string(height) + "x" +
                         std::to_string(width) + " grid");
    // Largest window not above the configured one that tiles both sides.
    const int g = std::gcd(height, width);
    for (int w = std::min(window, g); w > 1; --w)
        if (g % w == 0) return w;
    return 1;
}

Var add_window_position(const Var& tokens, const Var& table, int height, int width, int window)
{
    if (tokens.dim(0) != height * width) throw ShapeError("add_window_position: token count mismatch");
    const int full = static_cast<int>(std::lround(std::sqrt(static_cast<double>(table.dim(0)))));
    if (window > full) throw ShapeError("add_window_position: window larger than table");
    std::vector<int> idx(static_cast<std::size_t>(height) * width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) idx[static_cast<std::size_t>(y) * width + x] = (y % window) * full + x % window;
    return ops::add(tokens, gather_rows(table, std::move(idx)));
}

WindowAttention WindowAttention::make(nn::ParamStore& ps, const std::string& name, int dim, int heads, int window,
                                      bool with_mod)
{
    if (dim % heads) throw std::invalid_argument(name + ": dim not divisible by heads");
    WindowAttention a;
    a.q = nn::linear(ps, name + ".q", dim, dim);
    a.k = nn::linear(ps, name + ".k", dim, dim);
    a.v = nn::linear(ps, name + ".v", dim, dim);
    a.proj = nn::linear(ps, name + ".proj", dim, dim);
    const int span = 2 * window - 1;
    a.bias_table = ps.add(name + ".rel_bias", {heads, span * span}, nn::init::uniform(0.02));
    if (with_mod) a.mod = ps.add(name + ".mod", {heads}, nn::init::zeros());
    a.heads = heads;
    a.window = window;
    return a;
}

Var WindowAttention::operator()(const Var& tokens, int height, int width, const Var& qp, const Var& kp) const
{
    const int w = effective_window(window, height, width);
    const int dim = tokens.dim(1);
    ops::AttentionOptions opt;
    opt.height = height;
    opt.width = width;
    opt.window = w;
    opt.heads = heads;
    opt.scale = 1.0 / std::sqrt(static_cast<double>(dim / heads));
    const Var out = ops::window_attention(q(tokens), k(tokens), v(tokens), shrink_bias_table(bias_table, window, w), qp,
                                          kp, mod, opt);
    return proj(out);
}

LeWinBlock LeWinBlock::make(nn::ParamStore& ps, const std::string& name, int dim, int heads, int window, int mlp_ratio)
{
    LeWinBlock b;
    b.pos = ps.add(name + ".pos", {window * window, dim}, nn::init::uniform(0.02));
    b.ln1 = nn::layer_norm(ps, name + ".ln1", dim);
    b.attn = WindowAttention::make(ps, name + ".attn", dim, heads, window, false);
    b.ln2 = nn::layer_norm(ps, name + ".ln2", dim);
    const int hidden = dim * mlp_ratio;
    b.fc1 = nn::linear(ps, name + ".fc1", dim, hidden);
    b.dw = nn::conv(ps, name + ".dwconv", hidden, hidden, 3, 1, hidden);
    b.fc2 = nn::linear(ps, name + ".fc2", hidden, dim);
    return b;
}

Var LeWinBlock::operator()(const Var& tokens, int height, int width) const
{
    const int w = effective_window(attn.window, height, width);
    const Var x = add_window_position(tokens, pos, height, width, w);
    const Var fa = ops::add(attn(ln1(x), height, width), tokens);
    Var h = ops::gelu(fc1(ln2(fa)));
    h = ops::chw_to_tokens(ops::gelu(dw(ops::tokens_to_chw(h, height, width))));
    return ops::add(fc2(h), fa);
}

Var group_tokens_2x2(const Var& tokens, int height, int width)
{
    if (height % 2 || width % 2) throw ShapeError("2x2 token grouping needs even grid dimensions");
    return ops::chw_to_tokens(ops::pixel_unshuffle(ops::tokens_to_chw(tokens, height, width), 2));
}

Var split_tokens_2x2(const Var& tokens, int height, int width)
{
    return ops::chw_to_tokens(ops::pixel_shuffle(ops::tokens_to_chw(tokens, height, width), 2));
}

Uformer::Uformer(nn::ParamStore& ps, const std::string& name, int in_channels, int out_channels, int dim, int depth,
                 int heads, int window, int mlp_ratio)
{
    in_ = nn::linear(ps, name + ".in", in_channels, dim);
    out_ = nn::linear(ps, name + ".out", dim, out_channels);
    auto stage = [&](std::vector<LeWinBlock>& s, const std::string& tag, int d) {
        for (int i = 0; i < depth; ++i)
            s.push_back(LeWinBlock::make(ps, name + "." + tag + std::to_string(i), d, heads, window, mlp_ratio));
    };
    stage(enc0_, "enc0_", dim);
    stage(enc1_, "enc1_", 2 * dim);
    stage(mid_, "mid", 4 * dim);
    stage(dec1_, "dec1_", 2 * dim);
    stage(dec0_, "dec0_", dim);
    down0_ = nn::linear(ps, name + ".down0", 4 * dim, 2 * dim);
    down1_ = nn::linear(ps, name + ".down1", 8 * dim, 4 * dim);
    up1_ = nn::linear(ps, name + ".up1", 4 * dim, 8 * dim);
    up0_ = nn::linear(ps, name + ".up0", 2 * dim, 4 * dim);
    skip1_ = nn::linear(ps, name + ".skip1", 4 * dim, 2 * dim);
    skip0_ = nn::linear(ps, name + ".skip0", 2 * dim, dim);
}

Var Uformer::operator()(const Var& x) const
{
    const int h = x.dim(1), w = x.dim(2);
    if (h % 4 || w % 4) throw ShapeError("uformer: spatial dims must be divisible by 4");
    auto run = [](const std::vector<LeWinBlock>& s, Var t, int hh, int ww) {
        for (const auto& b : s) t = b(t, hh, ww);
        return t;
    };
    auto cat = [](const Var& a, const Var& b) { return ops::concat_features({a, b}); };
    const Var e0 = run(enc0_, in_(ops::chw_to_tokens(x)), h, w);
    const Var e1 = run(enc1_, down0_(group_tokens_2x2(e0, h, w)), h / 2, w / 2);
    const Var m = run(mid_, down1_(group_tokens_2x2(e1, h / 2, w / 2)), h / 4, w / 4);
    const Var u1 = split_tokens_2x2(up1_(m), h / 4, w / 4);
    const Var d1 = run(dec1_, skip1_(cat(u1, e1)), h / 2, w / 2);
    const Var u0 = split_tokens_2x2(up0_(d1), h / 2, w / 2);
    const Var d0 = run(dec0_, skip0_(cat(u0, e0)), h, w);
    return ops::tokens_to_chw(out_(d0), h, w);
}

SfdBlock SfdBlock::make(nn::ParamStore& ps, const std::string& name, int dim, int heads, int window, int mlp_ratio)
{
    SfdBlock b;
    b.ln1 = nn::layer_norm(ps, name + ".ln1", dim);
    b.attn = WindowAttention::make(ps, name + ".attn", dim, heads, window, true);
    b.ln2 = nn::layer_norm(ps, name + ".ln2", dim);
    b.fc1 = nn::linear(ps, name + ".fc1", dim, dim * mlp_ratio);
    b.fc2 = nn::linear(ps, name + ".fc2", dim * mlp_ratio, dim);
    return b;
}

Var SfdBlock::operator()(const Var& tokens, int height, int width, const Var& qp, const Var& kp) const
{
    const Var a = ops::add(attn(ln1(tokens), height, width, qp, kp), tokens);
    return ops::add(fc2(ops::gelu(fc1(ln2(a)))), a);
}

}  // namespace sttvc
