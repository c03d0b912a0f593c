// Direct-loop reference kernels. Written for clarity, not speed.

#include <algorithm>
#include <cmath>
#include <vector>

#include "sttvc/kernels.hpp"

namespace sttvc::kernels::serial {

void conv2d_forward(const ConvGeometry& g, In x, In w, In b, Out y)
{
    const int ho = g.out_height(), wo = g.out_width();
    const int cig = g.in_per_group(), cog = g.out_per_group();
    for (int o = 0; o < g.out_channels; ++o) {
        const int grp = o / cog;
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = b.empty() ? 0.0 : b[o];
                for (int ci = 0; ci < cig; ++ci) {
                    const int c = grp * cig + ci;
                    for (int ky = 0; ky < g.kernel; ++ky)
                        for (int kx = 0; kx < g.kernel; ++kx) {
                            const int iy = oy * g.stride - g.pad + ky;
                            const int ix = ox * g.stride - g.pad + kx;
                            if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                            acc += w[((o * cig + ci) * g.kernel + ky) * g.kernel + kx] *
                                   x[(c * g.height + iy) * g.width + ix];
                        }
                }
                y[(o * ho + oy) * wo + ox] = acc;
            }
    }
}

void conv2d_backward(const ConvGeometry& g, In x, In w, In dy, Out dx, Out dw, Out db)
{
    const int ho = g.out_height(), wo = g.out_width();
    const int cig = g.in_per_group(), cog = g.out_per_group();
    for (int o = 0; o < g.out_channels; ++o) {
        const int grp = o / cog;
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const double d = dy[(o * ho + oy) * wo + ox];
                if (!db.empty()) db[o] += d;
                for (int ci = 0; ci < cig; ++ci) {
                    const int c = grp * cig + ci;
                    for (int ky = 0; ky < g.kernel; ++ky)
                        for (int kx = 0; kx < g.kernel; ++kx) {
                            const int iy = oy * g.stride - g.pad + ky;
                            const int ix = ox * g.stride - g.pad + kx;
                            if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                            const int wi = ((o * cig + ci) * g.kernel + ky) * g.kernel + kx;
                            const int xi = (c * g.height + iy) * g.width + ix;
                            if (!dw.empty()) dw[wi] += d * x[xi];
                            if (!dx.empty()) dx[xi] += d * w[wi];
                        }
                }
            }
    }
}

void linear_forward(const LinearGeometry& g, In x, In w, In b, Out y)
{
    for (int n = 0; n < g.tokens; ++n)
        for (int o = 0; o < g.out_features; ++o) {
            double acc = b.empty() ? 0.0 : b[o];
            for (int i = 0; i < g.in_features; ++i) acc += x[n * g.in_features + i] * w[o * g.in_features + i];
            y[n * g.out_features + o] = acc;
        }
}

void linear_backward(const LinearGeometry& g, In x, In w, In dy, Out dx, Out dw, Out db)
{
    for (int n = 0; n < g.tokens; ++n)
        for (int o = 0; o < g.out_features; ++o) {
            const double d = dy[n * g.out_features + o];
            if (!db.empty()) db[o] += d;
            for (int i = 0; i < g.in_features; ++i) {
                if (!dw.empty()) dw[o * g.in_features + i] += d * x[n * g.in_features + i];
                if (!dx.empty()) dx[n * g.in_features + i] += d * w[o * g.in_features + i];
            }
        }
}

namespace {

double attention_logit(const AttentionGeometry& g, const AttentionInputs& in, int h, int w, int i, int j)
{
    const int dh = g.head_dim();
    const int ti = window_token(g, w, i);
    const int tj = window_token(g, w, j);
    double qk = 0.0;
    for (int d = 0; d < dh; ++d) qk += in.q[ti * g.channels + h * dh + d] * in.k[tj * g.channels + h * dh + d];
    double logit = g.scale * qk;
    if (g.has_bias) logit += in.bias[h * g.bias_table_size() + relative_index(g.window, i, j)];
    if (g.has_prior) {
        double pk = 0.0;
        for (int d = 0; d < dh; ++d)
            pk += in.qp[ti * g.channels + h * dh + d] * in.kp[tj * g.channels + h * dh + d];
        logit += pk;
    }
    if (g.has_mod) logit += in.mod[h];
    return logit;
}

}  // namespace

void attention_forward(const AttentionGeometry& g, const AttentionInputs& in, Out out, Out probs)
{
    const int area = g.window_area();
    const int dh = g.head_dim();
    std::vector<double> row(static_cast<std::size_t>(area));
    for (int w = 0; w < g.windows(); ++w)
        for (int h = 0; h < g.heads; ++h)
            for (int i = 0; i < area; ++i) {
                double mx = -INFINITY;
                for (int j = 0; j < area; ++j) {
                    row[j] = attention_logit(g, in, h, w, i, j);
                    mx = std::max(mx, row[j]);
                }
                double sum = 0.0;
                for (int j = 0; j < area; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    sum += row[j];
                }
                const int ti = window_token(g, w, i);
                for (int d = 0; d < dh; ++d) out[ti * g.channels + h * dh + d] = 0.0;
                for (int j = 0; j < area; ++j) {
                    const double p = row[j] / sum;
                    probs[((static_cast<std::int64_t>(w) * g.heads + h) * area + i) * area + j] = p;
                    const int tj = window_token(g, w, j);
                    for (int d = 0; d < dh; ++d)
                        out[ti * g.channels + h * dh + d] += p * in.v[tj * g.channels + h * dh + d];
                }
            }
}

void attention_backward(const AttentionGeometry& g, const AttentionInputs& in, In probs, In dout,
                        const AttentionGrads& grads)
{
    const int area = g.window_area();
    const int dh = g.head_dim();
    std::vector<double> dp(static_cast<std::size_t>(area));
    for (int w = 0; w < g.windows(); ++w)
        for (int h = 0; h < g.heads; ++h)
            for (int i = 0; i < area; ++i) {
                const int ti = window_token(g, w, i);
                const double* p = &probs[((static_cast<std::int64_t>(w) * g.heads + h) * area + i) * area];
                double dot = 0.0;
                for (int j = 0; j < area; ++j) {
                    const int tj = window_token(g, w, j);
                    double s = 0.0;
                    for (int d = 0; d < dh; ++d)
                        s += dout[ti * g.channels + h * dh + d] * in.v[tj * g.channels + h * dh + d];
                    dp[j] = s;
                    dot += p[j] * s;
                    if (!grads.v.empty())
                        for (int d = 0; d < dh; ++d)
                            grads.v[tj * g.channels + h * dh + d] += p[j] * dout[ti * g.channels + h * dh + d];
                }
                for (int j = 0; j < area; ++j) {
                    const double ds = p[j] * (dp[j] - dot);
                    const int tj = window_token(g, w, j);
                    for (int d = 0; d < dh; ++d) {
                        const int a = ti * g.channels + h * dh + d;
                        const int b = tj * g.channels + h * dh + d;
                        if (!grads.q.empty()) grads.q[a] += g.scale * ds * in.k[b];
                        if (!grads.k.empty()) grads.k[b] += g.scale * ds * in.q[a];
                        if (g.has_prior) {
                            if (!grads.qp.empty()) grads.qp[a] += ds * in.kp[b];
                            if (!grads.kp.empty()) grads.kp[b] += ds * in.qp[a];
                        }
                    }
                    if (g.has_bias && !grads.bias.empty())
                        grads.bias[h * g.bias_table_size() + relative_index(g.window, i, j)] += ds;
                    if (g.has_mod && !grads.mod.empty()) grads.mod[h] += ds;
                }
            }
}

void deform_forward(const DeformGeometry& g, const DeformInputs& in, Out y)
{
    const int plane = g.plane();
    const int cpg = g.channels_per_group();
    for (int o = 0; o < g.out_channels; ++o)
        for (int py = 0; py < g.height; ++py)
            for (int px = 0; px < g.width; ++px) {
                const int p = py * g.width + px;
                double acc = in.bias.empty() ? 0.0 : in.bias[o];
                for (int c = 0; c < g.in_channels; ++c) {
                    const int grp = c / cpg;
                    for (int k = 0; k < DeformGeometry::taps; ++k) {
                        const int gk = grp * DeformGeometry::taps + k;
                        const double sx = px + (k % 3 - 1) + in.offset[(2 * gk) * plane + p];
                        const double sy = py + (k / 3 - 1) + in.offset[(2 * gk + 1) * plane + p];
                        const double m = in.mask[gk * plane + p];
                        const auto s = bilinear_clamped(&in.x[c * plane], g.height, g.width, sx, sy);
                        acc += in.weight[(o * g.in_channels + c) * DeformGeometry::taps + k] * m * s.value;
                    }
                }
                y[o * plane + p] = acc;
            }
}

void deform_backward(const DeformGeometry& g, const DeformInputs& in, In dy, const DeformGrads& grads)
{
    const int plane = g.plane();
    const int cpg = g.channels_per_group();
    for (int o = 0; o < g.out_channels; ++o)
        for (int py = 0; py < g.height; ++py)
            for (int px = 0; px < g.width; ++px) {
                const int p = py * g.width + px;
                const double d = dy[o * plane + p];
                if (!grads.bias.empty()) grads.bias[o] += d;
                for (int c = 0; c < g.in_channels; ++c) {
                    const int grp = c / cpg;
                    for (int k = 0; k < DeformGeometry::taps; ++k) {
                        const int gk = grp * DeformGeometry::taps + k;
                        const double sx = px + (k % 3 - 1) + in.offset[(2 * gk) * plane + p];
                        const double sy = py + (k / 3 - 1) + in.offset[(2 * gk + 1) * plane + p];
                        const double m = in.mask[gk * plane + p];
                        const double wt = in.weight[(o * g.in_channels + c) * DeformGeometry::taps + k];
                        const auto s = bilinear_clamped(&in.x[c * plane], g.height, g.width, sx, sy);
                        if (!grads.weight.empty())
                            grads.weight[(o * g.in_channels + c) * DeformGeometry::taps + k] += d * m * s.value;
                        if (!grads.mask.empty()) grads.mask[gk * plane + p] += d * wt * s.value;
                        if (!grads.offset.empty()) {
                            grads.offset[(2 * gk) * plane + p] += d * wt * m * s.dvalue_dx;
                            grads.offset[(2 * gk + 1) * plane + p] += d * wt * m * s.dvalue_dy;
                        }
                        if (!grads.x.empty()) {
                            // Scatter through the clamped bilinear weights.
                            const double cx = std::clamp(sx, 0.0, static_cast<double>(g.width - 1));
                            const double cy = std::clamp(sy, 0.0, static_cast<double>(g.height - 1));
                            const int x0 = static_cast<int>(std::floor(cx));
                            const int y0 = static_cast<int>(std::floor(cy));
                            const int x1 = std::min(x0 + 1, g.width - 1);
                            const int y1 = std::min(y0 + 1, g.height - 1);
                            const double ax = cx - x0, ay = cy - y0;
                            const double gv = d * wt * m;
                            double* dxc = &grads.x[c * plane];
                            dxc[y0 * g.width + x0] += gv * (1 - ax) * (1 - ay);
                            dxc[y0 * g.width + x1] += gv * ax * (1 - ay);
                            dxc[y1 * g.width + x0] += gv * (1 - ax) * ay;
                            dxc[y1 * g.width + x1] += gv * ax * ay;
                        }
                    }
                }
            }
}

}  // namespace sttvc::kernels::serial
