// OpenMP + GEMM kernels. Work is partitioned over disjoint outputs so
// results do not depend on the thread count.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "sttvc/kernels.hpp"

namespace sttvc::kernels::parallel {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

ConstMapMat cmat(const double* p, int rows, int cols) { return ConstMapMat(p, rows, cols); }
MapMat mat(double* p, int rows, int cols) { return MapMat(p, rows, cols); }

void im2col(const ConvGeometry& g, const double* x, int c0, double* col)
{
    const int ho = g.out_height(), wo = g.out_width();
    const int k = g.kernel;
    const int rows = g.in_per_group() * k * k;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int ci = r / (k * k);
        const int ky = (r / k) % k;
        const int kx = r % k;
        const double* src = x + static_cast<std::int64_t>(c0 + ci) * g.height * g.width;
        double* dst = col + static_cast<std::int64_t>(r) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            double* drow = dst + oy * wo;
            if (iy < 0 || iy >= g.height) {
                std::fill(drow, drow + wo, 0.0);
                continue;
            }
            const double* srow = src + iy * g.width;
            for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * g.stride - g.pad + kx;
                drow[ox] = (ix < 0 || ix >= g.width) ? 0.0 : srow[ix];
            }
        }
    }
}

// Accumulates columns back into the image; parallel over input channels so
// each thread owns its destination plane.
void col2im(const ConvGeometry& g, const double* col, int c0, double* dx)
{
    const int ho = g.out_height(), wo = g.out_width();
    const int k = g.kernel;
    const int cig = g.in_per_group();
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < cig; ++ci) {
        double* dst = dx + static_cast<std::int64_t>(c0 + ci) * g.height * g.width;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const double* src = col + static_cast<std::int64_t>((ci * k + ky) * k + kx) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.height) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.width) continue;
                        dst[iy * g.width + ix] += src[oy * wo + ox];
                    }
                }
            }
    }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }
bool is_depthwise(const ConvGeometry& g)
{
    return g.groups == g.in_channels && g.groups == g.out_channels && g.groups > 1;
}

void depthwise_forward(const ConvGeometry& g, In x, In w, In b, Out y)
{
    const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < g.in_channels; ++c) {
        const double* src = &x[static_cast<std::size_t>(c) * g.height * g.width];
        const double* wc = &w[static_cast<std::size_t>(c) * k * k];
        double* dst = &y[static_cast<std::size_t>(c) * ho * wo];
        const double bias = b.empty() ? 0.0 : b[c];
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = bias;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.height) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.width) continue;
                        acc += wc[ky * k + kx] * src[iy * g.width + ix];
                    }
                }
                dst[oy * wo + ox] = acc;
            }
    }
}

void depthwise_backward(const ConvGeometry& g, In x, In w, In dy, Out dx, Out dw, Out db)
{
    const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < g.in_channels; ++c) {
        const double* src = &x[static_cast<std::size_t>(c) * g.height * g.width];
        const double* wc = &w[static_cast<std::size_t>(c) * k * k];
        const double* d = &dy[static_cast<std::size_t>(c) * ho * wo];
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const double gv = d[oy * wo + ox];
                if (!db.empty()) db[c] += gv;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.height) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.width) continue;
                        if (!dw.empty()) dw[static_cast<std::size_t>(c) * k * k + ky * k + kx] += gv * src[iy * g.width + ix];
                        if (!dx.empty())
                            dx[static_cast<std::size_t>(c) * g.height * g.width + iy * g.width + ix] += gv * wc[ky * k + kx];
                    }
                }
            }
    }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, In x, In w, In b, Out y)
{
    if (is_depthwise(g)) return depthwise_forward(g, x, w, b, y);
    const int ho = g.out_height(), wo = g.out_width();
    const int positions = ho * wo;
    const int cig = g.in_per_group(), cog = g.out_per_group();
    const int rows = cig * g.kernel * g.kernel;
    std::vector<double> col;
    if (!is_pointwise(g)) col.resize(static_cast<std::size_t>(rows) * positions);
    for (int grp = 0; grp < g.groups; ++grp) {
        const double* src = x.data() + static_cast<std::int64_t>(grp) * cig * positions;
        if (!is_pointwise(g)) {
            im2col(g, x.data(), grp * cig, col.data());
            src = col.data();
        }
        auto out = mat(y.data() + static_cast<std::int64_t>(grp) * cog * positions, cog, positions);
        out.noalias() = cmat(w.data() + static_cast<std::int64_t>(grp) * cog * rows, cog, rows) *
                        cmat(src, rows, positions);
        if (!b.empty())
            for (int o = 0; o < cog; ++o) out.row(o).array() += b[grp * cog + o];
    }
}

void conv2d_backward(const ConvGeometry& g, In x, In w, In dy, Out dx, Out dw, Out db)
{
    if (is_depthwise(g)) return depthwise_backward(g, x, w, dy, dx, dw, db);
    const int ho = g.out_height(), wo = g.out_width();
    const int positions = ho * wo;
    const int cig = g.in_per_group(), cog = g.out_per_group();
    const int rows = cig * g.kernel * g.kernel;
    const bool pointwise = is_pointwise(g);
    std::vector<double> col, dcol;
    if (!pointwise) col.resize(static_cast<std::size_t>(rows) * positions);
    for (int grp = 0; grp < g.groups; ++grp) {
        auto dout = cmat(dy.data() + static_cast<std::int64_t>(grp) * cog * positions, cog, positions);
        if (!db.empty())
            for (int o = 0; o < cog; ++o) db[grp * cog + o] += dout.row(o).sum();
        const double* src = x.data() + static_cast<std::int64_t>(grp) * cig * positions;
        if (!dw.empty()) {
            if (!pointwise) {
                im2col(g, x.data(), grp * cig, col.data());
                src = col.data();
            }
            mat(dw.data() + static_cast<std::int64_t>(grp) * cog * rows, cog, rows).noalias() +=
                dout * cmat(src, rows, positions).transpose();
        }
        if (!dx.empty()) {
            auto wg = cmat(w.data() + static_cast<std::int64_t>(grp) * cog * rows, cog, rows);
            if (pointwise) {
                mat(dx.data() + static_cast<std::int64_t>(grp) * cig * positions, cig, positions).noalias() +=
                    wg.transpose() * dout;
            } else {
                dcol.resize(static_cast<std::size_t>(rows) * positions);
                mat(dcol.data(), rows, positions).noalias() = wg.transpose() * dout;
                col2im(g, dcol.data(), grp * cig, dx.data());
            }
        }
    }
}

void linear_forward(const LinearGeometry& g, In x, In w, In b, Out y)
{
    auto out = mat(y.data(), g.tokens, g.out_features);
    out.noalias() = cmat(x.data(), g.tokens, g.in_features) * cmat(w.data(), g.out_features, g.in_features).transpose();
    if (!b.empty()) out.rowwise() += ConstMapVec(b.data(), g.out_features).transpose();
}

void linear_backward(const LinearGeometry& g, In x, In w, In dy, Out dx, Out dw, Out db)
{
    auto dout = cmat(dy.data(), g.tokens, g.out_features);
    if (!db.empty()) MapVec(db.data(), g.out_features) += dout.colwise().sum().transpose();
    if (!dw.empty())
        mat(dw.data(), g.out_features, g.in_features).noalias() +=
            dout.transpose() * cmat(x.data(), g.tokens, g.in_features);
    if (!dx.empty())
        mat(dx.data(), g.tokens, g.in_features).noalias() += dout * cmat(w.data(), g.out_features, g.in_features);
}

namespace {

struct WindowScratch {
    RowMat q, k, v, qp, kp, s;
};

std::vector<int> window_index_table(const AttentionGeometry& g)
{
    std::vector<int> idx(static_cast<std::size_t>(g.windows()) * g.window_area());
    for (int w = 0; w < g.windows(); ++w)
        for (int t = 0; t < g.window_area(); ++t) idx[w * g.window_area() + t] = window_token(g, w, t);
    return idx;
}

std::vector<int> relative_index_table(const AttentionGeometry& g)
{
    const int area = g.window_area();
    std::vector<int> rel(static_cast<std::size_t>(area) * area);
    for (int i = 0; i < area; ++i)
        for (int j = 0; j < area; ++j) rel[i * area + j] = relative_index(g.window, i, j);
    return rel;
}

void gather(const double* src, const int* tokens, int area, int channels, int offset, int dh, RowMat& dst)
{
    dst.resize(area, dh);
    for (int t = 0; t < area; ++t)
        for (int d = 0; d < dh; ++d) dst(t, d) = src[static_cast<std::int64_t>(tokens[t]) * channels + offset + d];
}

void scatter_add(const RowMat& src, const int* tokens, int area, int channels, int offset, double* dst)
{
    for (int t = 0; t < area; ++t)
        for (int d = 0; d < src.cols(); ++d) dst[static_cast<std::int64_t>(tokens[t]) * channels + offset + d] += src(t, d);
}

}  // namespace

void attention_forward(const AttentionGeometry& g, const AttentionInputs& in, Out out, Out probs)
{
    const int area = g.window_area();
    const int dh = g.head_dim();
    const auto tokens = window_index_table(g);
    const auto rel = relative_index_table(g);
    const int tasks = g.windows() * g.heads;
#pragma omp parallel
    {
        WindowScratch ws;
#pragma omp for schedule(static)
        for (int task = 0; task < tasks; ++task) {
            const int w = task / g.heads, h = task % g.heads;
            const int* tok = &tokens[static_cast<std::size_t>(w) * area];
            gather(in.q.data(), tok, area, g.channels, h * dh, dh, ws.q);
            gather(in.k.data(), tok, area, g.channels, h * dh, dh, ws.k);
            gather(in.v.data(), tok, area, g.channels, h * dh, dh, ws.v);
            ws.s.noalias() = g.scale * (ws.q * ws.k.transpose());
            if (g.has_prior) {
                gather(in.qp.data(), tok, area, g.channels, h * dh, dh, ws.qp);
                gather(in.kp.data(), tok, area, g.channels, h * dh, dh, ws.kp);
                ws.s.noalias() += ws.qp * ws.kp.transpose();
            }
            if (g.has_bias) {
                const double* table = &in.bias[static_cast<std::size_t>(h) * g.bias_table_size()];
                for (int i = 0; i < area; ++i)
                    for (int j = 0; j < area; ++j) ws.s(i, j) += table[rel[i * area + j]];
            }
            if (g.has_mod) ws.s.array() += in.mod[h];
            for (int i = 0; i < area; ++i) {
                auto r = ws.s.row(i);
                const double mx = r.maxCoeff();
                r = (r.array() - mx).exp();
                r /= r.sum();
            }
            std::copy(ws.s.data(), ws.s.data() + static_cast<std::size_t>(area) * area,
                      probs.data() + static_cast<std::int64_t>(task) * area * area);
            RowMat o = ws.s * ws.v;
            for (int t = 0; t < area; ++t)
                for (int d = 0; d < dh; ++d) out[static_cast<std::int64_t>(tok[t]) * g.channels + h * dh + d] = o(t, d);
        }
    }
}

void attention_backward(const AttentionGeometry& g, const AttentionInputs& in, In probs, In dout,
                        const AttentionGrads& grads)
{
    const int area = g.window_area();
    const int dh = g.head_dim();
    const auto tokens = window_index_table(g);
    const auto rel = relative_index_table(g);
    const int tasks = g.windows() * g.heads;
    const bool need_ds = (g.has_bias && !grads.bias.empty()) || (g.has_mod && !grads.mod.empty());
    std::vector<double> ds_all;
    if (need_ds) ds_all.resize(static_cast<std::size_t>(tasks) * area * area);
#pragma omp parallel
    {
        WindowScratch ws;
        RowMat dO, P, dP;
#pragma omp for schedule(static)
        for (int task = 0; task < tasks; ++task) {
            const int w = task / g.heads, h = task % g.heads;
            const int* tok = &tokens[static_cast<std::size_t>(w) * area];
            P = cmat(probs.data() + static_cast<std::int64_t>(task) * area * area, area, area);
            gather(dout.data(), tok, area, g.channels, h * dh, dh, dO);
            gather(in.v.data(), tok, area, g.channels, h * dh, dh, ws.v);
            if (!grads.v.empty()) scatter_add(P.transpose() * dO, tok, area, g.channels, h * dh, grads.v.data());
            dP.noalias() = dO * ws.v.transpose();
            const Eigen::VectorXd dot = (P.array() * dP.array()).rowwise().sum();
            ws.s = P.array() * (dP.array().colwise() - dot.array());  // d logits
            gather(in.q.data(), tok, area, g.channels, h * dh, dh, ws.q);
            gather(in.k.data(), tok, area, g.channels, h * dh, dh, ws.k);
            if (!grads.q.empty()) scatter_add(g.scale * (ws.s * ws.k), tok, area, g.channels, h * dh, grads.q.data());
            if (!grads.k.empty())
                scatter_add(g.scale * (ws.s.transpose() * ws.q), tok, area, g.channels, h * dh, grads.k.data());
            if (g.has_prior) {
                gather(in.qp.data(), tok, area, g.channels, h * dh, dh, ws.qp);
                gather(in.kp.data(), tok, area, g.channels, h * dh, dh, ws.kp);
                if (!grads.qp.empty()) scatter_add(ws.s * ws.kp, tok, area, g.channels, h * dh, grads.qp.data());
                if (!grads.kp.empty())
                    scatter_add(ws.s.transpose() * ws.qp, tok, area, g.channels, h * dh, grads.kp.data());
            }
            if (need_ds)
                std::copy(ws.s.data(), ws.s.data() + static_cast<std::size_t>(area) * area,
                          ds_all.data() + static_cast<std::int64_t>(task) * area * area);
        }
    }
    if (!need_ds) return;
    // Per-head reductions in fixed window order.
#pragma omp parallel for schedule(static)
    for (int h = 0; h < g.heads; ++h) {
        for (int w = 0; w < g.windows(); ++w) {
            const double* ds = ds_all.data() + (static_cast<std::int64_t>(w) * g.heads + h) * area * area;
            for (int ij = 0; ij < area * area; ++ij) {
                if (g.has_bias && !grads.bias.empty())
                    grads.bias[static_cast<std::size_t>(h) * g.bias_table_size() + rel[ij]] += ds[ij];
                if (g.has_mod && !grads.mod.empty()) grads.mod[h] += ds[ij];
            }
        }
    }
}

namespace {

// Builds the modulated sampling columns (C*9 x HW) for the GEMM.
void deform_columns(const DeformGeometry& g, const DeformInputs& in, std::vector<double>& col)
{
    const int plane = g.plane();
    const int cpg = g.channels_per_group();
    col.resize(static_cast<std::size_t>(g.in_channels) * DeformGeometry::taps * plane);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < g.in_channels; ++c) {
        const int grp = c / cpg;
        const double* xc = &in.x[static_cast<std::size_t>(c) * plane];
        for (int k = 0; k < DeformGeometry::taps; ++k) {
            const int gk = grp * DeformGeometry::taps + k;
            const double* offx = &in.offset[static_cast<std::size_t>(2 * gk) * plane];
            const double* offy = &in.offset[static_cast<std::size_t>(2 * gk + 1) * plane];
            const double* m = &in.mask[static_cast<std::size_t>(gk) * plane];
            double* dst = &col[(static_cast<std::size_t>(c) * DeformGeometry::taps + k) * plane];
            for (int py = 0; py < g.height; ++py)
                for (int px = 0; px < g.width; ++px) {
                    const int p = py * g.width + px;
                    const double sx = px + (k % 3 - 1) + offx[p];
                    const double sy = py + (k / 3 - 1) + offy[p];
                    dst[p] = m[p] * bilinear_clamped(xc, g.height, g.width, sx, sy).value;
                }
        }
    }
}

}  // namespace

void deform_forward(const DeformGeometry& g, const DeformInputs& in, Out y)
{
    std::vector<double> col;
    deform_columns(g, in, col);
    const int rows = g.in_channels * DeformGeometry::taps;
    auto out = mat(y.data(), g.out_channels, g.plane());
    out.noalias() = cmat(in.weight.data(), g.out_channels, rows) * cmat(col.data(), rows, g.plane());
    if (!in.bias.empty())
        for (int o = 0; o < g.out_channels; ++o) out.row(o).array() += in.bias[o];
}

void deform_backward(const DeformGeometry& g, const DeformInputs& in, In dy, const DeformGrads& grads)
{
    const int plane = g.plane();
    const int rows = g.in_channels * DeformGeometry::taps;
    auto dout = cmat(dy.data(), g.out_channels, plane);
    if (!grads.bias.empty())
        for (int o = 0; o < g.out_channels; ++o) grads.bias[o] += dout.row(o).sum();
    if (!grads.weight.empty()) {
        std::vector<double> col;
        deform_columns(g, in, col);
        mat(grads.weight.data(), g.out_channels, rows).noalias() += dout * cmat(col.data(), rows, plane).transpose();
    }
    if (grads.x.empty() && grads.offset.empty() && grads.mask.empty()) return;
    std::vector<double> dcol(static_cast<std::size_t>(rows) * plane);
    mat(dcol.data(), rows, plane).noalias() = cmat(in.weight.data(), g.out_channels, rows).transpose() * dout;

    const int cpg = g.channels_per_group();
    // Offset/mask gradients are shared by the channels of a group, so groups
    // are the unit of parallel work.
#pragma omp parallel for schedule(static)
    for (int grp = 0; grp < g.groups; ++grp) {
        for (int c = grp * cpg; c < (grp + 1) * cpg; ++c) {
            const double* xc = &in.x[static_cast<std::size_t>(c) * plane];
            for (int k = 0; k < DeformGeometry::taps; ++k) {
                const int gk = grp * DeformGeometry::taps + k;
                const double* offx = &in.offset[static_cast<std::size_t>(2 * gk) * plane];
                const double* offy = &in.offset[static_cast<std::size_t>(2 * gk + 1) * plane];
                const double* m = &in.mask[static_cast<std::size_t>(gk) * plane];
                const double* dc = &dcol[(static_cast<std::size_t>(c) * DeformGeometry::taps + k) * plane];
                for (int py = 0; py < g.height; ++py)
                    for (int px = 0; px < g.width; ++px) {
                        const int p = py * g.width + px;
                        const double d = dc[p];
                        if (d == 0.0) continue;
                        const double sx = px + (k % 3 - 1) + offx[p];
                        const double sy = py + (k / 3 - 1) + offy[p];
                        const auto s = bilinear_clamped(xc, g.height, g.width, sx, sy);
                        if (!grads.mask.empty()) grads.mask[static_cast<std::size_t>(gk) * plane + p] += d * s.value;
                        if (!grads.offset.empty()) {
                            grads.offset[static_cast<std::size_t>(2 * gk) * plane + p] += d * m[p] * s.dvalue_dx;
                            grads.offset[static_cast<std::size_t>(2 * gk + 1) * plane + p] += d * m[p] * s.dvalue_dy;
                        }
                        if (!grads.x.empty()) {
                            const double cx = std::clamp(sx, 0.0, static_cast<double>(g.width - 1));
                            const double cy = std::clamp(sy, 0.0, static_cast<double>(g.height - 1));
                            const int x0 = static_cast<int>(std::floor(cx));
                            const int y0 = static_cast<int>(std::floor(cy));
                            const int x1 = std::min(x0 + 1, g.width - 1);
                            const int y1 = std::min(y0 + 1, g.height - 1);
                            const double ax = cx - x0, ay = cy - y0;
                            const double gv = d * m[p];
                            double* dxc = &grads.x[static_cast<std::size_t>(c) * plane];
                            dxc[y0 * g.width + x0] += gv * (1 - ax) * (1 - ay);
                            dxc[y0 * g.width + x1] += gv * ax * (1 - ay);
                            dxc[y1 * g.width + x0] += gv * (1 - ax) * ay;
                            dxc[y1 * g.width + x1] += gv * ax * ay;
                        }
                    }
            }
        }
    }
}

}  // namespace sttvc::kernels::parallel
