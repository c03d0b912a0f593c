#include "sttvc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sttvc/kernels.hpp"

namespace sttvc::ops {

namespace kp = kernels::parallel;

namespace {

// Gradient buffer of input i, or nullptr when that input needs none.
Tensor* grad_of(Node& n, std::size_t i)
{
    if (i >= n.inputs.size() || !n.inputs[i] || !n.inputs[i]->requires_grad) return nullptr;
    return &n.inputs[i]->grad_buffer();
}

const Tensor& value_of(Node& n, std::size_t i) { return n.inputs[i]->value; }

std::span<double> span_or_empty(Tensor* t) { return t ? t->span() : std::span<double>(); }

void require_rank(const Var& x, int rank, const char* what)
{
    if (x.value().rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
}

template <typename F, typename G>
Var unary(const Var& x, F f, G df)
{
    const Tensor& xv = x.value();
    Tensor y(xv.shape());
    const std::int64_t n = xv.numel();
    for (std::int64_t i = 0; i < n; ++i) y[i] = f(xv[i]);
    return make_result(std::move(y), {x}, [df](Node& node) {
        Tensor* gx = grad_of(node, 0);
        if (!gx) return;
        const Tensor& xin = value_of(node, 0);
        const std::int64_t m = xin.numel();
        for (std::int64_t i = 0; i < m; ++i) (*gx)[i] += node.grad[i] * df(xin[i], node.value[i]);
    });
}

}  // namespace

Var add(const Var& a, const Var& b)
{
    require_same_shape(a.value(), b.value(), "add");
    Tensor y = a.value();
    y += b.value();
    return make_result(std::move(y), {a, b}, [](Node& n) {
        if (Tensor* g = grad_of(n, 0)) *g += n.grad;
        if (Tensor* g = grad_of(n, 1)) *g += n.grad;
    });
}

Var sub(const Var& a, const Var& b)
{
    require_same_shape(a.value(), b.value(), "sub");
    Tensor y = a.value();
    const std::int64_t n = y.numel();
    for (std::int64_t i = 0; i < n; ++i) y[i] -= b.value()[i];
    return make_result(std::move(y), {a, b}, [](Node& n) {
        if (Tensor* g = grad_of(n, 0)) *g += n.grad;
        if (Tensor* g = grad_of(n, 1))
            for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] -= n.grad[i];
    });
}

Var mul(const Var& a, const Var& b)
{
    require_same_shape(a.value(), b.value(), "mul");
    Tensor y = a.value();
    const std::int64_t n = y.numel();
    for (std::int64_t i = 0; i < n; ++i) y[i] *= b.value()[i];
    return make_result(std::move(y), {a, b}, [](Node& n) {
        const Tensor& av = value_of(n, 0);
        const Tensor& bv = value_of(n, 1);
        if (Tensor* g = grad_of(n, 0))
            for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += n.grad[i] * bv[i];
        if (Tensor* g = grad_of(n, 1))
            for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += n.grad[i] * av[i];
    });
}

Var scale(const Var& a, double s)
{
    Tensor y = a.value();
    y *= s;
    return make_result(std::move(y), {a}, [s](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += s * n.grad[i];
    });
}

Var add_scalar(const Var& a, double s)
{
    Tensor y = a.value();
    for (double& v : y.storage()) v += s;
    return make_result(std::move(y), {a}, [](Node& n) {
        if (Tensor* g = grad_of(n, 0)) *g += n.grad;
    });
}

Var sum_of(const std::vector<Var>& xs)
{
    if (xs.empty()) throw ShapeError("sum_of: no inputs");
    Tensor y = xs[0].value();
    for (std::size_t i = 1; i < xs.size(); ++i) y += xs[i].value();
    return make_result(std::move(y), xs, [](Node& n) {
        for (std::size_t i = 0; i < n.inputs.size(); ++i)
            if (Tensor* g = grad_of(n, i)) *g += n.grad;
    });
}

Var relu(const Var& x)
{
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& x)
{
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [](double v, double) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v); });
}

Var sigmoid(const Var& x)
{
    return unary(
        x,
        [](double v) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& x)
{
    return unary(
        x, [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
        [](double v, double) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

Var clamp(const Var& x, double lo, double hi)
{
    return unary(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var sum(const Var& x)
{
    double s = 0.0;
    for (double v : x.value().storage()) s += v;
    return make_result(Tensor::scalar(s), {x}, [](Node& n) {
        if (Tensor* g = grad_of(n, 0)) {
            const double d = n.grad[0];
            for (double& v : g->storage()) v += d;
        }
    });
}

Var mean(const Var& x)
{
    const double count = static_cast<double>(x.numel());
    return scale(sum(x), 1.0 / count);
}

Var mse(const Var& a, const Var& b)
{
    require_same_shape(a.value(), b.value(), "mse");
    const std::int64_t n = a.numel();
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    return make_result(Tensor::scalar(s / static_cast<double>(n)), {a, b}, [](Node& node) {
        const Tensor& av = value_of(node, 0);
        const Tensor& bv = value_of(node, 1);
        const std::int64_t m = av.numel();
        const double k = 2.0 * node.grad[0] / static_cast<double>(m);
        Tensor* ga = grad_of(node, 0);
        Tensor* gb = grad_of(node, 1);
        for (std::int64_t i = 0; i < m; ++i) {
            const double d = k * (av[i] - bv[i]);
            if (ga) (*ga)[i] += d;
            if (gb) (*gb)[i] -= d;
        }
    });
}

Var reshape(const Var& x, Shape shape)
{
    Tensor y = x.value().reshaped(std::move(shape));
    return make_result(std::move(y), {x}, [](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += n.grad[i];
    });
}

Var chw_to_tokens(const Var& x)
{
    require_rank(x, 3, "chw_to_tokens");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int hw = h * w;
    Tensor y(Shape{hw, c});
    const double* src = x.value().data();
    for (int ch = 0; ch < c; ++ch)
        for (int p = 0; p < hw; ++p) y[static_cast<std::int64_t>(p) * c + ch] = src[static_cast<std::int64_t>(ch) * hw + p];
    return make_result(std::move(y), {x}, [c, hw](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int ch = 0; ch < c; ++ch)
                for (int p = 0; p < hw; ++p)
                    (*g)[static_cast<std::int64_t>(ch) * hw + p] += n.grad[static_cast<std::int64_t>(p) * c + ch];
    });
}

Var tokens_to_chw(const Var& x, int height, int width)
{
    require_rank(x, 2, "tokens_to_chw");
    const int hw = x.dim(0), c = x.dim(1);
    if (hw != height * width) throw ShapeError("tokens_to_chw: token count does not match grid");
    Tensor y(Shape{c, height, width});
    const double* src = x.value().data();
    for (int p = 0; p < hw; ++p)
        for (int ch = 0; ch < c; ++ch) y[static_cast<std::int64_t>(ch) * hw + p] = src[static_cast<std::int64_t>(p) * c + ch];
    return make_result(std::move(y), {x}, [c, hw](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int p = 0; p < hw; ++p)
                for (int ch = 0; ch < c; ++ch)
                    (*g)[static_cast<std::int64_t>(p) * c + ch] += n.grad[static_cast<std::int64_t>(ch) * hw + p];
    });
}

Var concat_channels(const std::vector<Var>& xs)
{
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    const int h = xs[0].dim(1), w = xs[0].dim(2);
    int total = 0;
    for (const Var& x : xs) {
        require_rank(x, 3, "concat_channels");
        if (x.dim(1) != h || x.dim(2) != w) throw ShapeError("concat_channels: spatial mismatch");
        total += x.dim(0);
    }
    Tensor y(Shape{total, h, w});
    std::int64_t off = 0;
    for (const Var& x : xs) {
        std::copy(x.value().data(), x.value().data() + x.numel(), y.data() + off);
        off += x.numel();
    }
    return make_result(std::move(y), xs, [](Node& n) {
        std::int64_t o = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
            const std::int64_t m = n.inputs[i]->value.numel();
            if (Tensor* g = grad_of(n, i))
                for (std::int64_t j = 0; j < m; ++j) (*g)[j] += n.grad[o + j];
            o += m;
        }
    });
}

Var concat_features(const std::vector<Var>& xs)
{
    if (xs.empty()) throw ShapeError("concat_features: no inputs");
    const int n = xs[0].dim(0);
    int total = 0;
    for (const Var& x : xs) {
        require_rank(x, 2, "concat_features");
        if (x.dim(0) != n) throw ShapeError("concat_features: token count mismatch");
        total += x.dim(1);
    }
    Tensor y(Shape{n, total});
    int off = 0;
    for (const Var& x : xs) {
        const int c = x.dim(1);
        for (int i = 0; i < n; ++i)
            std::copy_n(x.value().data() + static_cast<std::int64_t>(i) * c, c, y.data() + static_cast<std::int64_t>(i) * total + off);
        off += c;
    }
    return make_result(std::move(y), xs, [n, total](Node& node) {
        int o = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const int c = node.inputs[k]->value.dim(1);
            if (Tensor* g = grad_of(node, k))
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < c; ++j) g->at(i, j) += node.grad.at(i, o + j);
            o += c;
        }
    });
}

Var slice_channels(const Var& x, int start, int count)
{
    require_rank(x, 3, "slice_channels");
    if (start < 0 || count < 0 || start + count > x.dim(0)) throw ShapeError("slice_channels: range out of bounds");
    const std::int64_t plane = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
    Tensor y(Shape{count, x.dim(1), x.dim(2)});
    std::copy(x.value().data() + start * plane, x.value().data() + (start + count) * plane, y.data());
    return make_result(std::move(y), {x}, [start, plane](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (std::int64_t j = 0; j < n.grad.numel(); ++j) (*g)[start * plane + j] += n.grad[j];
    });
}

Var pixel_shuffle(const Var& x, int r)
{
    require_rank(x, 3, "pixel_shuffle");
    const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (cin % (r * r)) throw ShapeError("pixel_shuffle: channels not divisible by r^2");
    const int c = cin / (r * r);
    const int ho = h * r, wo = w * r;
    Tensor y(Shape{c, ho, wo});
    // out[c, y*r+i, x*r+j] = in[c*r*r + i*r + j, y, x]
    auto index_in = [=](int ch, int i, int j, int yy, int xx) {
        return ((static_cast<std::int64_t>(ch) * r * r + i * r + j) * h + yy) * w + xx;
    };
    for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < h; ++yy)
            for (int i = 0; i < r; ++i)
                for (int xx = 0; xx < w; ++xx)
                    for (int j = 0; j < r; ++j)
                        y[(static_cast<std::int64_t>(ch) * ho + yy * r + i) * wo + xx * r + j] =
                            x.value()[index_in(ch, i, j, yy, xx)];
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int ch = 0; ch < c; ++ch)
                for (int yy = 0; yy < h; ++yy)
                    for (int i = 0; i < r; ++i)
                        for (int xx = 0; xx < w; ++xx)
                            for (int j = 0; j < r; ++j)
                                (*g)[index_in(ch, i, j, yy, xx)] +=
                                    n.grad[(static_cast<std::int64_t>(ch) * ho + yy * r + i) * wo + xx * r + j];
    });
}

Var pixel_unshuffle(const Var& x, int r)
{
    require_rank(x, 3, "pixel_unshuffle");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % r || w % r) throw ShapeError("pixel_unshuffle: spatial dims not divisible by r");
    const int ho = h / r, wo = w / r;
    Tensor y(Shape{c * r * r, ho, wo});
    auto index_out = [=](int ch, int i, int j, int yy, int xx) {
        return ((static_cast<std::int64_t>(ch) * r * r + i * r + j) * ho + yy) * wo + xx;
    };
    for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < ho; ++yy)
            for (int i = 0; i < r; ++i)
                for (int xx = 0; xx < wo; ++xx)
                    for (int j = 0; j < r; ++j)
                        y[index_out(ch, i, j, yy, xx)] =
                            x.value()[(static_cast<std::int64_t>(ch) * h + yy * r + i) * w + xx * r + j];
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int ch = 0; ch < c; ++ch)
                for (int yy = 0; yy < ho; ++yy)
                    for (int i = 0; i < r; ++i)
                        for (int xx = 0; xx < wo; ++xx)
                            for (int j = 0; j < r; ++j)
                                (*g)[(static_cast<std::int64_t>(ch) * h + yy * r + i) * w + xx * r + j] +=
                                    n.grad[index_out(ch, i, j, yy, xx)];
    });
}

Var crop(const Var& x, int height, int width)
{
    require_rank(x, 3, "crop");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (height > h || width > w || height < 0 || width < 0) throw ShapeError("crop: window larger than input");
    Tensor y(Shape{c, height, width});
    for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < height; ++yy)
            for (int xx = 0; xx < width; ++xx) y.at(ch, yy, xx) = x.value().at(ch, yy, xx);
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int ch = 0; ch < c; ++ch)
                for (int yy = 0; yy < height; ++yy)
                    for (int xx = 0; xx < width; ++xx) g->at(ch, yy, xx) += n.grad.at(ch, yy, xx);
    });
}

Var avg_pool(const Var& x, int k)
{
    require_rank(x, 3, "avg_pool");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % k || w % k) throw ShapeError("avg_pool: spatial dims not divisible by k");
    const int ho = h / k, wo = w / k;
    const double inv = 1.0 / (k * k);
    Tensor y(Shape{c, ho, wo});
    for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) y.at(ch, yy / k, xx / k) += inv * x.value().at(ch, yy, xx);
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int ch = 0; ch < c; ++ch)
                for (int yy = 0; yy < h; ++yy)
                    for (int xx = 0; xx < w; ++xx) g->at(ch, yy, xx) += inv * n.grad.at(ch, yy / k, xx / k);
    });
}

Var upsample_nearest(const Var& x, int r)
{
    require_rank(x, 3, "upsample_nearest");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor y(Shape{c, h * r, w * r});
    for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < h * r; ++yy)
            for (int xx = 0; xx < w * r; ++xx) y.at(ch, yy, xx) = x.value().at(ch, yy / r, xx / r);
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int ch = 0; ch < c; ++ch)
                for (int yy = 0; yy < h * r; ++yy)
                    for (int xx = 0; xx < w * r; ++xx) g->at(ch, yy / r, xx / r) += n.grad.at(ch, yy, xx);
    });
}

Var transpose2d(const Var& x)
{
    require_rank(x, 2, "transpose2d");
    const int r = x.dim(0), c = x.dim(1);
    Tensor y(Shape{c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) y.at(j, i) = x.value().at(i, j);
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) g->at(i, j) += n.grad.at(j, i);
    });
}

Var matmul(const Var& a, const Var& b)
{
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw ShapeError("matmul: inner dimension mismatch");
    // a (m x k) * b (k x n) == linear(a, b^T) without bias.
    Tensor bt(Shape{n, k});
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) bt.at(j, i) = b.value().at(i, j);
    Tensor y(Shape{m, n});
    const kernels::LinearGeometry geo{m, k, n};
    kp::linear_forward(geo, a.value().span(), bt.span(), {}, y.span());
    return make_result(std::move(y), {a, b}, [geo, bt = std::move(bt)](Node& node) {
        Tensor* ga = grad_of(node, 0);
        Tensor* gb = grad_of(node, 1);
        Tensor dbt;
        if (gb) dbt = Tensor(Shape{geo.out_features, geo.in_features});
        kp::linear_backward(geo, value_of(node, 0).span(), bt.span(), node.grad.span(), span_or_empty(ga),
                            gb ? dbt.span() : std::span<double>(), {});
        if (gb)
            for (int i = 0; i < geo.in_features; ++i)
                for (int j = 0; j < geo.out_features; ++j) gb->at(i, j) += dbt.at(j, i);
    });
}

Var softmax_rows(const Var& x)
{
    require_rank(x, 2, "softmax_rows");
    const int r = x.dim(0), c = x.dim(1);
    Tensor y(Shape{r, c});
    for (int i = 0; i < r; ++i) {
        double mx = -INFINITY;
        for (int j = 0; j < c; ++j) mx = std::max(mx, x.value().at(i, j));
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += (y.at(i, j) = std::exp(x.value().at(i, j) - mx));
        for (int j = 0; j < c; ++j) y.at(i, j) /= s;
    }
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int i = 0; i < r; ++i) {
                double dot = 0.0;
                for (int j = 0; j < c; ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
                for (int j = 0; j < c; ++j) g->at(i, j) += n.value.at(i, j) * (n.grad.at(i, j) - dot);
            }
    });
}

Var global_avg_pool(const Var& x)
{
    require_rank(x, 3, "global_avg_pool");
    const int c = x.dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
    Tensor y(Shape{c});
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::int64_t p = 0; p < plane; ++p) s += x.value()[ch * plane + p];
        y[ch] = s / static_cast<double>(plane);
    }
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int ch = 0; ch < c; ++ch)
                for (std::int64_t p = 0; p < plane; ++p) (*g)[ch * plane + p] += n.grad[ch] / static_cast<double>(plane);
    });
}

Var global_max_pool(const Var& x)
{
    require_rank(x, 3, "global_max_pool");
    const int c = x.dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
    Tensor y(Shape{c});
    std::vector<std::int64_t> arg(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        std::int64_t best = 0;
        for (std::int64_t p = 1; p < plane; ++p)
            if (x.value()[ch * plane + p] > x.value()[ch * plane + best]) best = p;
        arg[ch] = best;
        y[ch] = x.value()[ch * plane + best];
    }
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int ch = 0; ch < c; ++ch) (*g)[ch * plane + arg[ch]] += n.grad[ch];
    });
}

Var channel_mean(const Var& x)
{
    require_rank(x, 3, "channel_mean");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor y(Shape{1, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (std::int64_t p = 0; p < plane; ++p) y[p] += x.value()[ch * plane + p] / c;
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (int ch = 0; ch < c; ++ch)
                for (std::int64_t p = 0; p < plane; ++p) (*g)[ch * plane + p] += n.grad[p] / c;
    });
}

Var channel_max(const Var& x)
{
    require_rank(x, 3, "channel_max");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor y(Shape{1, h, w});
    std::vector<int> arg(static_cast<std::size_t>(plane), 0);
    for (std::int64_t p = 0; p < plane; ++p) {
        int best = 0;
        for (int ch = 1; ch < c; ++ch)
            if (x.value()[ch * plane + p] > x.value()[best * plane + p]) best = ch;
        arg[p] = best;
        y[p] = x.value()[best * plane + p];
    }
    return make_result(std::move(y), {x}, [=](Node& n) {
        if (Tensor* g = grad_of(n, 0))
            for (std::int64_t p = 0; p < plane; ++p) (*g)[arg[p] * plane + p] += n.grad[p];
    });
}

Var mul_channels(const Var& x, const Var& s)
{
    require_rank(x, 3, "mul_channels");
    const int c = x.dim(0);
    if (s.numel() != c) throw ShapeError("mul_channels: scale length mismatch");
    const std::int64_t plane = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
    Tensor y = x.value();
    for (int ch = 0; ch < c; ++ch)
        for (std::int64_t p = 0; p < plane; ++p) y[ch * plane + p] *= s.value()[ch];
    return make_result(std::move(y), {x, s}, [=](Node& n) {
        const Tensor& xv = value_of(n, 0);
        const Tensor& sv = value_of(n, 1);
        Tensor* gx = grad_of(n, 0);
        Tensor* gs = grad_of(n, 1);
        for (int ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < plane; ++p) {
                const double d = n.grad[ch * plane + p];
                if (gx) (*gx)[ch * plane + p] += d * sv[ch];
                acc += d * xv[ch * plane + p];
            }
            if (gs) (*gs)[ch] += acc;
        }
    });
}

Var mul_spatial(const Var& x, const Var& s)
{
    require_rank(x, 3, "mul_spatial");
    const int c = x.dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
    if (s.numel() != plane) throw ShapeError("mul_spatial: map size mismatch");
    Tensor y = x.value();
    for (int ch = 0; ch < c; ++ch)
        for (std::int64_t p = 0; p < plane; ++p) y[ch * plane + p] *= s.value()[p];
    return make_result(std::move(y), {x, s}, [=](Node& n) {
        const Tensor& xv = value_of(n, 0);
        const Tensor& sv = value_of(n, 1);
        Tensor* gx = grad_of(n, 0);
        Tensor* gs = grad_of(n, 1);
        for (int ch = 0; ch < c; ++ch)
            for (std::int64_t p = 0; p < plane; ++p) {
                const double d = n.grad[ch * plane + p];
                if (gx) (*gx)[ch * plane + p] += d * sv[p];
                if (gs) (*gs)[p] += d * xv[ch * plane + p];
            }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int groups)
{
    require_rank(x, 3, "conv2d");
    if (w.value().rank() != 4) throw ShapeError("conv2d: weight must be rank 4");
    kernels::ConvGeometry g;
    g.in_channels = x.dim(0);
    g.height = x.dim(1);
    g.width = x.dim(2);
    g.out_channels = w.dim(0);
    g.kernel = w.dim(2);
    g.stride = stride;
    g.pad = pad;
    g.groups = groups;
    if (g.in_channels % groups || g.out_channels % groups || w.dim(1) != g.in_channels / groups || w.dim(3) != g.kernel)
        throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
    if (b.defined() && b.numel() != g.out_channels) throw ShapeError("conv2d: bias length mismatch");
    if (g.out_height() <= 0 || g.out_width() <= 0) throw ShapeError("conv2d: input smaller than kernel");
    Tensor y(Shape{g.out_channels, g.out_height(), g.out_width()});
    kp::conv2d_forward(g, x.value().span(), w.value().span(), b.defined() ? b.value().span() : std::span<const double>(),
                       y.span());
    std::vector<Var> inputs{x, w};
    if (b.defined()) inputs.push_back(b);
    return make_result(std::move(y), inputs, [g](Node& n) {
        Tensor* gx = grad_of(n, 0);
        Tensor* gw = grad_of(n, 1);
        Tensor* gb = grad_of(n, 2);
        kp::conv2d_backward(g, value_of(n, 0).span(), value_of(n, 1).span(), n.grad.span(), span_or_empty(gx),
                            span_or_empty(gw), span_or_empty(gb));
    });
}

Var linear(const Var& x, const Var& w, const Var& b)
{
    require_rank(x, 2, "linear");
    require_rank(w, 2, "linear weight");
    const kernels::LinearGeometry g{x.dim(0), x.dim(1), w.dim(0)};
    if (w.dim(1) != g.in_features)
        throw ShapeError("linear: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
    if (b.defined() && b.numel() != g.out_features) throw ShapeError("linear: bias length mismatch");
    Tensor y(Shape{g.tokens, g.out_features});
    kp::linear_forward(g, x.value().span(), w.value().span(), b.defined() ? b.value().span() : std::span<const double>(),
                       y.span());
    std::vector<Var> inputs{x, w};
    if (b.defined()) inputs.push_back(b);
    return make_result(std::move(y), inputs, [g](Node& n) {
        kp::linear_backward(g, value_of(n, 0).span(), value_of(n, 1).span(), n.grad.span(), span_or_empty(grad_of(n, 0)),
                            span_or_empty(grad_of(n, 1)), span_or_empty(grad_of(n, 2)));
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps)
{
    require_rank(x, 2, "layer_norm");
    const int n = x.dim(0), c = x.dim(1);
    if (gamma.numel() != c || beta.numel() != c) throw ShapeError("layer_norm: affine size mismatch");
    Tensor y(Shape{n, c});
    Tensor xhat(Shape{n, c});
    std::vector<double> inv_std(static_cast<std::size_t>(n));
    const double* xv = x.value().data();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double* row = xv + static_cast<std::int64_t>(i) * c;
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += row[j];
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < c; ++j) {
            const double h = (row[j] - mu) * is;
            xhat.at(i, j) = h;
            y.at(i, j) = h * gamma.value()[j] + beta.value()[j];
        }
    }
    return make_result(std::move(y), {x, gamma, beta},
                       [n, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& node) {
                           const Tensor& gv = value_of(node, 1);
                           Tensor* gx = grad_of(node, 0);
                           Tensor* gg = grad_of(node, 1);
                           Tensor* gb = grad_of(node, 2);
                           for (int i = 0; i < n; ++i) {
                               double sum_d = 0.0, sum_dx = 0.0;
                               for (int j = 0; j < c; ++j) {
                                   const double d = node.grad.at(i, j);
                                   if (gg) (*gg)[j] += d * xhat.at(i, j);
                                   if (gb) (*gb)[j] += d;
                                   const double dh = d * gv[j];
                                   sum_d += dh;
                                   sum_dx += dh * xhat.at(i, j);
                               }
                               if (!gx) continue;
                               for (int j = 0; j < c; ++j) {
                                   const double dh = node.grad.at(i, j) * gv[j];
                                   gx->at(i, j) += inv_std[i] * (dh - sum_d / c - xhat.at(i, j) * sum_dx / c);
                               }
                           }
                       });
}

Var window_attention(const Var& q, const Var& k, const Var& v, const Var& bias_table, const Var& q_prior,
                     const Var& k_prior, const Var& mod, const AttentionOptions& opt)
{
    require_rank(q, 2, "window_attention");
    require_same_shape(q.value(), k.value(), "window_attention q/k");
    require_same_shape(q.value(), v.value(), "window_attention q/v");
    kernels::AttentionGeometry g;
    g.height = opt.height;
    g.width = opt.width;
    g.window = opt.window;
    g.heads = opt.heads;
    g.channels = q.dim(1);
    g.scale = opt.scale;
    g.has_bias = bias_table.defined();
    g.has_prior = q_prior.defined();
    g.has_mod = mod.defined();
    if (g.window <= 0 || g.height % g.window || g.width % g.window)
        throw ShapeError("window_attention: grid " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                         " not divisible by window " + std::to_string(g.window));
    if (q.dim(0) != g.height * g.width) throw ShapeError("window_attention: token count does not match grid");
    if (g.channels % g.heads) throw ShapeError("window_attention: channels not divisible by heads");
    if (g.has_prior != k_prior.defined()) throw ShapeError("window_attention: prior needs both q and k terms");
    if (g.has_prior) {
        require_same_shape(q.value(), q_prior.value(), "window_attention prior q");
        require_same_shape(q.value(), k_prior.value(), "window_attention prior k");
    }
    if (g.has_bias && bias_table.numel() != static_cast<std::int64_t>(g.heads) * g.bias_table_size())
        throw ShapeError("window_attention: bias table size mismatch");
    if (g.has_mod && mod.numel() != g.heads) throw ShapeError("window_attention: mod size mismatch");

    // Input order: q k v [bias] [qp kp] [mod]; slots record positions.
    std::vector<Var> inputs{q, k, v};
    int bias_slot = -1, qp_slot = -1, kp_slot = -1, mod_slot = -1;
    if (g.has_bias) {
        bias_slot = static_cast<int>(inputs.size());
        inputs.push_back(bias_table);
    }
    if (g.has_prior) {
        qp_slot = static_cast<int>(inputs.size());
        inputs.push_back(q_prior);
        kp_slot = static_cast<int>(inputs.size());
        inputs.push_back(k_prior);
    }
    if (g.has_mod) {
        mod_slot = static_cast<int>(inputs.size());
        inputs.push_back(mod);
    }
    auto span_at = [](const std::vector<Var>& in, int slot) {
        return slot < 0 ? std::span<const double>() : in[slot].value().span();
    };
    kernels::AttentionInputs ain{q.value().span(), k.value().span(), v.value().span(), span_at(inputs, qp_slot),
                                 span_at(inputs, kp_slot), span_at(inputs, bias_slot), span_at(inputs, mod_slot)};
    Tensor out(q.shape());
    std::vector<double> probs(static_cast<std::size_t>(g.probs_size()));
    kp::attention_forward(g, ain, out.span(), probs);
    return make_result(std::move(out), inputs, [g, probs = std::move(probs), bias_slot, qp_slot, kp_slot, mod_slot](Node& n) {
        auto val = [&n](int slot) {
            return slot < 0 ? std::span<const double>() : n.inputs[slot]->value.span();
        };
        auto grd = [&n](int slot) { return slot < 0 ? std::span<double>() : span_or_empty(grad_of(n, slot)); };
        kernels::AttentionInputs in{val(0), val(1), val(2), val(qp_slot), val(kp_slot), val(bias_slot), val(mod_slot)};
        kernels::AttentionGrads gr{grd(0), grd(1), grd(2), grd(qp_slot), grd(kp_slot), grd(bias_slot), grd(mod_slot)};
        kp::attention_backward(g, in, probs, n.grad.span(), gr);
    });
}

Var deform_conv(const Var& x, const Var& offset, const Var& mask, const Var& weight, const Var& bias, int groups)
{
    require_rank(x, 3, "deform_conv");
    kernels::DeformGeometry g;
    g.in_channels = x.dim(0);
    g.height = x.dim(1);
    g.width = x.dim(2);
    g.out_channels = weight.dim(0);
    g.groups = groups;
    constexpr int taps = kernels::DeformGeometry::taps;
    if (g.in_channels % groups) throw ShapeError("deform_conv: channels not divisible by groups");
    require_shape(offset.value(), Shape{groups * taps * 2, g.height, g.width}, "deform_conv offset");
    require_shape(mask.value(), Shape{groups * taps, g.height, g.width}, "deform_conv mask");
    require_shape(weight.value(), Shape{g.out_channels, g.in_channels, taps}, "deform_conv weight");
    if (bias.defined() && bias.numel() != g.out_channels) throw ShapeError("deform_conv: bias length mismatch");
    if (!offset.value().all_finite()) throw std::invalid_argument("deform_conv: non-finite offsets");
    Tensor y(Shape{g.out_channels, g.height, g.width});
    kernels::DeformInputs in{x.value().span(), offset.value().span(), mask.value().span(), weight.value().span(),
                             bias.defined() ? bias.value().span() : std::span<const double>()};
    kp::deform_forward(g, in, y.span());
    std::vector<Var> inputs{x, offset, mask, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_result(std::move(y), inputs, [g](Node& n) {
        kernels::DeformInputs din{value_of(n, 0).span(), value_of(n, 1).span(), value_of(n, 2).span(),
                                  value_of(n, 3).span(),
                                  n.inputs.size() > 4 ? value_of(n, 4).span() : std::span<const double>()};
        kernels::DeformGrads dg{span_or_empty(grad_of(n, 0)), span_or_empty(grad_of(n, 1)),
                                span_or_empty(grad_of(n, 2)), span_or_empty(grad_of(n, 3)),
                                span_or_empty(grad_of(n, 4))};
        kp::deform_backward(g, din, n.grad.span(), dg);
    });
}

Var group_softmax(const Var& logits, int groups, int taps)
{
    require_rank(logits, 3, "group_softmax");
    if (logits.dim(0) != groups * taps) throw ShapeError("group_softmax: channel count mismatch");
    const std::int64_t plane = static_cast<std::int64_t>(logits.dim(1)) * logits.dim(2);
    Tensor y(logits.shape());
    const Tensor& lv = logits.value();
    for (int gi = 0; gi < groups; ++gi)
        for (std::int64_t p = 0; p < plane; ++p) {
            double mx = -INFINITY;
            for (int k = 0; k < taps; ++k) mx = std::max(mx, lv[(gi * taps + k) * plane + p]);
            double s = 0.0;
            for (int k = 0; k < taps; ++k) s += (y[(gi * taps + k) * plane + p] = std::exp(lv[(gi * taps + k) * plane + p] - mx));
            for (int k = 0; k < taps; ++k) y[(gi * taps + k) * plane + p] /= s;
        }
    return make_result(std::move(y), {logits}, [=](Node& n) {
        Tensor* g = grad_of(n, 0);
        if (!g) return;
        for (int gi = 0; gi < groups; ++gi)
            for (std::int64_t p = 0; p < plane; ++p) {
                double dot = 0.0;
                for (int k = 0; k < taps; ++k) {
                    const std::int64_t i = (gi * taps + k) * plane + p;
                    dot += n.grad[i] * n.value[i];
                }
                for (int k = 0; k < taps; ++k) {
                    const std::int64_t i = (gi * taps + k) * plane + p;
                    (*g)[i] += n.value[i] * (n.grad[i] - dot);
                }
            }
    });
}

Var add_uniform_noise(const Var& x, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    Tensor noise(x.shape());
    for (double& v : noise.storage()) v = u(rng);
    return add(x, Var(std::move(noise)));
}

Var div(const Var& a, const Var& b)
{
    require_same_shape(a.value(), b.value(), "div");
    Tensor y = a.value();
    const std::int64_t n = y.numel();
    for (std::int64_t i = 0; i < n; ++i) y[i] /= b.value()[i];
    return make_result(std::move(y), {a, b}, [](Node& n) {
        const Tensor& bv = value_of(n, 1);
        if (Tensor* g = grad_of(n, 0))
            for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += n.grad[i] / bv[i];
        if (Tensor* g = grad_of(n, 1))
            for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] -= n.grad[i] * n.value[i] / bv[i];
    });
}

Var pow_scalar(const Var& x, double p)
{
    return unary(
        x, [p](double v) { return v > 0.0 ? std::pow(v, p) : 0.0; },
        [p](double v, double) { return v > 0.0 ? p * std::pow(v, p - 1.0) : 0.0; });
}

Var avg_pool2_padded(const Var& x)
{
    require_rank(x, 3, "avg_pool2_padded");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int py = h % 2, px = w % 2;
    const int ho = (h + 2 * py - 2) / 2 + 1, wo = (w + 2 * px - 2) / 2 + 1;
    Tensor y({c, ho, wo});
    const Tensor& xv = x.value();
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = 0.0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int iy = 2 * oy - py + dy, ix = 2 * ox - px + dx;
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w) acc += xv.at(ch, iy, ix);
                    }
                y.at(ch, oy, ox) = 0.25 * acc;
            }
    return make_result(std::move(y), {x}, [py, px](Node& n) {
        Tensor* g = grad_of(n, 0);
        if (!g) return;
        const int c = g->dim(0), h = g->dim(1), w = g->dim(2);
        const int ho = n.grad.dim(1), wo = n.grad.dim(2);
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const int iy = 2 * oy - py + dy, ix = 2 * ox - px + dx;
                            if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                g->at(ch, iy, ix) += 0.25 * n.grad.at(ch, oy, ox);
                        }
    });
}

Var filter_valid(const Var& x, const std::vector<double>& taps, int axis)
{
    require_rank(x, 3, "filter_valid");
    if (axis != 1 && axis != 2) throw std::invalid_argument("filter_valid: axis must be 1 or 2");
    const int k = static_cast<int>(taps.size());
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int ho = axis == 1 ? h - k + 1 : h, wo = axis == 2 ? w - k + 1 : w;
    if (k < 1 || ho < 1 || wo < 1) throw ShapeError("filter_valid: filter longer than the input");
    const int sy = axis == 1 ? 1 : 0, sx = axis == 2 ? 1 : 0;
    Tensor y({c, ho, wo});
    const Tensor& xv = x.value();
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = 0.0;
                for (int t = 0; t < k; ++t) acc += taps[t] * xv.at(ch, oy + sy * t, ox + sx * t);
                y.at(ch, oy, ox) = acc;
            }
    return make_result(std::move(y), {x}, [taps, sy, sx](Node& n) {
        Tensor* g = grad_of(n, 0);
        if (!g) return;
        const int k = static_cast<int>(taps.size());
        const int c = n.grad.dim(0), ho = n.grad.dim(1), wo = n.grad.dim(2);
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const double d = n.grad.at(ch, oy, ox);
                    for (int t = 0; t < k; ++t) g->at(ch, oy + sy * t, ox + sx * t) += taps[t] * d;
                }
    });
}

}  // namespace sttvc::ops
