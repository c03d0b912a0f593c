#include "sttvc/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "sttvc/ops.hpp"

namespace sttvc::metrics {

double mse(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "mse");
    if (a.numel() == 0) throw std::invalid_argument("mse: empty frames");
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.numel());
}

double psnr_from_mse(double m)
{
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double psnr(const Tensor& a, const Tensor& b) { return psnr_from_mse(mse(a, b)); }

namespace {

constexpr double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_taps()
{
    static const std::vector<double> taps = [] {
        std::vector<double> g(11);
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double c = i - 5;
            g[i] = std::exp(-(c * c) / (2.0 * 1.5 * 1.5));
            sum += g[i];
        }
        for (auto& v : g) v /= sum;
        return g;
    }();
    return taps;
}

Var blur(const Var& x)
{
    Var y = x;
    for (int axis = 1; axis <= 2; ++axis)
        if (y.dim(axis) >= 11) y = ops::filter_valid(y, gaussian_taps(), axis);
    return y;
}

struct SsimTerms {
    Var ssim, cs;  // per-channel means, shape [C]
};

SsimTerms ssim_terms(const Var& x, const Var& y)
{
    const Var mu1 = blur(x), mu2 = blur(y);
    const Var mu1_sq = ops::mul(mu1, mu1), mu2_sq = ops::mul(mu2, mu2), mu12 = ops::mul(mu1, mu2);
    const Var s1 = ops::sub(blur(ops::mul(x, x)), mu1_sq);
    const Var s2 = ops::sub(blur(ops::mul(y, y)), mu2_sq);
    const Var s12 = ops::sub(blur(ops::mul(x, y)), mu12);
    const Var cs_map = ops::div(ops::add_scalar(ops::scale(s12, 2.0), kC2), ops::add_scalar(ops::add(s1, s2), kC2));
    const Var lum = ops::div(ops::add_scalar(ops::scale(mu12, 2.0), kC1), ops::add_scalar(ops::add(mu1_sq, mu2_sq), kC1));
    return {ops::global_avg_pool(ops::mul(lum, cs_map)), ops::global_avg_pool(cs_map)};
}

void check_pair(const Var& a, const Var& b)
{
    require_same_shape(a.value(), b.value(), "ms_ssim");
    if (a.value().rank() != 3) throw ShapeError("ms_ssim: expected C x H x W frames");
}

}  // namespace

Var ms_ssim(const Var& a, const Var& b)
{
    check_pair(a, b);
    Var x = a, y = b;
    Var prod;
    for (int level = 0; level < 5; ++level) {
        const SsimTerms t = ssim_terms(x, y);
        const Var term = ops::pow_scalar(ops::relu(level < 4 ? t.cs : t.ssim), kWeights[level]);
        prod = prod.defined() ? ops::mul(prod, term) : term;
        if (level < 4) {
            x = ops::avg_pool2_padded(x);
            y = ops::avg_pool2_padded(y);
        }
    }
    return ops::mean(prod);
}

double ms_ssim(const Tensor& a, const Tensor& b)
{
    NoGradGuard g;
    return ms_ssim(Var(a), Var(b)).value()[0];
}

double ssim(const Tensor& a, const Tensor& b)
{
    NoGradGuard g;
    const Var x(a), y(b);
    check_pair(x, y);
    return ops::mean(ssim_terms(x, y).ssim).value()[0];
}

}  // namespace sttvc::metrics
