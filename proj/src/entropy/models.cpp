#include <algorithm>
#include <cmath>

#include "sttvc/entropy.hpp"

namespace sttvc::entropy {

namespace {

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double sigmoid(double x)
{
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// sigmoid(b) - sigmoid(a) for a <= b, evaluated on the side where the
// difference does not cancel.
double sigmoid_interval(double a, double b)
{
    if (a + b > 0) return sigmoid(-a) - sigmoid(-b);
    return sigmoid(b) - sigmoid(a);
}

double normal_interval(double a, double b)
{
    if (a + b > 0) return normal_cdf(-a) - normal_cdf(-b);
    return normal_cdf(b) - normal_cdf(a);
}

struct Mixture {
    std::vector<double> weight, mean, scale;  // C x K
    int components = 0;
};

Mixture mixture_of(const Tensor& logits, const Tensor& means, const Tensor& log_scales)
{
    const int c = logits.dim(0), k = logits.dim(1);
    Mixture m;
    m.components = k;
    m.weight.resize(static_cast<std::size_t>(c) * k);
    m.mean.assign(means.data(), means.data() + means.numel());
    m.scale.resize(m.weight.size());
    for (int ch = 0; ch < c; ++ch) {
        double mx = -INFINITY;
        for (int j = 0; j < k; ++j) mx = std::max(mx, logits.at(ch, j));
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += (m.weight[ch * k + j] = std::exp(logits.at(ch, j) - mx));
        for (int j = 0; j < k; ++j) {
            m.weight[ch * k + j] /= s;
            m.scale[ch * k + j] = std::exp(log_scales.at(ch, j));
        }
    }
    return m;
}

}  // namespace

double round_half_away(double x) { return std::round(x); }

Tensor quantize_eval(const Tensor& x)
{
    Tensor q(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i)
        q[i] = std::clamp(round_half_away(x[i]), static_cast<double>(-kSymbolMax), static_cast<double>(kSymbolMax));
    return q;
}

Var quantize(const Var& x, Mode mode, std::mt19937_64& rng)
{
    if (mode == Mode::train) return ops::add_uniform_noise(x, rng);
    return Var(quantize_eval(x.value()));
}

Var logistic_mixture_likelihood(const Var& y, const Var& logits, const Var& means, const Var& log_scales)
{
    const int c = y.dim(0);
    require_same_shape(logits.value(), means.value(), "mixture means");
    require_same_shape(logits.value(), log_scales.value(), "mixture scales");
    if (logits.value().rank() != 2 || logits.dim(0) != c) throw ShapeError("mixture parameters must be C x K");
    const int k = logits.dim(1);
    const std::int64_t plane = y.numel() / c;
    const Mixture m = mixture_of(logits.value(), means.value(), log_scales.value());
    Tensor out(y.shape());
    const double* yv = y.value().data();
    for (int ch = 0; ch < c; ++ch)
        for (std::int64_t p = 0; p < plane; ++p) {
            const double v = yv[ch * plane + p];
            double l = 0.0;
            for (int j = 0; j < k; ++j) {
                const double mu = m.mean[ch * k + j], s = m.scale[ch * k + j];
                l += m.weight[ch * k + j] * sigmoid_interval((v - 0.5 - mu) / s, (v + 0.5 - mu) / s);
            }
            out[ch * plane + p] = l;
        }
    return make_result(std::move(out), {y, logits, means, log_scales}, [c, k, plane, m](Node& n) {
        Tensor* gy = n.inputs[0]->requires_grad ? &n.inputs[0]->grad_buffer() : nullptr;
        Tensor* gl = n.inputs[1]->requires_grad ? &n.inputs[1]->grad_buffer() : nullptr;
        Tensor* gm = n.inputs[2]->requires_grad ? &n.inputs[2]->grad_buffer() : nullptr;
        Tensor* gs = n.inputs[3]->requires_grad ? &n.inputs[3]->grad_buffer() : nullptr;
        const Tensor& yv = n.inputs[0]->value;
        for (int ch = 0; ch < c; ++ch)
            for (std::int64_t p = 0; p < plane; ++p) {
                const double g = n.grad[ch * plane + p];
                if (g == 0.0) continue;
                const double v = yv[ch * plane + p];
                const double l = n.value[ch * plane + p];
                double dy = 0.0;
                for (int j = 0; j < k; ++j) {
                    const int idx = ch * k + j;
                    const double w = m.weight[idx], mu = m.mean[idx], s = m.scale[idx];
                    const double up = (v + 0.5 - mu) / s, um = (v - 0.5 - mu) / s;
                    const double sp = sigmoid(up), sm = sigmoid(um);
                    const double dp = sp * (1.0 - sp), dm = sm * (1.0 - sm);
                    const double d = sigmoid_interval(um, up);
                    const double dl_du = w * (dp - dm) / s;
                    dy += dl_du;
                    if (gm) gm->at(ch, j) -= g * dl_du;
                    if (gs) gs->at(ch, j) -= g * w * (dp * up - dm * um);
                    if (gl) gl->at(ch, j) += g * w * (d - l);
                }
                if (gy) (*gy)[ch * plane + p] += g * dy;
            }
    });
}

Var gaussian_likelihood(const Var& y, const Var& mu, const Var& sigma)
{
    require_same_shape(y.value(), mu.value(), "gaussian mean");
    require_same_shape(y.value(), sigma.value(), "gaussian scale");
    const std::int64_t n = y.numel();
    Tensor out(y.shape());
    for (std::int64_t i = 0; i < n; ++i) {
        const double s = sigma.value()[i];
        const double v = y.value()[i] - mu.value()[i];
        out[i] = normal_interval((v - 0.5) / s, (v + 0.5) / s);
    }
    return make_result(std::move(out), {y, mu, sigma}, [n](Node& node) {
        Tensor* gy = node.inputs[0]->requires_grad ? &node.inputs[0]->grad_buffer() : nullptr;
        Tensor* gm = node.inputs[1]->requires_grad ? &node.inputs[1]->grad_buffer() : nullptr;
        Tensor* gs = node.inputs[2]->requires_grad ? &node.inputs[2]->grad_buffer() : nullptr;
        for (std::int64_t i = 0; i < n; ++i) {
            const double g = node.grad[i];
            const double s = node.inputs[2]->value[i];
            const double v = node.inputs[0]->value[i] - node.inputs[1]->value[i];
            const double ap = (v + 0.5) / s, am = (v - 0.5) / s;
            const double pp = normal_pdf(ap), pm = normal_pdf(am);
            const double dv = (pp - pm) / s;
            if (gy) (*gy)[i] += g * dv;
            if (gm) (*gm)[i] -= g * dv;
            if (gs) (*gs)[i] -= g * (pp * ap - pm * am) / s;
        }
    });
}

Var likelihood_bits(const Var& likelihood)
{
    double bits = 0.0;
    for (double l : likelihood.value().storage()) bits -= std::log2(std::max(l, kProbFloor));
    return make_result(Tensor::scalar(bits), {likelihood}, [](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        const Tensor& l = n.inputs[0]->value;
        const double seed = n.grad[0];
        for (std::int64_t i = 0; i < l.numel(); ++i) g[i] -= seed / (std::max(l[i], kProbFloor) * kLn2);
    });
}

FactorizedModel::FactorizedModel(nn::ParamStore& ps, const std::string& name, int channels, int components)
    : channels_(channels), components_(components)
{
    logits = ps.add(name + ".logits", {channels, components}, nn::init::zeros());
    means = ps.add(name + ".means", {channels, components}, [components](Tensor& t, std::mt19937_64&) {
        for (int c = 0; c < t.dim(0); ++c)
            for (int k = 0; k < components; ++k) t.at(c, k) = 2.0 * (k - 0.5 * (components - 1));
    });
    log_scales = ps.add(name + ".log_scales", {channels, components}, nn::init::constant(std::log(2.0)));
}

Var FactorizedModel::likelihood(const Var& y) const
{
    if (y.dim(0) != channels_) throw ShapeError("factorized model: channel count mismatch");
    return logistic_mixture_likelihood(y, logits, means, log_scales);
}

std::vector<double> FactorizedModel::channel_pmf(int c) const
{
    const Mixture m = mixture_of(logits.value(), means.value(), log_scales.value());
    const int k = components_;
    std::vector<double> pmf(2 * kSymbolMax + 1);
    for (int s = -kSymbolMax; s <= kSymbolMax; ++s) {
        double p = 0.0;
        for (int j = 0; j < k; ++j) {
            const double mu = m.mean[c * k + j], sc = m.scale[c * k + j];
            const double lo = s == -kSymbolMax ? -INFINITY : (s - 0.5 - mu) / sc;
            const double hi = s == kSymbolMax ? INFINITY : (s + 0.5 - mu) / sc;
            p += m.weight[c * k + j] * sigmoid_interval(lo, hi);
        }
        pmf[s + kSymbolMax] = p;
    }
    return pmf;
}

void FactorizedModel::update_tables()
{
    std::vector<FrequencyTable> t;
    t.reserve(static_cast<std::size_t>(channels_));
    for (int c = 0; c < channels_; ++c) t.push_back(FrequencyTable::from_pmf(-kSymbolMax, channel_pmf(c)));
    tables_ = std::move(t);
}

void FactorizedModel::set_tables(std::vector<FrequencyTable> tables)
{
    if (static_cast<int>(tables.size()) != channels_) throw std::invalid_argument("factorized model: table count mismatch");
    tables_ = std::move(tables);
}

void FactorizedModel::require_tables() const
{
    if (tables_.empty()) throw std::logic_error("factorized model: tables not built");
}

double FactorizedModel::table_bits(const Tensor& q) const
{
    require_tables();
    const std::int64_t plane = q.numel() / channels_;
    double bits = 0.0;
    for (int c = 0; c < channels_; ++c)
        for (std::int64_t p = 0; p < plane; ++p) bits += tables_[c].bits(static_cast<int>(q[c * plane + p]));
    return bits;
}

void FactorizedModel::encode(RangeEncoder& enc, const Tensor& q) const
{
    require_tables();
    if (q.dim(0) != channels_) throw ShapeError("factorized model: channel count mismatch");
    const std::int64_t plane = q.numel() / channels_;
    for (int c = 0; c < channels_; ++c)
        for (std::int64_t p = 0; p < plane; ++p) tables_[c].encode(enc, static_cast<int>(q[c * plane + p]));
}

Tensor FactorizedModel::decode(RangeDecoder& dec, const Shape& shape) const
{
    require_tables();
    Tensor q(shape);
    if (q.dim(0) != channels_) throw ShapeError("factorized model: channel count mismatch");
    const std::int64_t plane = q.numel() / channels_;
    for (int c = 0; c < channels_; ++c)
        for (std::int64_t p = 0; p < plane; ++p) q[c * plane + p] = tables_[c].decode(dec);
    return q;
}

GaussianTables::GaussianTables()
{
    const double lo = std::log(kScaleMin), hi = std::log(kScaleMax);
    const int span = 2 * kSymbolMax;
    tables_.reserve(static_cast<std::size_t>(kScaleTables * kMeanOffsets));
    std::vector<double> pmf(2 * span + 1);
    for (int i = 0; i < kScaleTables; ++i) {
        const double s = std::exp(lo + (hi - lo) * i / (kScaleTables - 1));
        scales_.push_back(s);
        for (int j = 0; j < kMeanOffsets; ++j) {
            const double f = -0.5 + static_cast<double>(j) / (kMeanOffsets - 1);
            for (int d = -span; d <= span; ++d) {
                const double a = d == -span ? -INFINITY : (d - f - 0.5) / s;
                const double b = d == span ? INFINITY : (d - f + 0.5) / s;
                pmf[d + span] = normal_interval(a, b);
            }
            tables_.push_back(FrequencyTable::from_pmf(-span, pmf));
        }
    }
}

const GaussianTables& GaussianTables::instance()
{
    static const GaussianTables tables;
    return tables;
}

int GaussianTables::index_for(double sigma) const
{
    const double lo = std::log(kScaleMin), hi = std::log(kScaleMax);
    const double t = (std::log(std::clamp(sigma, kScaleMin, kScaleMax)) - lo) / (hi - lo) * (kScaleTables - 1);
    return std::clamp(static_cast<int>(std::lround(t)), 0, kScaleTables - 1);
}

int GaussianTables::offset_index_for(double offset) const
{
    const double t = (std::clamp(offset, -0.5, 0.5) + 0.5) * (kMeanOffsets - 1);
    return std::clamp(static_cast<int>(std::lround(t)), 0, kMeanOffsets - 1);
}

namespace {
double center_of(double mu)
{
    return std::clamp(round_half_away(mu), static_cast<double>(-kSymbolMax), static_cast<double>(kSymbolMax));
}
}  // namespace

const FrequencyTable& GaussianTables::table_for(double mu, double sigma) const
{
    return table(index_for(sigma), offset_index_for(mu - center_of(mu)));
}

double GaussianTables::bits(int q, double mu, double sigma) const
{
    return table_for(mu, sigma).bits(q - static_cast<int>(center_of(mu)));
}

void GaussianTables::encode(RangeEncoder& enc, int q, double mu, double sigma) const
{
    table_for(mu, sigma).encode(enc, q - static_cast<int>(center_of(mu)));
}

int GaussianTables::decode(RangeDecoder& dec, double mu, double sigma) const
{
    return table_for(mu, sigma).decode(dec) + static_cast<int>(center_of(mu));
}

double gaussian_table_bits(const Tensor& q, const Tensor& mu, const Tensor& sigma)
{
    const auto& t = GaussianTables::instance();
    double bits = 0.0;
    for (std::int64_t i = 0; i < q.numel(); ++i) bits += t.bits(static_cast<int>(q[i]), mu[i], sigma[i]);
    return bits;
}

void gaussian_encode(RangeEncoder& enc, const Tensor& q, const Tensor& mu, const Tensor& sigma)
{
    const auto& t = GaussianTables::instance();
    for (std::int64_t i = 0; i < q.numel(); ++i) t.encode(enc, static_cast<int>(q[i]), mu[i], sigma[i]);
}

Tensor gaussian_decode(RangeDecoder& dec, const Tensor& mu, const Tensor& sigma)
{
    const auto& t = GaussianTables::instance();
    Tensor q(mu.shape());
    for (std::int64_t i = 0; i < q.numel(); ++i) q[i] = t.decode(dec, mu[i], sigma[i]);
    return q;
}

}  // namespace sttvc::entropy
