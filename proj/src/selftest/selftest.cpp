#include "sttvc/selftest.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "sttvc/bitstream.hpp"
#include "sttvc/entropy.hpp"
#include "sttvc/eval.hpp"
#include "sttvc/kernels.hpp"
#include "sttvc/metrics.hpp"
#include "sttvc/ops.hpp"
#include "sttvc/synthetic.hpp"

namespace sttvc::selftest {

namespace {

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = u(rng);
    return t;
}

// Max abs difference scaled by the reference magnitude when that exceeds 1.
double rel_diff(std::span<const double> a, std::span<const double> b)
{
    double num = 0, den = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / den;
}

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

// Max relative error of analytic vs central-difference gradients.
double fd_error(const std::function<Var()>& f, std::vector<Var> params)
{
    for (Var& p : params) p.zero_grad();
    backward(f());
    double worst = 0;
    for (Var& p : params) {
        const Tensor g = p.has_grad() ? p.grad() : Tensor::zeros_like(p.value());
        const std::int64_t step = std::max<std::int64_t>(1, p.numel() / 25);
        for (std::int64_t i = 0; i < p.numel(); i += step) {
            double& v = p.mutable_value()[i];
            const double saved = v, eps = 1e-6;
            NoGradGuard ng;
            v = saved + eps;
            const double fp = f().value().item();
            v = saved - eps;
            const double fm = f().value().item();
            v = saved;
            const double num = (fp - fm) / (2 * eps);
            worst = std::max(worst, std::abs(num - g[i]) / std::max(1e-4, std::abs(num) + std::abs(g[i])));
        }
    }
    return worst;
}

Var weighted(const Var& y, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return ops::sum(ops::mul(y, Var(uniform(y.shape(), rng))));
}

CheckResult entropy_round_trips()
{
    std::mt19937_64 rng(1);
    int failures = 0;
    double worst_ratio = 0;
    bool within = true;
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> pmf(2 + rng() % 300);
        std::exponential_distribution<double> e(1.0);
        for (double& p : pmf) p = e(rng) * (rng() % 7 == 0 ? 1e-7 : 1.0);
        const auto t = entropy::FrequencyTable::from_pmf(-5, pmf);
        std::discrete_distribution<int> d(pmf.begin(), pmf.end());
        std::vector<int> syms(trial < 10 ? 10000 : rng() % 1500);
        for (int& s : syms) s = d(rng) + t.min_symbol();
        entropy::RangeEncoder enc;
        double est = 0;
        for (int s : syms) {
            t.encode(enc, s);
            est += t.bits(s);
        }
        const auto bytes = enc.finish();
        entropy::RangeDecoder dec(bytes);
        for (int s : syms)
            if (t.decode(dec) != s) {
                ++failures;
                break;
            }
        if (dec.position() != bytes.size()) ++failures;
        if (syms.size() >= 10000) {
            within = within && bytes.size() * 8.0 <= 1.02 * est + 512;
            worst_ratio = std::max(worst_ratio, bytes.size() * 8.0 / est);
        }
    }
    return {"entropy coder round trips", failures == 0 && within,
            std::to_string(failures) + " failures, worst coded/estimated size " + fmt(worst_ratio)};
}

CheckResult kernels_agree()
{
    std::mt19937_64 rng(2);
    double worst = 0;
    {
        kernels::ConvGeometry g{6, 11, 13, 8, 3, 2, 1, 2};
        const Tensor x = uniform({6, 11, 13}, rng), w = uniform({static_cast<int>(g.weight_size())}, rng), b = uniform({8}, rng);
        Tensor ys({8 * g.out_height() * g.out_width()}), yp = ys;
        kernels::serial::conv2d_forward(g, x.span(), w.span(), b.span(), ys.span());
        kernels::parallel::conv2d_forward(g, x.span(), w.span(), b.span(), yp.span());
        worst = std::max(worst, rel_diff(yp.span(), ys.span()));
        const Tensor dy = uniform(ys.shape(), rng);
        Tensor dxs(x.shape()), dxp(x.shape()), dws(w.shape()), dwp(w.shape()), dbs({8}), dbp({8});
        kernels::serial::conv2d_backward(g, x.span(), w.span(), dy.span(), dxs.span(), dws.span(), dbs.span());
        kernels::parallel::conv2d_backward(g, x.span(), w.span(), dy.span(), dxp.span(), dwp.span(), dbp.span());
        worst = std::max({worst, rel_diff(dxp.span(), dxs.span()), rel_diff(dwp.span(), dws.span()),
                          rel_diff(dbp.span(), dbs.span())});
    }
    {
        kernels::AttentionGeometry g;
        g.height = 8;
        g.width = 12;
        g.window = 4;
        g.heads = 2;
        g.channels = 8;
        g.scale = 0.5;
        g.has_bias = g.has_prior = g.has_mod = true;
        const Shape tok{96, 8};
        const Tensor q = uniform(tok, rng), k = uniform(tok, rng), v = uniform(tok, rng), qp = uniform(tok, rng),
                     kp = uniform(tok, rng), bias = uniform({2 * g.bias_table_size()}, rng), mod = uniform({2}, rng);
        kernels::AttentionInputs in{q.span(), k.span(), v.span(), qp.span(), kp.span(), bias.span(), mod.span()};
        Tensor os(tok), op(tok);
        std::vector<double> ps(static_cast<std::size_t>(g.probs_size())), pp(ps.size());
        kernels::serial::attention_forward(g, in, os.span(), ps);
        kernels::parallel::attention_forward(g, in, op.span(), pp);
        worst = std::max(worst, rel_diff(op.span(), os.span()));
        const Tensor dout = uniform(tok, rng);
        std::vector<Tensor> gs(7, Tensor(tok)), gp(7, Tensor(tok));
        gs[5] = gp[5] = Tensor(bias.shape());
        gs[6] = gp[6] = Tensor(mod.shape());
        auto grads = [](std::vector<Tensor>& t) {
            return kernels::AttentionGrads{t[0].span(), t[1].span(), t[2].span(), t[3].span(),
                                           t[4].span(), t[5].span(), t[6].span()};
        };
        kernels::serial::attention_backward(g, in, ps, dout.span(), grads(gs));
        kernels::parallel::attention_backward(g, in, pp, dout.span(), grads(gp));
        for (int i = 0; i < 7; ++i) worst = std::max(worst, rel_diff(gp[i].span(), gs[i].span()));
    }
    {
        kernels::DeformGeometry g{4, 7, 9, 5, 2};
        const int p = g.plane();
        const Tensor x = uniform({4 * p}, rng), off = uniform({2 * 9 * 2 * p}, rng, -2.5, 2.5),
                     m = uniform({2 * 9 * p}, rng, 0, 1), w = uniform({5 * 4 * 9}, rng), b = uniform({5}, rng);
        kernels::DeformInputs in{x.span(), off.span(), m.span(), w.span(), b.span()};
        Tensor ys({5 * p}), yp({5 * p});
        kernels::serial::deform_forward(g, in, ys.span());
        kernels::parallel::deform_forward(g, in, yp.span());
        worst = std::max(worst, rel_diff(yp.span(), ys.span()));
        const Tensor dy = uniform({5 * p}, rng);
        std::vector<Tensor> gs{Tensor(x.shape()), Tensor(off.shape()), Tensor(m.shape()), Tensor(w.shape()),
                               Tensor(b.shape())};
        std::vector<Tensor> gp = gs;
        auto grads = [](std::vector<Tensor>& t) {
            return kernels::DeformGrads{t[0].span(), t[1].span(), t[2].span(), t[3].span(), t[4].span()};
        };
        kernels::serial::deform_backward(g, in, dy.span(), grads(gs));
        kernels::parallel::deform_backward(g, in, dy.span(), grads(gp));
        for (int i = 0; i < 5; ++i) worst = std::max(worst, rel_diff(gp[i].span(), gs[i].span()));
    }
    return {"parallel kernels match serial reference", worst <= 1e-10, "max rel diff " + fmt(worst)};
}

CheckResult op_gradients()
{
    std::mt19937_64 rng(3);
    double worst = 0;
    {
        Var x(uniform({4, 6, 7}, rng), true), off(uniform({36, 6, 7}, rng, -1.3, 1.3), true),
            m(uniform({18, 6, 7}, rng, 0.1, 1), true), w(uniform({2, 4, 9}, rng), true);
        // Keep offsets away from integer sample positions where bilinear
        // interpolation has kinks.
        for (double& v : off.mutable_value().storage())
            if (std::abs(v - std::round(v)) < 0.05) v += 0.1;
        worst = std::max(worst, fd_error([&] { return weighted(ops::deform_conv(x, off, m, w, Var(), 2), 4); },
                                         {x, off, m, w}));
    }
    {
        const Shape tok{32, 4};
        Var q(uniform(tok, rng), true), k(uniform(tok, rng), true), v(uniform(tok, rng), true),
            qp(uniform(tok, rng), true), kp(uniform(tok, rng), true), bias(uniform({2 * 49}, rng), true),
            mod(uniform({2}, rng), true);
        ops::AttentionOptions opt{4, 8, 4, 2, 0.7};
        worst = std::max(worst, fd_error([&] { return weighted(ops::window_attention(q, k, v, bias, qp, kp, mod, opt), 5); },
                                         {q, k, v, qp, kp, bias}));
    }
    {
        Var x(uniform({4, 9, 8}, rng), true), w(uniform({6, 2, 3, 3}, rng), true), b(uniform({6}, rng), true);
        worst = std::max(worst, fd_error([&] { return weighted(ops::conv2d(x, w, b, 2, 1, 2), 6); }, {x, w, b}));
    }
    {
        Var a(uniform({1, 24, 24}, rng, 0, 1), true);
        const Var b(uniform({1, 24, 24}, rng, 0, 1));
        worst = std::max(worst, fd_error([&] { return metrics::ms_ssim(a, b); }, {a}));
    }
    return {"finite-difference gradients", worst <= 1e-4, "max rel err " + fmt(worst)};
}

Tensor hash_frame(int c, int h, int w, std::uint64_t salt)
{
    Tensor t({c, h, w});
    const std::uint64_t m = 1ull << 32;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        std::uint64_t v = ((static_cast<std::uint64_t>(i) + salt) * 2654435761ull + 12345ull) % m;
        v = ((v ^ (v >> 13)) * 1274126177ull) % m;
        t[i] = static_cast<double>(v) / static_cast<double>(m);
    }
    return t;
}

CheckResult metric_references()
{
    // Values from an independent numpy implementation on the same inputs.
    struct Case {
        int c, h, w;
        double ms, ss;
    };
    const Case cases[] = {{3, 64, 64, 0.9728960501353167, 0.9570435170282057},
                          {3, 67, 45, 0.9770025635818831, 0.9568527800078223}};
    double worst = 0;
    for (const auto& c : cases) {
        Tensor a = hash_frame(c.c, c.h, c.w, 0), b = hash_frame(c.c, c.h, c.w, 7777);
        for (std::int64_t i = 0; i < a.numel(); ++i) b[i] = std::clamp(a[i] + 0.3 * (b[i] - 0.5), 0.0, 1.0);
        worst = std::max({worst, std::abs(metrics::ms_ssim(a, b) - c.ms), std::abs(metrics::ssim(a, b) - c.ss)});
    }
    const eval::RDCurve anchor{{0.10, 30.1}, {0.18, 32.4}, {0.31, 34.6}, {0.55, 36.9}};
    const eval::RDCurve test{{0.09, 30.3}, {0.16, 32.5}, {0.29, 34.9}, {0.50, 37.0}};
    eval::RDCurve shifted = anchor;
    for (auto& p : shifted) p.rate *= 1.1;
    const double bd = eval::bd_rate(test, anchor);
    const bool ok = worst <= 1e-8 && std::abs(bd - -13.195477970940983) <= 1e-6 &&
                    std::abs(eval::bd_rate(anchor, anchor)) <= 1e-9 &&
                    std::abs(eval::bd_rate(shifted, anchor) - 10.0) <= 1e-6 &&
                    metrics::psnr_from_mse(0.01) == 20.0;
    return {"metric reference values", ok, "ms-ssim err " + fmt(worst) + ", bd-rate " + fmt(bd) + "%"};
}

CheckResult codec_lockstep()
{
    ModelConfig cfg;
    cfg.channels = 8;
    cfg.resblocks = 1;
    cfg.heads = 2;
    cfg.window = 4;
    cfg.uformer_dim = 8;
    cfg.uformer_depth = 1;
    cfg.motion_channels = cfg.motion_latent_channels = 8;
    cfg.residual_latent_channels = 8;
    cfg.hyper_channels = 4;
    cfg.sfd_encoder_depths = cfg.sfd_decoder_depths = {1, 1, 1, 1};
    CodecModel model(cfg, 7);
    model.update_tables();
    const auto clip = synthetic_clip(5, 40, 72, 3);
    VerbatimIntra intra;
    const auto enc = encode_sequence(model, 512, clip, {3, 3}, intra);
    const auto bytes = enc.container.serialize();
    const auto dec = decode_sequence(model, 512, Container::parse(bytes), intra, 3);
    int mismatched = 0;
    for (std::size_t t = 0; t < clip.size(); ++t)
        if (dec.frames[t].storage() != enc.recon[t].storage()) ++mismatched;
    const auto again = encode_sequence(model, 512, clip, {3, 3}, intra).container.serialize();
    return {"encoder/decoder lockstep", mismatched == 0 && again == bytes,
            std::to_string(bytes.size()) + " bytes, " + std::to_string(mismatched) + " mismatched frames"};
}

}  // namespace

std::vector<CheckResult> run_all(const std::function<void(const CheckResult&)>& on_result)
{
    std::vector<CheckResult> out;
    const std::pair<const char*, CheckResult (*)()> checks[] = {
        {"entropy coder round trips", entropy_round_trips},
        {"parallel kernels match serial reference", kernels_agree},
        {"finite-difference gradients", op_gradients},
        {"metric reference values", metric_references},
        {"encoder/decoder lockstep", codec_lockstep},
    };
    for (const auto& [name, check] : checks) {
        CheckResult r;
        try {
            r = check();
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.name = name;
        if (on_result) on_result(r);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace sttvc::selftest
