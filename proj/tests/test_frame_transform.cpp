#include <doctest.h>

#include <cmath>

#include "sttvc/frame_transform.hpp"
#include "sttvc/metrics.hpp"
#include "sttvc/optim.hpp"
#include "sttvc/synthetic.hpp"
#include "test_util.hpp"

using namespace sttvc;
using namespace sttvc::testing;

TEST_CASE("extract_features halves the frame and is deterministic")
{
    const ModelConfig cfg = ModelConfig::toy();
    nn::ParamStore ps(3);
    FeatureExtractor ex(ps, "ex", cfg);
    std::mt19937_64 rng(1);
    const Var x(random_tensor({3, 64, 64}, rng, 0.0, 1.0));
    const Var a = ex(x), b = ex(x);
    CHECK(a.shape() == Shape{32, 32, 32});
    CHECK(bitwise_equal(a.value(), b.value()));
}

TEST_CASE("extract_features rejects bad input")
{
    nn::ParamStore ps(3);
    FeatureExtractor ex(ps, "ex", tiny_config());
    Tensor x({3, 16, 16}, 0.5);
    x[7] = std::nan("");
    CHECK_THROWS(ex(Var(x)));
    CHECK_THROWS(ex(Var(Tensor({1, 16, 16}, 0.5))));
}

TEST_CASE("extract_features parameter gradients match finite differences")
{
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps(5);
    FeatureExtractor ex(ps, "ex", cfg);
    std::mt19937_64 rng(2);
    const Var x(random_tensor({3, 16, 16}, rng, 0.0, 1.0));
    std::vector<Var> params;
    for (const auto& [n, p] : ps.items()) params.push_back(p);
    const auto r = gradcheck([&] { return weighted_sum(ex(x), 9); }, params, 1e-6, 12);
    CHECK(r.max_rel_err < 1e-3);
}

TEST_CASE("reconstruct_frame doubles the feature and clamp_frame hits the bounds")
{
    const ModelConfig cfg = ModelConfig::toy();
    nn::ParamStore ps(3);
    FrameReconstructor rec(ps, "rec", cfg);
    FeatureExtractor ex(ps, "ex", cfg);
    std::mt19937_64 rng(1);
    const Var x(random_tensor({3, 64, 64}, rng, 0.0, 1.0));
    CHECK(rec(ex(x)).shape() == x.shape());

    const Var c = clamp_frame(Var(Tensor({3, 1, 3}, std::vector<double>{-0.5, 0.25, 1.5, -2, 0, 1, 0.999, 3, -1e-9})));
    const std::vector<double> want{0, 0.25, 1, 0, 0, 1, 0.999, 1, 0};
    for (int i = 0; i < 9; ++i) CHECK(c.value()[i] == want[i]);
}

TEST_CASE("non-local enhancement is the identity while W_z is zero")
{
    nn::ParamStore ps(4);
    NonLocalEnhancer nl(ps, "nl", 8, 4);
    std::mt19937_64 rng(3);
    const Var f(random_tensor({8, 16, 16}, rng));
    const Var r(random_tensor({8, 16, 16}, rng));
    CHECK(bitwise_equal(nl(f, {r, r, f}).value(), f.value()));
    const Var same = nl(f, {f});
    CHECK(same.shape() == f.shape());
    CHECK_THROWS(nl(f, {}));
    CHECK_THROWS(nl(f, {Var(Tensor({8, 8, 8}))}));
}

TEST_CASE("non-local enhancement matches an explicit summation")
{
    const int c = 1, h = 8, w = 8, down = 4;
    nn::ParamStore ps(6);
    NonLocalEnhancer nl(ps, "nl", c, down);
    std::mt19937_64 rng(4);
    for (Var p : {nl.theta.weight, nl.theta.bias, nl.phi.weight, nl.phi.bias, nl.g.weight, nl.g.bias, nl.wz.weight,
                  nl.wz.bias})
        randomize(p, rng, 1.0);
    const Tensor f = random_tensor({c, h, w}, rng);
    const std::vector<Tensor> refs{random_tensor({c, h, w}, rng), random_tensor({c, h, w}, rng)};
    const Tensor out = nl(Var(f), {Var(refs[0]), Var(refs[1])}).value();

    const int ph = h / down, pw = w / down, ci = nl.inner();
    auto pooled = [&](const Tensor& t, int ch, int py, int px) {
        double s = 0.0;
        for (int y = 0; y < down; ++y)
            for (int x = 0; x < down; ++x) s += t.at(ch, py * down + y, px * down + x);
        return s / (down * down);
    };
    auto project = [&](const nn::Linear& l, const Tensor& t, int py, int px, int o) {
        double s = l.bias.value()[o];
        for (int ch = 0; ch < c; ++ch) s += l.weight.value()[o * c + ch] * pooled(t, ch, py, px);
        return s;
    };
    std::vector<const Tensor*> keys{&f, &refs[0], &refs[1]};
    double worst = 0.0;
    for (int qy = 0; qy < ph; ++qy)
        for (int qx = 0; qx < pw; ++qx) {
            std::vector<double> logits;
            std::vector<std::vector<double>> values;
            for (const Tensor* k : keys)
                for (int ky = 0; ky < ph; ++ky)
                    for (int kx = 0; kx < pw; ++kx) {
                        double dot = 0.0;
                        std::vector<double> v(ci);
                        for (int i = 0; i < ci; ++i) {
                            dot += project(nl.theta, f, qy, qx, i) * project(nl.phi, *k, ky, kx, i);
                            v[i] = project(nl.g, *k, ky, kx, i);
                        }
                        logits.push_back(dot);
                        values.push_back(v);
                    }
            double mx = logits[0], z = 0.0;
            for (double l : logits) mx = std::max(mx, l);
            for (double l : logits) z += std::exp(l - mx);
            std::vector<double> agg(ci, 0.0);
            for (std::size_t j = 0; j < logits.size(); ++j)
                for (int i = 0; i < ci; ++i) agg[i] += std::exp(logits[j] - mx) / z * values[j][i];
            for (int ch = 0; ch < c; ++ch) {
                double y = nl.wz.bias.value()[ch];
                for (int i = 0; i < ci; ++i) y += nl.wz.weight.value()[ch * ci + i] * agg[i];
                for (int dy = 0; dy < down; ++dy)
                    for (int dx = 0; dx < down; ++dx) {
                        const int yy = qy * down + dy, xx = qx * down + dx;
                        const double want = f.at(ch, yy, xx) + y;
                        worst = std::max(worst, std::abs(out.at(ch, yy, xx) - want) / std::max(1.0, std::abs(want)));
                    }
            }
        }
    CHECK(worst < 1e-5);
}

TEST_CASE("autoencoding fit of a single frame improves PSNR")
{
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps(11);
    FeatureExtractor ex(ps, "ex", cfg);
    FrameReconstructor rec(ps, "rec", cfg);
    optim::Adam adam(ps);
    const Tensor frame = synthetic_clip(1, 32, 32, 2)[0];
    const Var x(frame);
    std::vector<double> psnr;
    for (int step = 0; step <= 200; ++step) {
        if (step % 20 == 0) {
            NoGradGuard g;
            psnr.push_back(metrics::psnr(rec(ex(x)).value(), frame));
        }
        if (step == 200) break;
        ps.zero_grad();
        const Var loss = ops::mse(rec(ex(x)), x);
        backward(loss);
        adam.step(2e-3);
    }
    CAPTURE(psnr);
    for (std::size_t i = 1; i < psnr.size(); ++i) CHECK(psnr[i] > psnr[i - 1]);
    CHECK(psnr.back() > psnr.front() + 5.0);
}
