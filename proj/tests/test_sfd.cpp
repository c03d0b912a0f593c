#include <doctest.h>

#include "attention_oracle.hpp"
#include "sttvc/sfd.hpp"
#include "test_util.hpp"

using namespace sttvc;
using namespace sttvc::testing;

TEST_CASE("embed_patches: grid, bias tokens and linearity")
{
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps(1);
    const SfdCoder sfd(ps, "sfd", cfg);
    std::mt19937_64 rng(1);
    const Tensor a = random_tensor({cfg.channels, 32, 32}, rng), b = random_tensor({cfg.channels, 32, 32}, rng);
    const Tensor ea = sfd.embed_patches(Var(a)).value();
    CHECK(ea.shape() == Shape{16 * 16, cfg.sfd_dim(0)});

    const Tensor zero = sfd.embed_patches(Var(Tensor({cfg.channels, 32, 32}, 0.0))).value();
    const Var bias = ps.get("sfd.embed.bias");
    for (int t = 0; t < zero.dim(0); ++t)
        for (int c = 0; c < zero.dim(1); ++c) REQUIRE(zero.at(t, c) == bias.value()[c]);

    Tensor ab = a;
    ab += b;
    const Tensor eab = sfd.embed_patches(Var(ab)).value(), eb = sfd.embed_patches(Var(b)).value();
    double worst = 0.0;
    for (int t = 0; t < eab.dim(0); ++t)
        for (int c = 0; c < eab.dim(1); ++c)
            worst = std::max(worst, std::abs(eab.at(t, c) - (ea.at(t, c) + eb.at(t, c) - bias.value()[c])));
    CHECK(worst < 1e-12);
    CHECK_THROWS(sfd.embed_patches(Var(Tensor({cfg.channels, 24, 32}, 0.0))));
}

TEST_CASE("prior attention reduces to plain windowed attention without prior and modulator")
{
    nn::ParamStore ps(2);
    const WindowAttention a = WindowAttention::make(ps, "a", 8, 2, 4, true);
    std::mt19937_64 rng(2);
    randomize(a.bias_table, rng, 0.3);
    const Var t(random_tensor({8 * 8, 8}, rng));
    WindowAttention plain = a;
    plain.mod = Var();
    const Var zeros(Tensor({8 * 8, 8}, 0.0));
    CHECK(max_abs_diff(a(t, 8, 8, zeros, zeros).value(), plain(t, 8, 8).value()) <= 1e-7);

    SUBCASE("one-token window returns the value projection")
    {
        const WindowAttention one = WindowAttention::make(ps, "one", 8, 2, 1, true);
        const Var qp(random_tensor({6, 8}, rng)), kp(random_tensor({6, 8}, rng));
        const Var x(random_tensor({6, 8}, rng));
        CHECK(max_abs_diff(one(x, 2, 3, qp, kp).value(), one.proj(one.v(x)).value()) < 1e-12);
    }
}

TEST_CASE("four-term attention matches a brute-force loop and its gradients")
{
    nn::ParamStore ps(3);
    const WindowAttention a = WindowAttention::make(ps, "a", 4, 2, 2, true);
    std::mt19937_64 rng(3);
    randomize(a.bias_table, rng, 0.5);
    randomize(a.mod, rng, 0.5);
    const Tensor t = random_tensor({4, 4}, rng);
    Var qp(random_tensor({4, 4}, rng), true), kp(random_tensor({4, 4}, rng), true);
    const Tensor got = a(Var(t), 2, 2, qp, kp).value();
    const Tensor want = brute_window_attention(a, t, 2, 2, &qp.value(), &kp.value());
    CHECK(max_abs_diff(got, want) < 1e-5);

    const auto r = gradcheck([&] { return weighted_sum(a(Var(t), 2, 2, qp, kp), 4); }, {qp, a.mod});
    CHECK(r.max_rel_err < 1e-3);
    CHECK_THROWS(a(Var(t), 2, 2, Var(Tensor({3, 4}, 0.0)), kp));
}

TEST_CASE("downsample_prior quarters the grid")
{
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps(4);
    const SfdCoder sfd(ps, "sfd", cfg);
    std::mt19937_64 rng(4);
    Var t(random_tensor({16 * 16, cfg.sfd_dim(0)}, rng));
    int h = 16, w = 16;
    for (int l = 0; l < 3; ++l) {
        t = sfd.downsample_prior(t, l, 0, h, w);
        h /= 2;
        w /= 2;
        CHECK(t.shape() == Shape{h * w, cfg.sfd_dim(l + 1)});
    }
    CHECK(t.dim(0) == 16 * 16 / 64);
    CHECK_THROWS(sfd.downsample_prior(Var(random_tensor({3 * 4, cfg.sfd_dim(0)}, rng)), 0, 0, 3, 4));
}

TEST_CASE("residual coder: shapes, determinism, prior symmetry and gradient reach")
{
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps(5);
    const SfdCoder sfd(ps, "sfd", cfg);
    std::mt19937_64 rng(5);
    Var resi(random_tensor({cfg.channels, 32, 32}, rng), true);
    Var pred(random_tensor({cfg.channels, 32, 32}, rng), true);

    const PriorTokens enc_prior = sfd.derive_prior(pred);
    const PriorTokens dec_prior = sfd.derive_prior(pred);
    for (int l = 0; l < SfdCoder::kLevels; ++l) {
        CHECK(bitwise_equal(enc_prior.q[l].value(), dec_prior.q[l].value()));
        CHECK(bitwise_equal(enc_prior.k[l].value(), dec_prior.k[l].value()));
        CHECK(enc_prior.q[l].dim(0) == enc_prior.grid[l].first * enc_prior.grid[l].second);
    }
    const Var y = sfd.encode(resi, enc_prior);
    CHECK(y.shape() == Shape{cfg.residual_latent_channels, 2, 2});
    CHECK(bitwise_equal(sfd.encode(resi, dec_prior).value(), y.value()));

    const Var zero(Tensor({cfg.channels, 32, 32}, 0.0));
    CHECK(bitwise_equal(sfd.encode(zero, enc_prior).value(), sfd.encode(zero, dec_prior).value()));

    const Var rec = sfd.decode(Var(entropy::quantize_eval(y.value())), dec_prior);
    CHECK(rec.shape() == resi.shape());
    CHECK(bitwise_equal(sfd.decode(Var(entropy::quantize_eval(y.value())), enc_prior).value(), rec.value()));

    backward(weighted_sum(sfd.encode(resi, sfd.derive_prior(pred)), 1));
    double gr = 0.0, gp = 0.0;
    for (double g : resi.grad().span()) gr += std::abs(g);
    for (double g : pred.grad().span()) gp += std::abs(g);
    CHECK(gr > 0.0);
    CHECK(gp > 0.0);
}

TEST_CASE("hyperprior shapes and scale floor")
{
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps(6);
    const Hyperprior hp(ps, "hp", cfg);
    std::mt19937_64 rng(6);
    const Var y(random_tensor({cfg.residual_latent_channels, 5, 3}, rng, -4, 4));
    const Var z = hp.analysis(y);
    CHECK(z.shape() == Shape{cfg.hyper_channels, 2, 1});
    const auto [mu, sigma] = hp.synthesis(Var(entropy::quantize_eval(z.value())), 5, 3);
    CHECK(mu.shape() == y.shape());
    CHECK(sigma.shape() == y.shape());
    for (double s : sigma.value().span()) CHECK(s >= entropy::kScaleMin);
}
