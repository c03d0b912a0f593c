#include <doctest.h>

#include <cmath>

#include "sttvc/rdt_motion.hpp"
#include "sttvc/transformer.hpp"
#include "attention_oracle.hpp"
#include "test_util.hpp"

using namespace sttvc;
using namespace sttvc::testing;

TEST_CASE("fuse_frame_pair: shape, identity projection and explicit matrix product")
{
    const int c = 6;
    nn::ParamStore ps(1);
    const nn::Conv2d fuse = nn::conv(ps, "fuse", 2 * c, c, 1);
    std::mt19937_64 rng(1);
    const Var cur(random_tensor({c, 5, 7}, rng)), ref(random_tensor({c, 5, 7}, rng));
    CHECK(fuse_frame_pair(fuse, cur, ref).shape() == cur.shape());
    CHECK_THROWS(fuse_frame_pair(fuse, cur, Var(Tensor({c, 5, 6}))));

    fill(fuse.weight, 0.0);
    fill(fuse.bias, 0.0);
    Var fw = fuse.weight;
    for (int o = 0; o < c; ++o) fw.mutable_value()[o * 2 * c + o] = 1.0;
    CHECK(bitwise_equal(fuse_frame_pair(fuse, cur, ref).value(), cur.value()));

    randomize(fuse.weight, rng, 1.0);
    randomize(fuse.bias, rng, 1.0);
    const Tensor out = fuse_frame_pair(fuse, cur, ref).value();
    double worst = 0.0;
    for (int o = 0; o < c; ++o)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 7; ++x) {
                double s = fuse.bias.value()[o];
                for (int i = 0; i < 2 * c; ++i)
                    s += fuse.weight.value()[o * 2 * c + i] * (i < c ? cur.value().at(i, y, x) : ref.value().at(i - c, y, x));
                worst = std::max(worst, std::abs(s - out.at(o, y, x)));
            }
    CHECK(worst < 1e-6);
}

TEST_CASE("fused self-attention score splits into four cross terms")
{
    const int c = 8, h = 6, w = 6;
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        nn::ParamStore ps(static_cast<std::uint64_t>(trial));
        const nn::Conv2d fuse = nn::conv(ps, "fuse", 2 * c, c, 1, 1, 1, false);
        const Var ft(random_tensor({c, h, w}, rng)), fr(random_tensor({c, h, w}, rng));
        const Tensor fused = fuse_frame_pair(fuse, ft, fr).value();
        // f_a and f_b are the two channel halves of the 1x1 kernel.
        Tensor wa({c, c, 1, 1}), wb({c, c, 1, 1});
        for (int o = 0; o < c; ++o)
            for (int i = 0; i < c; ++i) {
                wa[o * c + i] = fuse.weight.value()[o * 2 * c + i];
                wb[o * c + i] = fuse.weight.value()[o * 2 * c + c + i];
            }
        const Tensor a = ops::conv2d(ft, Var(wa), Var(), 1, 0).value();
        const Tensor b = ops::conv2d(fr, Var(wb), Var(), 1, 0).value();
        std::uniform_int_distribution<int> pos(0, h * w - 1);
        const int p = pos(rng), q = pos(rng);
        double lhs = 0.0, rhs = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            const int pi = ch * h * w + p, qi = ch * h * w + q;
            lhs += fused[pi] * fused[qi];
            rhs += a[pi] * a[qi] + a[pi] * b[qi] + b[pi] * a[qi] + b[pi] * b[qi];
        }
        REQUIRE(std::abs(lhs - rhs) < 1e-6);
    }
}

TEST_CASE("window_msa matches a brute-force softmax loop")
{
    nn::ParamStore ps(3);
    const WindowAttention a = WindowAttention::make(ps, "a", 8, 2, 8, false);
    std::mt19937_64 rng(3);
    randomize(a.bias_table, rng, 0.5);
    const Tensor t = random_tensor({16 * 8, 8}, rng);
    const Tensor got = a(Var(t), 16, 8).value();
    const Tensor want = brute_window_attention(a, t, 16, 8, nullptr, nullptr);
    CHECK(max_abs_diff(got, want) < 1e-9);
}

TEST_CASE("window_msa degenerate cases")
{
    nn::ParamStore ps(4);
    std::mt19937_64 rng(4);
    SUBCASE("a one-token window returns the value projection")
    {
        const WindowAttention a = WindowAttention::make(ps, "w1", 4, 2, 1, false);
        const Var t(random_tensor({6, 4}, rng));
        CHECK(max_abs_diff(a(t, 2, 3).value(), a.proj(a.v(t)).value()) < 1e-12);
    }
    SUBCASE("zero q/k and bias averages the values of each window")
    {
        const WindowAttention a = WindowAttention::make(ps, "w2", 4, 2, 2, false);
        for (Var p : {a.q.weight, a.q.bias, a.k.weight, a.k.bias, a.bias_table}) fill(p, 0.0);
        const Var t(random_tensor({16, 4}, rng));
        const Tensor v = a.v(t).value();
        Tensor mean({16, 4});
        for (int tok = 0; tok < 16; ++tok) {
            const int wy = tok / 4 / 2, wx = tok % 4 / 2;
            for (int c = 0; c < 4; ++c) {
                double s = 0.0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) s += v.at((wy * 2 + dy) * 4 + wx * 2 + dx, c);
                mean.at(tok, c) = s / 4;
            }
        }
        CHECK(max_abs_diff(a(t, 4, 4).value(), a.proj(Var(mean)).value()) < 1e-12);
    }
    SUBCASE("grids the window does not tile use the largest tiling window")
    {
        CHECK(effective_window(8, 16, 24) == 8);
        CHECK(effective_window(4, 6, 4) == 2);
        CHECK(effective_window(8, 34, 60) == 2);
        CHECK(effective_window(8, 3, 5) == 1);
        CHECK_THROWS(effective_window(8, 0, 4));
        const WindowAttention a = WindowAttention::make(ps, "w3", 4, 2, 4, false);
        const Tensor t = random_tensor({6 * 4, 4}, rng);
        CHECK(max_abs_diff(a(Var(t), 6, 4).value(), brute_window_attention(a, t, 6, 4, nullptr, nullptr)) < 1e-12);
    }
}

TEST_CASE("LeWin block: skip path, shape and input gradient")
{
    nn::ParamStore ps(5);
    const LeWinBlock b = LeWinBlock::make(ps, "b", 8, 2, 4, 2);
    std::mt19937_64 rng(5);
    const Var t(random_tensor({8 * 8, 8}, rng));
    CHECK(b(t, 8, 8).shape() == t.shape());
    Var x(random_tensor({4 * 8, 8}, rng), true);
    const auto r = gradcheck([&] { return weighted_sum(b(x, 4, 8), 2); }, {x});
    CHECK(r.max_rel_err < 1e-3);

    for (Var p : {b.attn.proj.weight, b.attn.proj.bias, b.fc2.weight, b.fc2.bias}) fill(p, 0.0);
    CHECK(bitwise_equal(b(t, 8, 8).value(), t.value()));
}

TEST_CASE("Uformer keeps the map shape and is deterministic")
{
    nn::ParamStore ps(6);
    const Uformer u(ps, "u", 8, 8, 8, 1, 2, 4, 2);
    std::mt19937_64 rng(6);
    const Var x(random_tensor({8, 32, 32}, rng));
    const Var a = u(x), b = u(x);
    CHECK(a.shape() == x.shape());
    CHECK(bitwise_equal(a.value(), b.value()));
    CHECK_THROWS(u(Var(random_tensor({8, 30, 32}, rng))));
}

TEST_CASE("motion codec: eval determinism, non-negative bits, normalized masks")
{
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps(7);
    MotionCodec mc(ps, "mc", cfg);
    std::mt19937_64 rng(7);
    const Var f(random_tensor({cfg.motion_channels, 32, 32}, rng));
    const Var y = mc.analysis(f);
    CHECK(y.shape() == Shape{cfg.motion_latent_channels, 8, 8});
    const Tensor q1 = entropy::quantize(y, entropy::Mode::eval, rng).value();
    const Tensor q2 = entropy::quantize(y, entropy::Mode::eval, rng).value();
    CHECK(bitwise_equal(q1, q2));
    CHECK(mc.prior.bits(Var(q1)).value()[0] >= 0.0);

    const MotionField mv = mc.synthesis(Var(q1));
    CHECK(mv.offsets.shape() == Shape{cfg.groups() * 18, 32, 32});
    CHECK(mv.mask.shape() == Shape{cfg.groups() * 9, 32, 32});
    double worst = 0.0;
    for (int g = 0; g < cfg.groups(); ++g)
        for (int p = 0; p < 32 * 32; ++p) {
            double s = 0.0;
            for (int k = 0; k < 9; ++k) s += mv.mask.value()[(g * 9 + k) * 32 * 32 + p];
            worst = std::max(worst, std::abs(s - 1.0));
        }
    CHECK(worst < 1e-6);
    const MotionField again = mc.synthesis(Var(q1));
    CHECK(bitwise_equal(again.offsets.value(), mv.offsets.value()));

    const Tensor equal = ops::group_softmax(Var(Tensor({18, 2, 2}, 0.7)), 2, 9).value();
    for (double m : equal.span()) CHECK(m == doctest::Approx(1.0 / 9).epsilon(1e-12));
}

TEST_CASE("deformable compensation: identity and integer shift")
{
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps(8);
    const DeformCompensator dc(ps, "dc", cfg);
    std::mt19937_64 rng(8);
    const int c = cfg.channels, g = cfg.groups(), h = 5, w = 6;
    const Var ref(random_tensor({c, h, w}, rng));
    Tensor mask({g * 9, h, w}, 0.0);
    for (int gi = 0; gi < g; ++gi)
        for (int p = 0; p < h * w; ++p) mask[(gi * 9 + 4) * h * w + p] = 1.0;
    MotionField mv{Var(Tensor({g * 18, h, w}, 0.0)), Var(mask)};
    CHECK(bitwise_equal(dc(ref, mv).value(), ref.value()));

    // Offset (+1, 0) on every tap with a center-only mask reads one column to the right.
    Tensor off({g * 18, h, w}, 0.0);
    for (int gk = 0; gk < g * 9; ++gk)
        for (int p = 0; p < h * w; ++p) off[(2 * gk) * h * w + p] = 1.0;
    mv.offsets = Var(off);
    const Tensor shifted = dc(ref, mv).value();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) REQUIRE(shifted.at(ch, y, x) == ref.value().at(ch, y, std::min(x + 1, w - 1)));

    off[0] = std::nan("");
    mv.offsets = Var(off);
    CHECK_THROWS(dc(ref, mv));
}
