#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sttvc/synthetic.hpp"
#include "sttvc/training.hpp"
#include "test_util.hpp"

using namespace sttvc;
using namespace sttvc::testing;

namespace {

Var scalar_var(double v, bool grad = false) { return Var(Tensor({1}, v), grad); }

bool has_nonzero_grad(const CodecModel& m, const std::string& prefix)
{
    for (const auto& [name, p] : m.params().items()) {
        if (name.rfind(prefix, 0) != 0 || !p.has_grad()) continue;
        for (double g : p.grad().span())
            if (g != 0.0) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("rate-distortion loss arithmetic")
{
    const Var d = scalar_var(0.001, true);
    const Var l = training::rd_loss(scalar_var(0.05), scalar_var(0.10), d, 256);
    CHECK(l.value().item() == doctest::Approx(0.406).epsilon(1e-12));
    backward(l);
    CHECK(d.grad().item() == doctest::Approx(256.0).epsilon(1e-12));
    CHECK(training::rd_loss(scalar_var(0.05), scalar_var(0.10), scalar_var(0), 2048).value().item() ==
          doctest::Approx(0.15).epsilon(1e-12));
    const Var w = training::warmup_loss(scalar_var(1.0), scalar_var(0.002), 512);
    CHECK(w.value().item() == doctest::Approx(1.0 + 512 * 0.002).epsilon(1e-12));
}

TEST_CASE("distortion measures")
{
    const auto clip = synthetic_clip(2, 64, 64, 3);
    const Var a(clip[0]), b(clip[1]);
    CHECK(training::distortion(a, a, training::Distortion::mse).value().item() == 0.0);
    CHECK(training::distortion(a, a, training::Distortion::ms_ssim).value().item() ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(training::distortion(a, b, training::Distortion::ms_ssim).value().item() > 0.0);
}

TEST_CASE("warmup term vanishes for a perfect prediction and trains only the prediction path")
{
    CodecModel m(tiny_config(), 8);
    const auto clip = synthetic_clip(2, 64, 64, 4);
    std::mt19937_64 rng(1);
    const std::vector<Var> refs{m.extract(Var(clip[0])).detach()};
    const PFrameOutput out = m.code_p_frame(Var(clip[1]), refs, entropy::Mode::train, rng);
    const Var xm = m.mpre_frame(out.pred.mpre);
    CHECK(training::distortion(xm, Var(xm.value()), training::Distortion::mse).value().item() == 0.0);

    m.params().zero_grad();
    backward(training::distortion(xm, Var(clip[1]), training::Distortion::mse));
    CHECK(has_nonzero_grad(m, "motion.estimator"));
    CHECK(has_nonzero_grad(m, "motion.codec"));
    CHECK(has_nonzero_grad(m, "motion.deform"));
    CHECK(has_nonzero_grad(m, "mgp.align"));
    CHECK(has_nonzero_grad(m, "mgp.fusion"));
    CHECK_FALSE(has_nonzero_grad(m, "sfd."));
    CHECK_FALSE(has_nonzero_grad(m, "hyper."));
    CHECK_FALSE(has_nonzero_grad(m, "reconstruct."));
}

TEST_CASE("schedule: warmup length and learning-rate drop")
{
    CodecModel m(tiny_config(), 1);
    training::TrainConfig tc;
    tc.steps = 100;
    tc.crop = 64;
    training::Trainer t(m, {synthetic_clip(7, 64, 64, 1)}, tc);
    CHECK(t.steps_per_epoch() == 6);
    CHECK(t.warmup_steps() == 90);
    CHECK(t.lr_at(1) == 1e-4);
    CHECK(t.lr_at(80) == 1e-4);
    CHECK(t.lr_at(81) == 1e-5);
    CHECK(t.lr_at(100) == 1e-5);

    tc.frames_per_step = 4;
    training::Trainer t4(m, {synthetic_clip(7, 64, 64, 1), synthetic_clip(3, 64, 64, 2)}, tc);
    CHECK(t4.steps_per_epoch() == 2);

    tc = {};
    tc.crop = 70;
    CHECK_THROWS(tc.validate());
    tc = {};
    tc.lr = -1;
    CHECK_THROWS(tc.validate());
}

TEST_CASE("trainer takes finite steps, logs CSV and flags warmup")
{
    CodecModel m(tiny_config(), 2);
    training::TrainConfig tc;
    tc.steps = 4;
    tc.crop = 64;
    tc.warmup_epochs = 1;
    tc.seed = 3;
    training::Trainer t(m, {synthetic_clip(3, 80, 96, 5)}, tc);
    const Tensor before = m.params().items().front().second.value();
    std::ostringstream csv;
    std::vector<training::StepStats> seen;
    t.run(&csv, [&](const training::StepStats& s) { seen.push_back(s); });
    REQUIRE(seen.size() == 4);
    for (const auto& s : seen) {
        CHECK(std::isfinite(s.loss));
        CHECK(s.bpp_mv >= 0);
        CHECK(s.bpp_resi >= 0);
        CHECK(s.loss == doctest::Approx(s.bpp_mv + s.bpp_resi + 256 * (s.distortion + (s.warmup ? s.warmup_distortion : 0)))
                            .epsilon(1e-9));
    }
    CHECK(seen[1].warmup);
    CHECK_FALSE(seen[2].warmup);
    CHECK(seen[2].warmup_distortion == 0.0);
    CHECK_FALSE(bitwise_equal(before, m.params().items().front().second.value()));
    const std::string text = csv.str();
    CHECK(text.rfind("step,bpp_mv,bpp_resi,distortion,loss\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
    CHECK_FALSE(t.rng_state().empty());
}

TEST_CASE("training is reproducible for a fixed seed")
{
    auto run = [](std::uint64_t seed) {
        CodecModel m(tiny_config(), seed);
        training::TrainConfig tc;
        tc.steps = 2;
        tc.crop = 64;
        tc.seed = seed;
        training::Trainer t(m, {synthetic_clip(3, 64, 64, 5)}, tc);
        double last = 0;
        t.run(nullptr, [&](const training::StepStats& s) { last = s.loss; });
        return last;
    };
    CHECK(run(4) == run(4));
    CHECK(run(4) != run(5));
}

TEST_CASE("non-finite loss raises a training error")
{
    CodecModel m(tiny_config(), 3);
    for (auto& [name, p] : m.params().items())
        if (name.rfind("hyper.prior", 0) == 0) {
            Var v = p;
            for (double& x : v.mutable_value().storage()) x = std::nan("");
        }
    training::TrainConfig tc;
    tc.steps = 1;
    tc.crop = 64;
    training::Trainer t(m, {synthetic_clip(2, 64, 64, 5)}, tc);
    CHECK_THROWS_AS(t.step(), training::TrainingError);
}

TEST_CASE("ms-ssim training runs and clip evaluation reports real sizes")
{
    CodecModel m(tiny_config(), 4);
    training::TrainConfig tc;
    tc.steps = 1;
    tc.crop = 64;
    tc.distortion = training::Distortion::ms_ssim;
    const auto clip = synthetic_clip(3, 64, 64, 6);
    training::Trainer t(m, {clip}, tc);
    CHECK(std::isfinite(t.step().loss));
    CHECK_THROWS(training::evaluate_clip(m, clip));
    m.update_tables();
    const auto e = training::evaluate_clip(m, clip);
    CHECK(e.p_frames == 2);
    CHECK(e.bpp_mv > 0);
    CHECK(e.bpp_resi > 0);
    CHECK(e.psnr > 0);
    CHECK(e.rd_loss(256) == doctest::Approx(e.bpp() + 256 * e.mse));
}
