// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Training-based criteria take most of the runtime.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "attention_oracle.hpp"
#include "deform_oracle.hpp"
#include "gradcheck.hpp"
#include "oracle_data.hpp"
#include "sttvc/bitstream.hpp"
#include "sttvc/checkpoint.hpp"
#include "sttvc/entropy.hpp"
#include "sttvc/eval.hpp"
#include "sttvc/rdt_motion.hpp"
#include "sttvc/synthetic.hpp"
#include "sttvc/training.hpp"
#include "test_util.hpp"

using namespace sttvc;
using namespace sttvc::testing;
namespace fs = std::filesystem;

namespace {

struct Options {
    int seeds = 10;
    int smoke_steps = 200;
    int ablation_steps = 400;
    int long_steps = 2000;
    std::string work_dir;
    std::set<std::string> only;
    bool wants(const std::string& id) const { return only.empty() || only.count(id) != 0; }
};

int failures = 0;
const auto t_start = std::chrono::steady_clock::now();

double elapsed() { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count(); }

void report(const std::string& id, const std::string& title, bool ok, const std::string& detail)
{
    std::printf("%s  [%s] %s  (%s)\n", ok ? "PASS" : "FAIL", id.c_str(), title.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += !ok;
}

void progress(const char* fmt, auto... args)
{
    std::fprintf(stderr, "[%7.1fs] ", elapsed());
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// --- entropy ---------------------------------------------------------------

void check_entropy()
{
    std::mt19937_64 rng(101);
    int trials = 0, lossless = 0;
    double worst_excess = -1e300;  // bytes beyond 2% + 64 of the estimate
    auto account = [&](std::size_t bytes, double estimate_bits, std::size_t symbols) {
        if (symbols >= 10000) worst_excess = std::max(worst_excess, bytes - (1.02 * estimate_bits / 8 + 64));
    };

    // Frequency tables from random pmfs.
    for (int t = 0; t < 400; ++t) {
        std::vector<double> pmf(2 + rng() % 500);
        std::exponential_distribution<double> e(1.0);
        for (double& p : pmf) p = e(rng) * (rng() % 6 == 0 ? 1e-8 : 1.0);
        const auto table = entropy::FrequencyTable::from_pmf(-static_cast<int>(rng() % 300), pmf);
        std::discrete_distribution<int> d(pmf.begin(), pmf.end());
        std::vector<int> syms(t % 20 == 0 ? 10000 + rng() % 5000 : rng() % 3000);
        for (int& s : syms) s = d(rng) + table.min_symbol();
        entropy::RangeEncoder enc;
        double est = 0;
        for (int s : syms) {
            table.encode(enc, s);
            est += table.bits(s);
        }
        const auto bytes = enc.finish();
        entropy::RangeDecoder dec(bytes);
        bool ok = true;
        for (int s : syms) ok = ok && table.decode(dec) == s;
        lossless += ok && dec.position() == bytes.size();
        ++trials;
        account(bytes.size(), est, syms.size());
    }
    // Factorized model latents against the model's own estimate.
    for (int t = 0; t < 300; ++t) {
        nn::ParamStore ps(static_cast<std::uint64_t>(t));
        entropy::FactorizedModel m(ps, "fm", 4);
        randomize(m.means, rng, 3.0);
        randomize(m.log_scales, rng, 1.5);
        m.update_tables();
        const int side = t % 30 == 0 ? 50 : 1 + static_cast<int>(rng() % 12);
        Tensor y({4, side, side});
        std::normal_distribution<double> n(0.0, 4.0);
        for (double& v : y.storage()) v = n(rng);
        const Tensor q = entropy::quantize_eval(y);
        entropy::RangeEncoder enc;
        m.encode(enc, q);
        const auto bytes = enc.finish();
        entropy::RangeDecoder dec(bytes);
        const Tensor back = m.decode(dec, q.shape());
        lossless += back.storage() == q.storage() && dec.position() == bytes.size();
        ++trials;
        NoGradGuard g;
        account(bytes.size(), m.bits(Var(q)).value().item(), static_cast<std::size_t>(q.numel()));
    }
    // Gaussian conditional latents.
    for (int t = 0; t < 300; ++t) {
        const int side = t % 30 == 0 ? 58 : 1 + static_cast<int>(rng() % 12);
        const Shape s{3, side, side};
        Tensor mu = random_tensor(s, rng, -20, 20), sigma = random_tensor(s, rng, -2.0, 4.0), q(s);
        for (double& v : sigma.storage()) v = std::exp(v);
        for (std::int64_t i = 0; i < q.numel(); ++i) {
            std::normal_distribution<double> n(mu[i], sigma[i]);
            q[i] = n(rng);
        }
        q = entropy::quantize_eval(q);
        entropy::RangeEncoder enc;
        entropy::gaussian_encode(enc, q, mu, sigma);
        const auto bytes = enc.finish();
        entropy::RangeDecoder dec(bytes);
        const Tensor back = entropy::gaussian_decode(dec, mu, sigma);
        lossless += back.storage() == q.storage() && dec.position() == bytes.size();
        ++trials;
        NoGradGuard g;
        const double est =
            entropy::likelihood_bits(entropy::gaussian_likelihood(Var(q), Var(mu), Var(sigma))).value().item();
        account(bytes.size(), est, static_cast<std::size_t>(q.numel()));
    }
    report("entropy", "Entropy coder: lossless round trips, coded size within 2% + 64 B of the estimate",
           lossless == trials && trials >= 1000 && worst_excess <= 0,
           fmt("%d/%d lossless; worst size excess over the bound %.1f B", lossless, trials, worst_excess));
}

// --- deformable compensation ------------------------------------------------

void check_deform()
{
    std::mt19937_64 rng(202);
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        const int groups = 1 + static_cast<int>(rng() % 2), cin = groups * (1 + static_cast<int>(rng() % 3));
        const int cout = 1 + static_cast<int>(rng() % 4), h = 3 + static_cast<int>(rng() % 5),
                  w = 3 + static_cast<int>(rng() % 5);
        const Tensor x = random_tensor({cin, h, w}, rng), off = random_tensor({groups * 18, h, w}, rng, -3, 3),
                     mask = random_tensor({groups * 9, h, w}, rng, 0, 1), wt = random_tensor({cout, cin, 9}, rng),
                     b = random_tensor({cout}, rng);
        const Tensor got = ops::deform_conv(Var(x), Var(off), Var(mask), Var(wt), Var(b), groups).value();
        const Tensor want = direct_deform(x, off, mask, wt, &b, groups);
        double scale = 0;
        for (double v : want.span()) scale = std::max(scale, std::abs(v));
        worst = std::max(worst, max_abs_diff(got, want) / std::max(scale, 1e-12));
    }

    // Identity kernel through the compensator: zero offsets, center-tap mask.
    ModelConfig cfg = ModelConfig::toy();
    nn::ParamStore ps(5);
    const DeformCompensator dc(ps, "dc", cfg);
    const int g = cfg.groups(), h = 9, w = 11;
    const Var ref(random_tensor({cfg.channels, h, w}, rng));
    Tensor mask({g * 9, h, w}, 0.0);
    for (int gi = 0; gi < g; ++gi)
        for (int p = 0; p < h * w; ++p) mask[(gi * 9 + 4) * h * w + p] = 1.0;
    const bool identity = bitwise_equal(dc(ref, MotionField{Var(Tensor({g * 18, h, w}, 0.0)), Var(mask)}).value(),
                                        ref.value());

    double grad_err = 0;
    for (int t = 0; t < 5; ++t) {
        Var x(random_tensor({4, 5, 6}, rng)), off(random_tensor({36, 5, 6}, rng, -1.5, 1.5), true),
            m(random_tensor({18, 5, 6}, rng, 0, 1), true);
        const Var wt(random_tensor({3, 4, 9}, rng));
        for (double& v : off.mutable_value().storage())
            if (std::abs(v - std::round(v)) < 0.02) v += 0.05;
        const auto r = gradcheck([&] { return weighted_sum(ops::deform_conv(x, off, m, wt, Var(), 2), 11); }, {off, m},
                                 1e-6, 80);
        grad_err = std::max(grad_err, r.max_rel_err);
    }
    report("deform", "Deformable compensation: direct-summation oracle, identity kernel, offset/mask gradients",
           worst <= 1e-5 && identity && grad_err <= 1e-3,
           fmt("oracle rel err %.2e over 100 cases; identity %s; gradient rel err %.2e", worst,
               identity ? "exact" : "NOT exact", grad_err));
}

// --- attention ----------------------------------------------------------------

void check_attention()
{
    std::mt19937_64 rng(303);
    double msa_err = 0, sfd_err = 0, reduce_err = 0, expand_err = 0;
    for (int t = 0; t < 10; ++t) {
        nn::ParamStore ps(static_cast<std::uint64_t>(t));
        const WindowAttention a = WindowAttention::make(ps, "msa", 16, 2, 8, false);
        randomize(a.bias_table, rng, 0.5);
        const Tensor x = random_tensor({16 * 16, 16}, rng);
        const Tensor want = brute_window_attention(a, x, 16, 16, nullptr, nullptr);
        msa_err = std::max(msa_err, max_abs_diff(a(Var(x), 16, 16).value(), want) / (1e-12 + max_abs_diff(want, Tensor(want.shape()))));

        const WindowAttention s = WindowAttention::make(ps, "sfd", 16, 2, 8, true);
        randomize(s.bias_table, rng, 0.5);
        randomize(s.mod, rng, 0.5);
        const Tensor qp = random_tensor({16 * 16, 16}, rng), kp = random_tensor({16 * 16, 16}, rng);
        const Tensor want_s = brute_window_attention(s, x, 16, 16, &qp, &kp);
        sfd_err = std::max(sfd_err, max_abs_diff(s(Var(x), 16, 16, Var(qp), Var(kp)).value(), want_s) /
                                        (1e-12 + max_abs_diff(want_s, Tensor(want_s.shape()))));

        WindowAttention zero_mod = s;
        zero_mod.mod = Var(Tensor(s.mod.shape(), 0.0));
        WindowAttention plain = s;
        plain.mod = Var();
        const Var z(Tensor({16 * 16, 16}, 0.0));
        reduce_err = std::max(reduce_err, max_abs_diff(zero_mod(Var(x), 16, 16, z, z).value(), plain(Var(x), 16, 16).value()));
    }
    for (int t = 0; t < 100; ++t) {
        const int c = 8, h = 6, w = 6;
        nn::ParamStore ps(static_cast<std::uint64_t>(1000 + t));
        const nn::Conv2d fuse = nn::conv(ps, "fuse", 2 * c, c, 1, 1, 1, false);
        const Var ft(random_tensor({c, h, w}, rng)), fr(random_tensor({c, h, w}, rng));
        const Tensor fused = fuse_frame_pair(fuse, ft, fr).value();
        Tensor wa({c, c, 1, 1}), wb({c, c, 1, 1});
        for (int o = 0; o < c; ++o)
            for (int i = 0; i < c; ++i) {
                wa[o * c + i] = fuse.weight.value()[o * 2 * c + i];
                wb[o * c + i] = fuse.weight.value()[o * 2 * c + c + i];
            }
        const Tensor a = ops::conv2d(ft, Var(wa), Var(), 1, 0).value(), b = ops::conv2d(fr, Var(wb), Var(), 1, 0).value();
        for (int p = 0; p < h * w; ++p) {
            const int q = static_cast<int>(rng() % (h * w));
            double lhs = 0, rhs = 0;
            for (int ch = 0; ch < c; ++ch) {
                const int pi = ch * h * w + p, qi = ch * h * w + q;
                lhs += fused[pi] * fused[qi];
                rhs += a[pi] * a[qi] + a[pi] * b[qi] + b[pi] * a[qi] + b[pi] * b[qi];
            }
            expand_err = std::max(expand_err, std::abs(lhs - rhs));
        }
    }
    report("attention", "Attention oracles: brute-force loops, zero prior/mod reduction, four-term expansion",
           msa_err <= 1e-5 && sfd_err <= 1e-5 && reduce_err <= 1e-7 && expand_err <= 1e-6,
           fmt("window_msa %.2e, sfd_attention %.2e, reduction %.2e, expansion %.2e over 100 cases", msa_err, sfd_err,
               reduce_err, expand_err));
}

// --- BD-rate ---------------------------------------------------------------------

void check_bdrate()
{
    auto curve = [](const double* r, const double* q, int n, double scale) {
        eval::RDCurve c;
        for (int i = 0; i < n; ++i) c.push_back({r[i] * scale, q[i]});
        return c;
    };
    double worst = 0, identical = 0, shift_err = 0;
    for (const auto& c : kBdRateCases) {
        const auto anchor = curve(c.anchor_rate, c.anchor_q, c.n, 1.0);
        worst = std::max(worst, std::abs(eval::bd_rate(curve(c.test_rate, c.test_q, c.n, 1.0), anchor) - c.bd_rate));
        identical = std::max(identical, std::abs(eval::bd_rate(anchor, anchor)));
        shift_err = std::max(shift_err, std::abs(eval::bd_rate(curve(c.anchor_rate, c.anchor_q, c.n, 1.1), anchor) - 10.0));
    }
    report("bdrate", "BD-rate: identity 0%, x1.10 shift +10%, independent Bjontegaard reference",
           identical == 0.0 && shift_err <= 0.01 && worst <= 0.05,
           fmt("identical %.1e%%, shift error %.1e, reference error %.1e points", identical, shift_err, worst));
}

// --- training-based -----------------------------------------------------------

struct RunResult {
    std::vector<double> rd;  // per-step rate-distortion loss without the warmup term
    training::ClipEval eval;
};

const training::Clip& toy_clip()
{
    static const training::Clip clip = synthetic_clip(7, 64, 64, 42);
    return clip;
}

RunResult train_toy(ModelConfig cfg, double lambda, int steps, std::uint64_t seed, const std::string& save_to = {})
{
    CodecModel model(cfg, seed);
    training::TrainConfig tc;
    tc.lambda = lambda;
    tc.steps = steps;
    tc.crop = 64;
    tc.seed = seed;
    training::Trainer trainer(model, {toy_clip()}, tc);
    RunResult r;
    trainer.run(nullptr, [&](const training::StepStats& s) {
        r.rd.push_back(s.bpp_mv + s.bpp_resi + lambda * s.distortion);
    });
    model.update_tables();
    r.eval = training::evaluate_clip(model, toy_clip());
    if (!save_to.empty())
        save_checkpoint(save_to, model, lambda, static_cast<std::uint64_t>(steps), trainer.rng_state());
    return r;
}

double mean(const std::vector<double>& v, std::size_t from, std::size_t to)
{
    double s = 0;
    for (std::size_t i = from; i < to; ++i) s += v[i];
    return s / static_cast<double>(to - from);
}

ModelConfig toy_variant(const std::string& which)
{
    ModelConfig c = ModelConfig::toy();
    if (which == "no-mgp") c.use_mgp = false;
    if (which == "no-sfd") c.use_sfd_prior = false;
    return c;
}

std::string describe(const training::ClipEval& e)
{
    return fmt("bpp %.4f (mv %.4f, resi %.4f), PSNR %.2f dB, prediction-only %.2f dB", e.bpp(), e.bpp_mv, e.bpp_resi,
               e.psnr, e.pred_psnr);
}

void check_lockstep(const std::string& ckpt_path)
{
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const auto seq = synthetic_clip(16, 64, 64, 77);
    VerbatimIntra intra;
    const eval::EvalOptions opt{{32, 3}, 16, false};
    const auto r = eval::run_codec_eval("lockstep", *ck.model, ck.lambda, seq, opt, intra);
    const auto bytes = r.encoded.container.serialize();
    const auto dec = decode_sequence(*ck.model, ck.lambda, Container::parse(bytes), intra, 3);
    int equal = 0;
    for (std::size_t t = 0; t < seq.size(); ++t) equal += bitwise_equal(dec.frames[t], r.encoded.recon[t]);
    const double container_bits = 8.0 * static_cast<double>(bytes.size());
    const double reported_bits = r.bpp * 16 * 64 * 64;
    const bool rate_ok = r.container_bytes == bytes.size() && std::abs(container_bits - reported_bits) <= 1e-9 * container_bits;
    report("lockstep", "Codec lockstep: trained toy checkpoint, 16-frame 64x64 sequence",
           equal == 16 && rate_ok,
           fmt("%d/16 frames bitwise equal; container %zu bits, reported rate %.5f bpp = %.1f bits", equal,
               bytes.size() * 8, r.bpp, reported_bits));
}

void check_protocol(const std::string& ckpt_path)
{
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const auto seq = synthetic_clip(96, 64, 64, 78);
    VerbatimIntra intra;
    const eval::EvalOptions opt{{32, 3}, 96, false};
    const auto r = eval::run_codec_eval("protocol", *ck.model, ck.lambda, seq, opt, intra);
    const auto dec = decode_sequence(*ck.model, ck.lambda, r.encoded.container, intra, 3);
    bool refs_ok = true, types_ok = true, logs_equal = true;
    for (int t = 0; t < 96; ++t) {
        const auto& f = r.encoded.frames[static_cast<std::size_t>(t)];
        const int gop = t / 32 * 32, k = t % 32;
        types_ok = types_ok && (f.type == FrameType::I) == (k == 0);
        std::array<int, 3> want{-1, -1, -1};
        if (k == 1) want = {gop, gop, gop};
        if (k == 2) want = {gop + 1, gop, gop};
        if (k >= 3) want = {t - 1, t - 2, t - 3};
        refs_ok = refs_ok && f.refs == want;
        logs_equal = logs_equal && dec.log[static_cast<std::size_t>(t)].refs == f.refs &&
                     dec.log[static_cast<std::size_t>(t)].buffer_size == f.buffer_size;
    }
    report("protocol", "Protocol: 96 frames at intra period 32, padded 3-reference buffer",
           r.i_frames == 3 && r.p_frames == 93 && types_ok && refs_ok && logs_equal,
           fmt("%d I + %d P; reference slots %s; decoder buffer log %s", r.i_frames, r.p_frames,
               refs_ok ? "as specified" : "WRONG", logs_equal ? "identical" : "DIFFERENT"));
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance checks"};
    Options opt;
    std::vector<std::string> only;
    app.add_option("--seeds", opt.seeds, "Seeds for the multi-seed training criteria");
    app.add_option("--smoke-steps", opt.smoke_steps, "Steps for the loss-decrease check");
    app.add_option("--ablation-steps", opt.ablation_steps, "Training steps per ablation run");
    app.add_option("--long-steps", opt.long_steps, "Steps of the rate-distortion direction runs");
    app.add_option("--work-dir", opt.work_dir, "Directory for checkpoints");
    app.add_option("--only", only, "Run a subset: entropy deform attention bdrate training lockstep protocol ablation");
    CLI11_PARSE(app, argc, argv);
    opt.only.insert(only.begin(), only.end());
    if (opt.work_dir.empty()) opt.work_dir = (fs::temp_directory_path() / "sttvc_acceptance").string();
    fs::create_directories(opt.work_dir);

    try {
        if (opt.wants("entropy")) check_entropy();
        if (opt.wants("deform")) check_deform();
        if (opt.wants("attention")) check_attention();
        if (opt.wants("bdrate")) check_bdrate();

        const std::string ckpt = (fs::path(opt.work_dir) / "toy_lambda256.ckpt").string();
        std::map<double, RunResult> long_runs;
        if (opt.wants("training")) {
            for (double lambda : {256.0, 2048.0}) {
                progress("training lambda=%g for %d steps", lambda, opt.long_steps);
                long_runs[lambda] = train_toy(ModelConfig::toy(), lambda, opt.long_steps, 1, lambda == 256 ? ckpt : "");
                progress("lambda=%g: %s", lambda, describe(long_runs[lambda].eval).c_str());
            }
        } else if ((opt.wants("lockstep") || opt.wants("protocol")) && !fs::exists(ckpt)) {
            progress("%s", "training a short lambda=256 model for the coding checks");
            train_toy(ModelConfig::toy(), 256, 200, 1, ckpt);
        }
        if (opt.wants("lockstep")) check_lockstep(ckpt);
        if (opt.wants("protocol")) check_protocol(ckpt);

        // Full-model runs double as the loss-decrease runs: their first
        // smoke_steps steps are what a shorter run would take.
        std::vector<RunResult> full;
        const bool mgp_ablation = opt.wants("ablation") || opt.wants("ablation-mgp");
        const bool sfd_ablation = opt.wants("ablation") || opt.wants("ablation-sfd");
        if (opt.wants("training") || mgp_ablation || sfd_ablation) {
            const int steps = mgp_ablation || sfd_ablation ? std::max(opt.ablation_steps, opt.smoke_steps) : opt.smoke_steps;
            for (int s = 1; s <= opt.seeds; ++s) {
                progress("full model, seed %d, %d steps", s, steps);
                full.push_back(train_toy(ModelConfig::toy(), 256, steps, static_cast<std::uint64_t>(s)));
            }
        }
        if (opt.wants("training")) {
            int decreased = 0;
            std::string firsts;
            for (const auto& r : full) {
                const std::size_t n = static_cast<std::size_t>(opt.smoke_steps);
                decreased += mean(r.rd, n - 20, n) < mean(r.rd, 0, 20);
            }
            const auto& lo = long_runs[256.0].eval;
            const auto& hi = long_runs[2048.0].eval;
            const bool beats_prediction = lo.psnr > lo.pred_psnr && hi.psnr > hi.pred_psnr;
            const bool direction = hi.mse < lo.mse && hi.bpp() > lo.bpp();
            report("training", "Training smoke: loss decrease, residual beats prediction, lambda direction",
                   decreased * 10 >= 9 * opt.seeds && beats_prediction && direction,
                   fmt("loss decreased in %d/%d seeds; lambda=256: %s; lambda=2048: %s; MSE %.3e -> %.3e", decreased,
                       opt.seeds, describe(lo).c_str(), describe(hi).c_str(), lo.mse, hi.mse));
        }
        if (mgp_ablation || sfd_ablation) {
            int mgp_wins = 0, sfd_wins = 0;
            std::string mgp_detail, sfd_detail;
            for (int s = 1; s <= opt.seeds; ++s) {
                const auto& f = full[static_cast<std::size_t>(s - 1)].eval;
                const auto seed = static_cast<std::uint64_t>(s);
                const std::string sep = s > 1 ? " " : "";
                if (mgp_ablation) {
                    progress("no-MGP model, seed %d", s);
                    const auto m = train_toy(toy_variant("no-mgp"), 256, opt.ablation_steps, seed).eval;
                    const double jf = f.rd_loss(256), jm = m.rd_loss(256);
                    mgp_wins += jf < jm;
                    progress("seed %d: RD loss %.4f vs no-MGP %.4f", s, jf, jm);
                    mgp_detail += sep + fmt("%.3f/%.3f", jf, jm);
                }
                if (sfd_ablation) {
                    progress("no-SFD-prior model, seed %d", s);
                    const auto p = train_toy(toy_variant("no-sfd"), 256, opt.ablation_steps, seed).eval;
                    const double rf = f.bpp_resi + 256 * f.mse, rp = p.bpp_resi + 256 * p.mse;
                    sfd_wins += rf < rp;
                    progress("seed %d: residual cost %.4f vs no-SFD %.4f", s, rf, rp);
                    sfd_detail += sep + fmt("%.3f/%.3f", rf, rp);
                }
            }
            if (mgp_ablation)
                report("ablation-mgp", "Ablation: multi-reference refinement lowers eval RD loss",
                       mgp_wins * 10 >= 7 * opt.seeds,
                       fmt("%d/%d seeds; with/without: %s", mgp_wins, opt.seeds, mgp_detail.c_str()));
            if (sfd_ablation)
                report("ablation-sfd", "Ablation: prediction prior lowers residual rate at matched distortion",
                       sfd_wins * 10 >= 7 * opt.seeds,
                       fmt("%d/%d seeds; with/without: %s", sfd_wins, opt.seeds, sfd_detail.c_str()));
        }
    } catch (const std::exception& e) {
        std::printf("FAIL  [error] %s\n", e.what());
        return 1;
    }
    std::printf("%s after %.0f s\n", failures ? "acceptance FAILED" : "acceptance passed", elapsed());
    return failures ? 1 : 0;
}
