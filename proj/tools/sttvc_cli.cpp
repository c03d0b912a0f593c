// sttvc: train, encode, decode, eval, bdrate, selftest.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "sttvc/bitstream.hpp"
#include "sttvc/bytes.hpp"
#include "sttvc/checkpoint.hpp"
#include "sttvc/eval.hpp"
#include "sttvc/image_io.hpp"
#include "sttvc/selftest.hpp"
#include "sttvc/synthetic.hpp"
#include "sttvc/training.hpp"

using namespace sttvc;
namespace fs = std::filesystem;

namespace {

struct SequenceArgs {
    std::string path;
    int width = 0, height = 0;
};

void add_sequence_options(CLI::App* app, SequenceArgs& s)
{
    app->add_option("--width", s.width, "Frame width for raw RGB24 input");
    app->add_option("--height", s.height, "Frame height for raw RGB24 input");
}

struct CodingArgs {
    int intra_period = 32;
    int frames = 96;
    int gop_refs = 3;
    std::string intra = "verbatim";
};

void add_coding_options(CLI::App* app, CodingArgs& c)
{
    app->add_option("--intra-period", c.intra_period, "Distance between I-frames")->check(CLI::PositiveNumber);
    app->add_option("--frames", c.frames, "Frames to code")->check(CLI::PositiveNumber);
    app->add_option("--gop-refs", c.gop_refs, "Reference buffer size")->check(CLI::Range(1, 3));
    app->add_option("--intra", c.intra, "I-frame codec: verbatim or external:<enc cmd>;<dec cmd>");
}

Checkpoint open_checkpoint(const std::string& path, double lambda)
{
    Checkpoint ck = load_checkpoint(resolve_checkpoint_path(path));
    if (lambda > 0 && lambda != ck.lambda)
        throw std::runtime_error("checkpoint " + path + " was trained for lambda " + std::to_string(ck.lambda));
    return ck;
}

std::string stem_of(const std::string& path)
{
    fs::path p(path);
    if (p.filename().empty()) p = p.parent_path();
    return p.stem().string();
}

void print_frames(const eval::SequenceResult& r)
{
    std::printf("%s: %d frames (%d I, %d P), %zu bytes, %.5f bpp, PSNR %.3f dB", r.sequence.c_str(),
                static_cast<int>(r.frames.size()), r.i_frames, r.p_frames, r.container_bytes, r.bpp, r.psnr);
    if (r.msssim > 0) std::printf(", MS-SSIM %.5f", r.msssim);
    // A verbatim intra codec pins I-frames at the PSNR cap, so P-frames get their own mean.
    double p_psnr = 0;
    for (const auto& f : r.frames)
        if (f.type == FrameType::P) p_psnr += f.psnr;
    if (r.p_frames > 0) std::printf(" (P-frames %.3f dB)", p_psnr / r.p_frames);
    std::printf("\n");
}

int cmd_train(const std::string& config_name, const std::vector<std::string>& ablate,
              const std::vector<std::string>& inputs, const SequenceArgs& seq, int synthetic, int clip_len,
              const std::string& out, const std::string& log_path, training::TrainConfig tc,
              const std::string& distortion, int report_every)
{
    ModelConfig cfg;
    if (config_name == "toy")
        cfg = ModelConfig::toy();
    else if (config_name != "full") {
        std::ifstream f(config_name);
        if (!f) throw std::runtime_error("cannot read config " + config_name);
        cfg = model_config_from_json(nlohmann::json::parse(f));
    }
    for (const auto& a : ablate) {
        if (a == "rdt")
            cfg.use_rdt = false;
        else if (a == "mgp")
            cfg.use_mgp = false;
        else if (a == "sfd")
            cfg.use_sfd_prior = false;
        else
            throw std::invalid_argument("unknown ablation " + a);
    }
    cfg.validate();
    tc.distortion = distortion == "msssim" ? training::Distortion::ms_ssim : training::Distortion::mse;
    tc.validate();

    std::vector<training::Clip> clips;
    for (const auto& in : inputs) {
        const auto frames = io::read_sequence(in, -1, seq.width, seq.height);
        for (std::size_t s = 0; s + 2 <= frames.size(); s += static_cast<std::size_t>(clip_len)) {
            const auto end = std::min(frames.size(), s + static_cast<std::size_t>(clip_len));
            clips.emplace_back(frames.begin() + static_cast<long>(s), frames.begin() + static_cast<long>(end));
        }
    }
    for (int i = 0; i < synthetic; ++i)
        clips.push_back(synthetic_clip(clip_len, tc.crop, tc.crop, tc.seed * 1000 + static_cast<std::uint64_t>(i)));
    if (clips.empty()) throw std::invalid_argument("no training clips: give --input or --synthetic");

    CodecModel model(cfg, tc.seed);
    training::Trainer trainer(model, clips, tc);
    std::printf("training %zu clips, %ld steps/epoch, warmup %ld steps, %lld parameters\n", clips.size(),
                trainer.steps_per_epoch(), trainer.warmup_steps(), static_cast<long long>(model.params().count()));
    std::ofstream log;
    if (!log_path.empty()) log.open(log_path);
    const auto t0 = std::chrono::steady_clock::now();
    trainer.run(log_path.empty() ? nullptr : &log, [&](const training::StepStats& s) {
        if (report_every > 0 && (s.step % report_every == 0 || s.step == tc.steps)) {
            const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("step %ld  loss %.4f  bpp_mv %.4f  bpp_resi %.4f  d %.6f%s  lr %.1e  %.0fs\n", s.step,
                        s.loss, s.bpp_mv, s.bpp_resi, s.distortion, s.warmup ? "  (warmup)" : "", s.lr, sec);
            std::fflush(stdout);
        }
    });
    model.update_tables();
    save_checkpoint(out, model, tc.lambda, static_cast<std::uint64_t>(trainer.steps_done()), trainer.rng_state());
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_encode(const std::string& ckpt, double lambda, const SequenceArgs& seq, const CodingArgs& c,
               const std::string& out, const std::string& log_path)
{
    const Checkpoint ck = open_checkpoint(ckpt, lambda);
    const auto frames = io::read_sequence(seq.path, c.frames, seq.width, seq.height);
    auto intra = make_intra_codec(c.intra);
    eval::EvalOptions opt{{c.intra_period, c.gop_refs}, c.frames, true};
    const auto r = eval::run_codec_eval(stem_of(seq.path), *ck.model, ck.lambda, frames, opt, *intra);
    write_file(out, r.encoded.container.serialize());
    if (!log_path.empty()) {
        std::ofstream f(log_path);
        eval::write_frame_csv(f, {r});
    }
    print_frames(r);
    return 0;
}

int cmd_decode(const std::string& ckpt, const std::string& in, const std::string& out, const CodingArgs& c,
               const SequenceArgs& verify)
{
    const auto bytes = read_file(in);
    const Container container = Container::parse(bytes);
    const Checkpoint ck = open_checkpoint(ckpt, 0);
    auto intra = make_intra_codec(c.intra);
    const auto dec = decode_sequence(*ck.model, ck.lambda, container, *intra, c.gop_refs);
    io::write_sequence(out, dec.frames);
    std::printf("decoded %zu frames (%ux%u) to %s\n", dec.frames.size(), container.header.width,
                container.header.height, out.c_str());
    if (verify.path.empty()) return 0;
    // Self-check: re-run the encoder on the source and compare.
    const auto src = io::read_sequence(verify.path, static_cast<int>(dec.frames.size()), verify.width, verify.height);
    const auto enc = encode_sequence(*ck.model, ck.lambda, src, {container.header.intra_period, c.gop_refs}, *intra);
    int bad = 0;
    for (std::size_t t = 0; t < dec.frames.size(); ++t)
        if (t >= enc.recon.size() || enc.recon[t].storage() != dec.frames[t].storage()) {
            if (bad++ == 0) std::fprintf(stderr, "verify: frame %zu differs from the encoder reconstruction\n", t);
        }
    if (enc.container.serialize() != bytes) {
        std::fprintf(stderr, "verify: stream differs from a fresh encode of the source\n");
        ++bad;
    }
    std::printf("verify: %s\n", bad ? "MISMATCH" : "ok");
    return bad ? 3 : 0;
}

int cmd_eval(const std::vector<std::string>& ckpts, const std::vector<std::string>& inputs, const SequenceArgs& seq,
             const CodingArgs& c, const std::string& frame_csv, const std::string& rd_csv, bool msssim,
             const std::string& recon, const std::string& stream)
{
    std::vector<eval::SequenceResult> results;
    if (!recon.empty()) {
        if (inputs.size() != 1 || stream.empty())
            throw std::invalid_argument("--recon needs exactly one --input and the --stream it was decoded from");
        const auto bytes = read_file(stream);
        const Container container = Container::parse(bytes);
        const auto src = io::read_sequence(inputs[0], static_cast<int>(container.records.size()), seq.width, seq.height);
        const auto dec = io::read_sequence(recon, static_cast<int>(container.records.size()));
        if (src.size() != dec.size()) throw std::runtime_error("source and reconstruction frame counts differ");
        eval::SequenceResult r;
        r.sequence = stem_of(inputs[0]);
        const auto id = container.header.lambda_id;
        r.lambda = id < standard_lambdas().size() ? standard_lambdas()[id] : 0.0;
        r.width = container.header.width;
        r.height = container.header.height;
        r.frames = eval::score_frames(src, dec, msssim);
        r.container_bytes = bytes.size();
        r.bpp = 8.0 * bytes.size() / (static_cast<double>(dec.size()) * r.width * r.height);
        for (std::size_t t = 0; t < r.frames.size(); ++t) {
            r.frames[t].type = container.records[t].type;
            r.frames[t].bytes = FrameRecord::kOverhead + container.records[t].payload.size();
            r.psnr += r.frames[t].psnr / r.frames.size();
            r.msssim += r.frames[t].msssim / r.frames.size();
            (r.frames[t].type == FrameType::I ? r.i_frames : r.p_frames)++;
        }
        results.push_back(std::move(r));
    } else {
        if (ckpts.empty() || inputs.empty()) throw std::invalid_argument("eval needs --checkpoint and --input");
        auto intra = make_intra_codec(c.intra);
        const eval::EvalOptions opt{{c.intra_period, c.gop_refs}, c.frames, msssim};
        for (const auto& in : inputs) {
            const auto frames = io::read_sequence(in, c.frames, seq.width, seq.height);
            for (const auto& path : ckpts) {
                const Checkpoint ck = open_checkpoint(path, 0);
                results.push_back(eval::run_codec_eval(stem_of(in), *ck.model, ck.lambda, frames, opt, *intra));
            }
        }
    }
    for (const auto& r : results) print_frames(r);
    if (!frame_csv.empty()) {
        std::ofstream f(frame_csv);
        eval::write_frame_csv(f, results);
    }
    if (!rd_csv.empty()) {
        std::ofstream f(rd_csv);
        eval::write_rd_csv(f, results);
    }
    return 0;
}

int cmd_bdrate(const std::string& test, const std::string& anchor, const std::string& metric)
{
    const auto t = eval::read_rd_csv(test), a = eval::read_rd_csv(anchor);
    const std::vector<std::string> metrics = metric == "both" ? std::vector<std::string>{"psnr", "msssim"}
                                                              : std::vector<std::string>{metric};
    for (const auto& m : metrics) {
        for (const auto& [name, curve] : eval::curves_by_sequence(t, m)) {
            const auto anchors = eval::curves_by_sequence(a, m);
            for (const auto& [aname, acurve] : anchors)
                if (aname == name) std::printf("%s %s: %.2f%%\n", name.c_str(), m.c_str(), eval::bd_rate(curve, acurve));
        }
        std::printf("BD-rate (%s, average): %.2f%%\n", m.c_str(), eval::average_bd_rate(t, a, m));
    }
    return 0;
}

int cmd_selftest()
{
    int failed = 0;
    selftest::run_all([&](const selftest::CheckResult& r) {
        std::printf("%s  %s  (%s)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        std::fflush(stdout);
        failed += !r.passed;
    });
    std::printf("%s\n", failed ? "selftest FAILED" : "selftest passed");
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Learned P-frame video codec"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
    std::string config_name = "toy", out_ckpt, train_log, distortion = "mse";
    std::vector<std::string> ablate, train_inputs;
    SequenceArgs train_seq;
    int synthetic = 0, clip_len = 7, report_every = 50;
    training::TrainConfig tc;
    train->add_option("--config", config_name, "toy, full, or a JSON file");
    train->add_option("--ablate", ablate, "Disable components: rdt, mgp, sfd")->delimiter(',');
    train->add_option("--input", train_inputs, "Training sequence(s), split into clips");
    add_sequence_options(train, train_seq);
    train->add_option("--synthetic", synthetic, "Number of synthetic clips to add");
    train->add_option("--clip-len", clip_len, "Frames per training clip")->check(CLI::Range(2, 1000));
    train->add_option("-o,--out", out_ckpt, "Checkpoint to write")->required();
    train->add_option("--lambda", tc.lambda, "Rate-distortion tradeoff");
    train->add_option("--steps", tc.steps, "Optimizer steps");
    train->add_option("--lr", tc.lr, "Learning rate");
    train->add_option("--lr-final", tc.lr_final, "Learning rate for the final steps");
    train->add_option("--decay-fraction", tc.decay_fraction, "Share of steps at the final learning rate");
    train->add_option("--warmup-epochs", tc.warmup_epochs, "Epochs with the prediction warmup term");
    train->add_option("--crop", tc.crop, "Square training crop (multiple of 64)");
    train->add_option("--frames-per-step", tc.frames_per_step, "P-frames coded per optimizer step");
    train->add_option("--seed", tc.seed, "Initialization and sampling seed");
    train->add_option("--distortion", distortion, "mse or msssim")->check(CLI::IsMember({"mse", "msssim"}));
    train->add_option("--log", train_log, "CSV training log");
    train->add_option("--report-every", report_every, "Print progress every N steps (0: never)");

    // encode
    auto* encode = app.add_subcommand("encode", "Encode a sequence into a container");
    std::string enc_ckpt, enc_out, enc_log;
    double enc_lambda = 0;
    SequenceArgs enc_seq;
    CodingArgs enc_c;
    encode->add_option("-c,--checkpoint", enc_ckpt, "Trained checkpoint")->required();
    encode->add_option("--lambda", enc_lambda, "Expected lambda of the checkpoint");
    encode->add_option("-i,--input", enc_seq.path, "Frame directory or raw RGB24 file")->required();
    add_sequence_options(encode, enc_seq);
    add_coding_options(encode, enc_c);
    encode->add_option("-o,--output", enc_out, "Container to write")->required();
    encode->add_option("--log", enc_log, "Per-frame CSV");

    // decode
    auto* decode = app.add_subcommand("decode", "Decode a container to PNG frames");
    std::string dec_ckpt, dec_in, dec_out;
    SequenceArgs verify;
    CodingArgs dec_c;
    decode->add_option("-c,--checkpoint", dec_ckpt, "Checkpoint the stream was made with")->required();
    decode->add_option("-i,--input", dec_in, "Container")->required();
    decode->add_option("-o,--output", dec_out, "Output directory")->required();
    decode->add_option("--gop-refs", dec_c.gop_refs, "Reference buffer size used by the encoder")->check(CLI::Range(1, 3));
    decode->add_option("--intra", dec_c.intra, "I-frame codec");
    decode->add_option("--verify", verify.path, "Source sequence: re-encode and compare (self-check)");
    decode->add_option("--width", verify.width, "Width of a raw --verify source");
    decode->add_option("--height", verify.height, "Height of a raw --verify source");

    // eval
    auto* evalc = app.add_subcommand("eval", "Evaluate checkpoints on sequences");
    std::vector<std::string> eval_ckpts, eval_inputs;
    std::string frame_csv, rd_csv, recon, stream;
    bool no_msssim = false;
    SequenceArgs eval_seq;
    CodingArgs eval_c;
    evalc->add_option("-c,--checkpoint", eval_ckpts, "Checkpoint(s), one RD point each");
    evalc->add_option("-i,--input", eval_inputs, "Sequence(s)")->required();
    add_sequence_options(evalc, eval_seq);
    add_coding_options(evalc, eval_c);
    evalc->add_option("--csv", frame_csv, "Per-frame CSV");
    evalc->add_option("--rd", rd_csv, "RD-curve CSV");
    evalc->add_flag("--no-msssim", no_msssim, "Skip MS-SSIM");
    evalc->add_option("--recon", recon, "Score already decoded frames in this directory");
    evalc->add_option("--stream", stream, "Container the --recon frames were decoded from");

    // bdrate
    auto* bd = app.add_subcommand("bdrate", "BD-rate of one RD-curve CSV against another");
    std::string bd_test, bd_anchor, bd_metric = "psnr";
    bd->add_option("test", bd_test, "Test RD CSV")->required();
    bd->add_option("anchor", bd_anchor, "Anchor RD CSV")->required();
    bd->add_option("--metric", bd_metric, "psnr, msssim or both")->check(CLI::IsMember({"psnr", "msssim", "both"}));

    auto* self = app.add_subcommand("selftest", "Run the built-in oracle checks");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train)
            return cmd_train(config_name, ablate, train_inputs, train_seq, synthetic, clip_len, out_ckpt, train_log, tc,
                             distortion, report_every);
        if (*encode) return cmd_encode(enc_ckpt, enc_lambda, enc_seq, enc_c, enc_out, enc_log);
        if (*decode) return cmd_decode(dec_ckpt, dec_in, dec_out, dec_c, verify);
        if (*evalc)
            return cmd_eval(eval_ckpts, eval_inputs, eval_seq, eval_c, frame_csv, rd_csv, !no_msssim, recon, stream);
        if (*bd) return cmd_bdrate(bd_test, bd_anchor, bd_metric);
        if (*self) return cmd_selftest();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
