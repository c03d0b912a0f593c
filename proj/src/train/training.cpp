#include "sttvc/training.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "sttvc/bitstream.hpp"
#include "sttvc/image_io.hpp"
#include "sttvc/metrics.hpp"
#include "sttvc/ops.hpp"

namespace sttvc::training {

namespace {

Tensor window(const Tensor& frame, int y0, int x0, int h, int w)
{
    Tensor f({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) f.at(c, y, x) = frame.at(c, y0 + y, x0 + x);
    return f;
}

double scalar(const Var& v) { return v.value()[0]; }

}  // namespace

void TrainConfig::validate() const
{
    if (!(lambda > 0.0)) throw std::invalid_argument("train: lambda must be positive");
    if (steps < 0) throw std::invalid_argument("train: negative step count");
    if (crop <= 0 || crop % 64) throw std::invalid_argument("train: crop must be a positive multiple of 64");
    if (frames_per_step < 1) throw std::invalid_argument("train: frames_per_step must be >= 1");
    if (!(lr > 0.0) || !(lr_final > 0.0)) throw std::invalid_argument("train: learning rates must be positive");
    if (decay_fraction < 0.0 || decay_fraction > 1.0) throw std::invalid_argument("train: decay_fraction in [0, 1]");
    if (warmup_epochs < 0) throw std::invalid_argument("train: negative warmup");
}

Var rd_loss(const Var& bpp_mv, const Var& bpp_resi, const Var& d, double lambda)
{
    return ops::add(ops::add(bpp_mv, bpp_resi), ops::scale(d, lambda));
}

Var warmup_loss(const Var& rd, const Var& warmup_distortion, double lambda)
{
    return ops::add(rd, ops::scale(warmup_distortion, lambda));
}

Var distortion(const Var& x_hat, const Var& x, Distortion kind)
{
    if (kind == Distortion::mse) return ops::mse(x_hat, x);
    return ops::add_scalar(ops::scale(metrics::ms_ssim(x_hat, x), -1.0), 1.0);
}

Trainer::Trainer(CodecModel& model, std::vector<Clip> clips, TrainConfig cfg)
    : model_(model), clips_(std::move(clips)), cfg_(cfg), adam_(model.params()), rng_(cfg.seed)
{
    cfg_.validate();
    if (clips_.empty()) throw std::invalid_argument("train: no clips");
    for (const auto& c : clips_) {
        if (c.size() < 2) throw std::invalid_argument("train: clips need at least two frames");
        for (const auto& f : c)
            if (f.shape() != c[0].shape()) throw std::invalid_argument("train: frame sizes differ within a clip");
        if (std::min(c[0].dim(1), c[0].dim(2)) < 64) throw std::invalid_argument("train: clips must be at least 64x64");
    }
    start_clip();
}

long Trainer::steps_per_epoch() const
{
    long frames = 0;
    for (const auto& c : clips_) frames += static_cast<long>(c.size()) - 1;
    return (frames + cfg_.frames_per_step - 1) / cfg_.frames_per_step;
}

long Trainer::warmup_steps() const { return cfg_.warmup_epochs * steps_per_epoch(); }

double Trainer::lr_at(long step) const
{
    const long decay_from = cfg_.steps - static_cast<long>(std::lround(cfg_.decay_fraction * cfg_.steps));
    return step > decay_from ? cfg_.lr_final : cfg_.lr;
}

std::string Trainer::rng_state() const
{
    std::ostringstream os;
    os << rng_;
    return os.str();
}

void Trainer::start_clip()
{
    const Clip& c = clips_[clip_];
    const int h = c[0].dim(1), w = c[0].dim(2);
    // Largest multiple-of-64 window no bigger than the crop size.
    crop_h_ = std::min(cfg_.crop, h / 64 * 64);
    crop_w_ = std::min(cfg_.crop, w / 64 * 64);
    crop_y_ = static_cast<int>(std::uniform_int_distribution<int>(0, h - crop_h_)(rng_));
    crop_x_ = static_cast<int>(std::uniform_int_distribution<int>(0, w - crop_w_)(rng_));
    pos_ = 1;
    NoGradGuard g;
    buffer_ = {model_.extract(Var(window(c[0], crop_y_, crop_x_, crop_h_, crop_w_))).detach()};
}

StepStats Trainer::step()
{
    ++step_;
    StepStats s;
    s.step = step_;
    s.lr = lr_at(step_);
    s.warmup = step_ <= warmup_steps();
    model_.params().zero_grad();

    const double pixels = static_cast<double>(crop_h_) * crop_w_;
    std::vector<Var> losses;
    for (int k = 0; k < cfg_.frames_per_step; ++k) {
        if (pos_ >= static_cast<int>(clips_[clip_].size())) {
            clip_ = (clip_ + 1) % clips_.size();
            start_clip();
        }
        const Var x(window(clips_[clip_][static_cast<std::size_t>(pos_)], crop_y_, crop_x_, crop_h_, crop_w_));
        const PFrameOutput out = model_.code_p_frame(x, buffer_, entropy::Mode::train, rng_);
        const Var bpp_mv = ops::scale(out.bits_motion, 1.0 / pixels);
        const Var bpp_resi = ops::scale(ops::add(out.bits_residual, out.bits_hyper), 1.0 / pixels);
        const Var d = distortion(out.recon, x, cfg_.distortion);
        Var loss = rd_loss(bpp_mv, bpp_resi, d, cfg_.lambda);
        if (s.warmup) {
            const Var dw = distortion(model_.mpre_frame(out.pred.mpre), x, cfg_.distortion);
            loss = warmup_loss(loss, dw, cfg_.lambda);
            s.warmup_distortion += scalar(dw) / cfg_.frames_per_step;
        }
        s.bpp_mv += scalar(bpp_mv) / cfg_.frames_per_step;
        s.bpp_resi += scalar(bpp_resi) / cfg_.frames_per_step;
        s.distortion += scalar(d) / cfg_.frames_per_step;
        losses.push_back(loss);

        {
            NoGradGuard g;
            buffer_.insert(buffer_.begin(), model_.extract(Var(io::quantize_8bit(out.recon.value()))).detach());
            if (buffer_.size() > 3) buffer_.pop_back();
        }
        ++pos_;
    }
    const Var loss = ops::scale(ops::sum_of(losses), 1.0 / cfg_.frames_per_step);
    s.loss = scalar(loss);
    if (!std::isfinite(s.loss)) {
        std::ostringstream os;
        os << "non-finite loss at step " << step_ << " (bpp_mv=" << s.bpp_mv << ", bpp_resi=" << s.bpp_resi
           << ", distortion=" << s.distortion << ", clip=" << clip_ << ", frame=" << pos_ - 1 << ")";
        throw TrainingError(os.str());
    }
    backward(loss);
    s.grad_norm = optim::clip_grad_norm(model_.params(), cfg_.clip_norm);
    if (!std::isfinite(s.grad_norm))
        throw TrainingError("non-finite gradient norm at step " + std::to_string(step_));
    adam_.step(s.lr);
    return s;
}

void Trainer::write_csv_header(std::ostream& out) { out << "step,bpp_mv,bpp_resi,distortion,loss\n"; }

void Trainer::write_csv_row(std::ostream& out, const StepStats& s)
{
    out << s.step << ',' << s.bpp_mv << ',' << s.bpp_resi << ',' << s.distortion << ',' << s.loss << '\n';
}

void Trainer::run(std::ostream* csv, const std::function<void(const StepStats&)>& on_step)
{
    if (csv && step_ == 0) write_csv_header(*csv);
    while (step_ < cfg_.steps) {
        const StepStats s = step();
        if (csv) write_csv_row(*csv, s);
        if (on_step) on_step(s);
    }
}

ClipEval evaluate_clip(const CodecModel& model, const Clip& clip)
{
    if (clip.size() < 2) throw std::invalid_argument("evaluate_clip: need at least two frames");
    NoGradGuard g;
    const int h = clip[0].dim(1), w = clip[0].dim(2);
    const double pixels = static_cast<double>(h) * w;
    std::mt19937_64 unused(0);
    ClipEval e;
    std::vector<Var> buffer{reference_feature(model, io::quantize_8bit(clip[0]))};
    for (std::size_t t = 1; t < clip.size(); ++t) {
        const PFrameOutput out =
            model.code_p_frame(Var(io::pad_replicate(clip[t], kPadMultiple)), buffer, entropy::Mode::eval, unused);
        const PFramePayload p = encode_p_payload(model, out);
        const Tensor decoded = finalize_frame(out.recon.value(), h, w);
        const Tensor pred = finalize_frame(model.prediction_frame(out.pred.mpre, buffer).value(), h, w);
        e.bpp_mv += 8.0 * p.motion.size() / pixels;
        e.bpp_resi += 8.0 * (p.residual.size() + p.hyper.size()) / pixels;
        const double m = metrics::mse(decoded, clip[t]);
        e.mse += m;
        e.psnr += metrics::psnr_from_mse(m);
        e.pred_psnr += metrics::psnr(pred, clip[t]);
        double ra = 0.0, fa = 0.0;
        for (std::int64_t i = 0; i < out.residual.numel(); ++i) {
            ra += std::abs(out.residual.value()[i]);
            fa += std::abs(out.feature.value()[i]);
        }
        e.feature_resi_abs += ra / out.residual.numel();
        e.feature_abs += fa / out.feature.numel();
        buffer.insert(buffer.begin(), reference_feature(model, decoded));
        if (buffer.size() > 3) buffer.pop_back();
        ++e.p_frames;
    }
    const double n = e.p_frames;
    e.bpp_mv /= n;
    e.bpp_resi /= n;
    e.mse /= n;
    e.psnr /= n;
    e.pred_psnr /= n;
    e.feature_resi_abs /= n;
    e.feature_abs /= n;
    return e;
}

}  // namespace sttvc::training
