#pragma once

#include <functional>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sttvc/model.hpp"
#include "sttvc/optim.hpp"

namespace sttvc::training {

enum class Distortion { mse, ms_ssim };

struct TrainConfig {
    double lambda = 256.0;
    int steps = 2000;
    double lr = 1e-4;
    double lr_final = 1e-5;
    double decay_fraction = 0.2;  // trailing share of steps run at lr_final
    int warmup_epochs = 15;
    int frames_per_step = 1;      // consecutive P-frames coded per update
    int crop = 256;               // square crop, multiple of 64; larger than the clip means the full clip
    double clip_norm = 1.0;
    std::uint64_t seed = 0;
    Distortion distortion = Distortion::mse;

    void validate() const;
};

using Clip = std::vector<Tensor>;

struct LossTerms {
    Var bpp_mv, bpp_resi, distortion, loss;
};

// L = bpp_mv + bpp_resi + lambda * d.
Var rd_loss(const Var& bpp_mv, const Var& bpp_resi, const Var& distortion, double lambda);
// Adds lambda * d(x_mpre, x) during warmup.
Var warmup_loss(const Var& rd, const Var& warmup_distortion, double lambda);
Var distortion(const Var& x_hat, const Var& x, Distortion kind);

struct StepStats {
    long step = 0;  // 1-based
    double bpp_mv = 0.0, bpp_resi = 0.0, distortion = 0.0, loss = 0.0;
    double warmup_distortion = 0.0;
    bool warmup = false;
    double lr = 0.0;
    double grad_norm = 0.0;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Sequential clip passes: the first frame of every clip contributes its
// ground-truth feature as the reference, later frames are coded in order
// with decoded (detached) features pushed to a three-entry buffer.
class Trainer {
public:
    Trainer(CodecModel& model, std::vector<Clip> clips, TrainConfig cfg);

    StepStats step();
    // Runs the remaining steps. The CSV receives step,bpp_mv,bpp_resi,distortion,loss.
    void run(std::ostream* csv = nullptr, const std::function<void(const StepStats&)>& on_step = {});

    long steps_done() const { return step_; }
    long steps_per_epoch() const;
    long warmup_steps() const;
    double lr_at(long step) const;  // 1-based
    std::string rng_state() const;
    const TrainConfig& config() const { return cfg_; }

    static void write_csv_header(std::ostream& out);
    static void write_csv_row(std::ostream& out, const StepStats& s);

private:
    void start_clip();

    CodecModel& model_;
    std::vector<Clip> clips_;
    TrainConfig cfg_;
    optim::Adam adam_;
    std::mt19937_64 rng_;
    long step_ = 0;
    std::size_t clip_ = 0;
    int pos_ = 0;  // next frame of the current clip to code
    int crop_y_ = 0, crop_x_ = 0, crop_h_ = 0, crop_w_ = 0;
    std::vector<Var> buffer_;
};

// Eval-mode statistics of coding every P-frame of a clip after an exact
// first frame, with real range-coded sizes.
struct ClipEval {
    int p_frames = 0;
    double bpp_mv = 0.0;     // motion bytes per pixel * 8, mean over P-frames
    double bpp_resi = 0.0;   // residual + hyper
    double mse = 0.0;        // of the decoded 8-bit frames
    double psnr = 0.0;       // mean per-frame PSNR
    double pred_psnr = 0.0;  // prediction-only decoding, mean per-frame PSNR
    double feature_resi_abs = 0.0;  // mean |F_t - F_mpre|
    double feature_abs = 0.0;       // mean |F_t|

    double bpp() const { return bpp_mv + bpp_resi; }
    double rd_loss(double lambda) const { return bpp() + lambda * mse; }
};
// Requires frozen entropy tables.
ClipEval evaluate_clip(const CodecModel& model, const Clip& clip);

}  // namespace sttvc::training
