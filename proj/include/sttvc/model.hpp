#pragma once

#include <array>
#include <random>
#include <vector>

#include "sttvc/config.hpp"
#include "sttvc/entropy.hpp"
#include "sttvc/frame_transform.hpp"
#include "sttvc/mgp.hpp"
#include "sttvc/rdt_motion.hpp"
#include "sttvc/sfd.hpp"

namespace sttvc {

struct Prediction {
    MotionField motion;
    Var coarse;
    std::array<Var, 3> fine;  // undefined when MGP is disabled
    Var mpre;
};

struct PFrameOutput {
    Prediction pred;
    Var feature;         // F_t
    Var residual;        // F_t - F_mpre
    Var residual_hat;    // decoded residual feature
    Var recon;           // clamped reconstruction, 3 x H x W
    Var motion_latent;   // quantized (eval) or noisy (train) latents
    Var residual_latent;
    Var hyper_latent;
    Var mu, sigma;       // residual entropy parameters
    // Continuous-model bit estimates (differentiable in train mode).
    Var bits_motion, bits_residual, bits_hyper;
};

// The complete P-frame model. Frames are 3 x H x W with H, W multiples of 64;
// features are C x H/2 x W/2. Reference lists are newest first.
class CodecModel {
public:
    CodecModel(const ModelConfig& cfg, std::uint64_t seed);
    CodecModel(const CodecModel&) = delete;
    CodecModel& operator=(const CodecModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    Var extract(const Var& frame) const { return extractor(frame); }

    // Decoder-side paths shared by encoder and decoder.
    Prediction predict_from_motion(const Var& motion_latent_hat, const std::vector<Var>& refs) const;
    Var reconstruct_from_residual(const Var& residual_latent_hat, const Var& mpre, const std::vector<Var>& refs,
                                  const PriorTokens* prior = nullptr) const;
    // Residual entropy parameters from the decoded hyper latent.
    std::pair<Var, Var> residual_entropy(const Var& hyper_latent_hat, int height, int width) const;
    // What the decoder would show with a zero residual.
    Var prediction_frame(const Var& mpre, const std::vector<Var>& refs) const;
    // Training-only projection of F_mpre to pixels for the warmup term.
    Var mpre_frame(const Var& mpre) const;

    // Codes one P-frame. Eval mode quantizes by rounding; train mode adds
    // uniform noise drawn from rng.
    PFrameOutput code_p_frame(const Var& frame, const std::vector<Var>& refs, entropy::Mode mode,
                              std::mt19937_64& rng) const;

    struct LatentShapes {
        Shape motion, residual, hyper;
    };
    // Latent shapes for a padded height x width frame.
    LatentShapes latent_shapes(int height, int width) const;

    // Freezes the factorized models into coding tables.
    void update_tables();

    FeatureExtractor extractor;
    FrameReconstructor reconstructor;
    NonLocalEnhancer enhancer;
    MotionEstimator estimator;
    MotionCodec motion;
    DeformCompensator compensator;
    ReferenceAligner aligner;
    PredictionFusion fusion;
    SfdCoder sfd;
    Hyperprior hyper;
    nn::Conv2d mpre_head;

private:
    ModelConfig cfg_;
    nn::ParamStore params_;
};

}  // namespace sttvc
