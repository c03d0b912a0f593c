#include "sttvc/model.hpp"

#include <stdexcept>

namespace sttvc {

CodecModel::CodecModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), params_(seed)
{
    cfg_.validate();
    auto& ps = params_;
    extractor = FeatureExtractor(ps, "extract", cfg_);
    reconstructor = FrameReconstructor(ps, "reconstruct", cfg_);
    enhancer = NonLocalEnhancer(ps, "enhance", cfg_.channels, cfg_.nonlocal_downsample);
    estimator = MotionEstimator(ps, "motion.estimator", cfg_);
    motion = MotionCodec(ps, "motion.codec", cfg_);
    compensator = DeformCompensator(ps, "motion.deform", cfg_);
    if (cfg_.use_mgp) {
        aligner = ReferenceAligner(ps, "mgp.align", cfg_);
        fusion = PredictionFusion(ps, "mgp.fusion", cfg_.channels);
    }
    sfd = SfdCoder(ps, "sfd", cfg_);
    hyper = Hyperprior(ps, "hyper", cfg_);
    mpre_head = nn::conv(ps, "train.mpre_head", cfg_.channels, 12, 3);
}

Prediction CodecModel::predict_from_motion(const Var& motion_latent_hat, const std::vector<Var>& refs) const
{
    const std::array<Var, 3> padded = pad_references(refs);
    Prediction p;
    p.motion = motion.synthesis(motion_latent_hat);
    p.coarse = compensator(padded[0], p.motion);
    if (!cfg_.use_mgp) {
        p.mpre = p.coarse;
        return p;
    }
    for (int i = 0; i < 3; ++i) p.fine[i] = aligner(p.coarse, padded[i]);
    p.mpre = fusion(p.coarse, p.fine);
    return p;
}

std::pair<Var, Var> CodecModel::residual_entropy(const Var& hyper_latent_hat, int height, int width) const
{
    return hyper.synthesis(hyper_latent_hat, height, width);
}

Var CodecModel::reconstruct_from_residual(const Var& residual_latent_hat, const Var& mpre,
                                          const std::vector<Var>& refs, const PriorTokens* prior) const
{
    const PriorTokens local = prior ? PriorTokens{} : sfd.derive_prior(mpre);
    const Var resi_hat = sfd.decode(residual_latent_hat, prior ? *prior : local);
    const std::array<Var, 3> padded = pad_references(refs);
    const Var f_hat = enhancer(add_prediction(resi_hat, mpre), {padded.begin(), padded.end()});
    return clamp_frame(reconstructor(f_hat));
}

Var CodecModel::prediction_frame(const Var& mpre, const std::vector<Var>& refs) const
{
    const std::array<Var, 3> padded = pad_references(refs);
    return clamp_frame(reconstructor(enhancer(mpre, {padded.begin(), padded.end()})));
}

Var CodecModel::mpre_frame(const Var& mpre) const { return ops::pixel_shuffle(mpre_head(mpre), 2); }

PFrameOutput CodecModel::code_p_frame(const Var& frame, const std::vector<Var>& refs, entropy::Mode mode,
                                      std::mt19937_64& rng) const
{
    if (frame.dim(1) % 64 || frame.dim(2) % 64) throw ShapeError("code_p_frame: frame must be padded to 64");
    PFrameOutput out;
    out.feature = extract(frame);
    if (refs.empty()) throw std::invalid_argument("code_p_frame: no reference feature");
    const Var f_o = estimator(out.feature, refs[0]);
    out.motion_latent = entropy::quantize(motion.analysis(f_o), mode, rng);
    out.pred = predict_from_motion(out.motion_latent, refs);

    out.residual = compute_residual(out.feature, out.pred.mpre);
    const PriorTokens prior = sfd.derive_prior(out.pred.mpre);
    const Var y = sfd.encode(out.residual, prior);
    out.hyper_latent = entropy::quantize(hyper.analysis(y), mode, rng);
    std::tie(out.mu, out.sigma) = residual_entropy(out.hyper_latent, y.dim(1), y.dim(2));
    out.residual_latent = entropy::quantize(y, mode, rng);

    out.bits_motion = motion.prior.bits(out.motion_latent);
    out.bits_hyper = hyper.prior.bits(out.hyper_latent);
    out.bits_residual = entropy::likelihood_bits(entropy::gaussian_likelihood(out.residual_latent, out.mu, out.sigma));

    out.residual_hat = sfd.decode(out.residual_latent, prior);
    out.recon = reconstruct_from_residual(out.residual_latent, out.pred.mpre, refs, &prior);
    return out;
}

CodecModel::LatentShapes CodecModel::latent_shapes(int height, int width) const
{
    if (height % 64 || width % 64) throw ShapeError("latent_shapes: frame must be padded to 64");
    auto half = [](int n) { return (n + 1) / 2; };
    return {{cfg_.motion_latent_channels, height / 8, width / 8},
            {cfg_.residual_latent_channels, height / 32, width / 32},
            {cfg_.hyper_channels, half(half(height / 32)), half(half(width / 32))}};
}

void CodecModel::update_tables()
{
    motion.prior.update_tables();
    hyper.prior.update_tables();
}

}  // namespace sttvc
