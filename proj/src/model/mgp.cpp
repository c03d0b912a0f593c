#include "sttvc/mgp.hpp"

#include <algorithm>
#include <stdexcept>

namespace sttvc {

ReferenceAligner::ReferenceAligner(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg)
    : estimator(ps, name + ".estimator", cfg),
      head(ps, name + ".head", cfg.motion_channels, cfg),
      compensator(ps, name + ".deform", cfg)
{
}

Var ReferenceAligner::operator()(const Var& coarse, const Var& ref) const
{
    if (coarse.shape() != ref.shape()) throw ShapeError("align_to_coarse: feature shapes differ");
    return compensator(ref, head(estimator(coarse, ref)));
}

PredictionFusion::PredictionFusion(nn::ParamStore& ps, const std::string& name, int channels)
{
    const int cat = 4 * channels;
    const int hidden = std::max(1, cat / 16);
    mlp1 = nn::linear(ps, name + ".ca.fc1", cat, hidden);
    mlp2 = nn::linear(ps, name + ".ca.fc2", hidden, cat);
    reduce = nn::conv(ps, name + ".reduce", cat, channels, 1);
    // The fused branch starts small so F_mpre starts near F_cpre; a zero
    // start would leave the ReLU without gradient.
    for (const Var& v : {reduce.weight, reduce.bias}) {
        Var p = v;
        for (double& x : p.mutable_value().storage()) x *= 0.1;
    }
    spatial = nn::conv(ps, name + ".sa", 2, 1, 7);
}

Var PredictionFusion::operator()(const Var& coarse, const std::array<Var, 3>& fine, Trace* trace) const
{
    for (const Var& f : fine)
        if (f.shape() != coarse.shape()) throw ShapeError("fuse_predictions: feature shapes differ");
    const Var cat = ops::concat_channels({coarse, fine[0], fine[1], fine[2]});
    const int c4 = cat.dim(0);
    auto mlp = [&](const Var& pooled) {
        return mlp2(ops::relu(mlp1(ops::reshape(pooled, {1, c4}))));
    };
    const Var ca = ops::reshape(
        ops::sigmoid(ops::add(mlp(ops::global_avg_pool(cat)), mlp(ops::global_max_pool(cat)))), {c4});
    const Var f_ch = ops::mul_channels(cat, ca);
    const Var f_conv = ops::relu(reduce(f_ch));
    const Var sa = ops::sigmoid(spatial(ops::concat_channels({ops::channel_mean(f_conv), ops::channel_max(f_conv)})));
    const Var f_sp = ops::mul_spatial(f_conv, sa);
    if (trace) {
        trace->channel_attention = ca;
        trace->spatial_attention = sa;
        trace->fused = f_sp;
    }
    return ops::add(coarse, f_sp);
}

Var compute_residual(const Var& cur, const Var& pred) { return ops::sub(cur, pred); }
Var add_prediction(const Var& resi_hat, const Var& pred) { return ops::add(resi_hat, pred); }

}  // namespace sttvc
