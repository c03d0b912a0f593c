#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace sttvc {

enum class MaskNorm { softmax, sigmoid };

// Architecture hyperparameters. Everything here (plus lambda) enters the
// configuration hash shared by checkpoints and containers.
struct ModelConfig {
    int channels = 64;
    int stem_kernel = 5;
    int resblocks = 3;
    int heads = 8;
    int window = 8;
    int uformer_dim = 64;
    int uformer_depth = 2;
    int mlp_ratio = 2;
    int motion_channels = 64;
    int motion_latent_channels = 64;
    int mixture_components = 3;
    std::vector<int> sfd_encoder_depths{2, 2, 6, 2};
    std::vector<int> sfd_decoder_depths{2, 6, 2, 2};
    int residual_latent_channels = 64;
    int hyper_channels = 64;
    int nonlocal_downsample = 4;
    MaskNorm mask_norm = MaskNorm::softmax;
    bool use_rdt = true;
    bool use_mgp = true;
    bool use_sfd_prior = true;

    int groups() const { return heads; }
    // Width of the transformer stages of the residual coder at level l.
    int sfd_dim(int level) const { return channels << level; }

    // The small configuration used by tests and desk-scale training.
    static ModelConfig toy();
    void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Lambda values of the four trained operating points; index is the
// container's lambda_id.
inline const std::vector<double>& standard_lambdas()
{
    static const std::vector<double> l{256, 512, 1024, 2048};
    return l;
}
// 255 when lambda is not one of the standard values.
std::uint8_t lambda_id(double lambda);

std::uint64_t config_hash(const ModelConfig& c, double lambda);

}  // namespace sttvc
