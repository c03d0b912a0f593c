#include "sttvc/config.hpp"

#include <stdexcept>

#include "sttvc/nn.hpp"

namespace sttvc {

ModelConfig ModelConfig::toy()
{
    ModelConfig c;
    c.channels = 32;
    c.uformer_dim = 16;
    c.uformer_depth = 1;
    c.motion_channels = 32;
    c.motion_latent_channels = 32;
    c.residual_latent_channels = 32;
    c.hyper_channels = 16;
    return c;
}

void ModelConfig::validate() const
{
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("invalid model config: ") + what);
    };
    need(channels > 0 && resblocks >= 0 && stem_kernel % 2 == 1, "channels/stem");
    need(heads > 0 && channels % heads == 0, "channels must divide into heads");
    need(uformer_dim % heads == 0, "uformer_dim must divide into heads");
    need(window > 0 && uformer_depth > 0 && mlp_ratio > 0, "window/depth/mlp_ratio");
    need(motion_channels > 0 && motion_latent_channels > 0 && mixture_components > 0, "motion codec sizes");
    need(sfd_encoder_depths.size() == 4 && sfd_decoder_depths.size() == 4, "residual coder has four levels");
    need(residual_latent_channels > 0 && hyper_channels > 0, "latent sizes");
    need(nonlocal_downsample > 0, "nonlocal_downsample");
}

nlohmann::json to_json(const ModelConfig& c)
{
    return nlohmann::json{{"channels", c.channels},
                          {"stem_kernel", c.stem_kernel},
                          {"resblocks", c.resblocks},
                          {"heads", c.heads},
                          {"window", c.window},
                          {"uformer_dim", c.uformer_dim},
                          {"uformer_depth", c.uformer_depth},
                          {"mlp_ratio", c.mlp_ratio},
                          {"motion_channels", c.motion_channels},
                          {"motion_latent_channels", c.motion_latent_channels},
                          {"mixture_components", c.mixture_components},
                          {"sfd_encoder_depths", c.sfd_encoder_depths},
                          {"sfd_decoder_depths", c.sfd_decoder_depths},
                          {"residual_latent_channels", c.residual_latent_channels},
                          {"hyper_channels", c.hyper_channels},
                          {"nonlocal_downsample", c.nonlocal_downsample},
                          {"mask_norm", c.mask_norm == MaskNorm::softmax ? "softmax" : "sigmoid"},
                          {"use_rdt", c.use_rdt},
                          {"use_mgp", c.use_mgp},
                          {"use_sfd_prior", c.use_sfd_prior}};
}

ModelConfig model_config_from_json(const nlohmann::json& j)
{
    ModelConfig c;
    c.channels = j.at("channels");
    c.stem_kernel = j.at("stem_kernel");
    c.resblocks = j.at("resblocks");
    c.heads = j.at("heads");
    c.window = j.at("window");
    c.uformer_dim = j.at("uformer_dim");
    c.uformer_depth = j.at("uformer_depth");
    c.mlp_ratio = j.at("mlp_ratio");
    c.motion_channels = j.at("motion_channels");
    c.motion_latent_channels = j.at("motion_latent_channels");
    c.mixture_components = j.at("mixture_components");
    c.sfd_encoder_depths = j.at("sfd_encoder_depths").get<std::vector<int>>();
    c.sfd_decoder_depths = j.at("sfd_decoder_depths").get<std::vector<int>>();
    c.residual_latent_channels = j.at("residual_latent_channels");
    c.hyper_channels = j.at("hyper_channels");
    c.nonlocal_downsample = j.at("nonlocal_downsample");
    const std::string mask = j.at("mask_norm");
    if (mask != "softmax" && mask != "sigmoid") throw std::invalid_argument("unknown mask_norm: " + mask);
    c.mask_norm = mask == "softmax" ? MaskNorm::softmax : MaskNorm::sigmoid;
    c.use_rdt = j.at("use_rdt");
    c.use_mgp = j.at("use_mgp");
    c.use_sfd_prior = j.at("use_sfd_prior");
    c.validate();
    return c;
}

std::uint8_t lambda_id(double lambda)
{
    const auto& l = standard_lambdas();
    for (std::size_t i = 0; i < l.size(); ++i)
        if (l[i] == lambda) return static_cast<std::uint8_t>(i);
    return 255;
}

std::uint64_t config_hash(const ModelConfig& c, double lambda)
{
    const std::string text = to_json(c).dump();
    std::uint64_t h = nn::fnv1a(text);
    return nn::fnv1a(&lambda, sizeof lambda, h);
}

}  // namespace sttvc
