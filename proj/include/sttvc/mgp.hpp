#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <vector>

#include "sttvc/config.hpp"
#include "sttvc/rdt_motion.hpp"

namespace sttvc {

// Newest-first decoded reference features padded to three entries: missing
// older slots repeat the oldest available entry, so [A] -> (A, A, A) and
// [A, B] -> (A, B, B).
template <typename T>
std::array<T, 3> pad_newest_first(const std::vector<T>& newest_first)
{
    if (newest_first.empty()) throw std::invalid_argument("pad_references: empty reference buffer");
    std::array<T, 3> out;
    for (std::size_t i = 0; i < 3; ++i) out[i] = newest_first[std::min(i, newest_first.size() - 1)];
    return out;
}
inline std::array<Var, 3> pad_references(const std::vector<Var>& newest_first) { return pad_newest_first(newest_first); }

// Bit-free alignment of a reference to the coarse prediction: the motion
// estimator architecture (own parameters), a 1x1 offset/mask head on F_o and
// deformable compensation, with no quantization or coding in between.
class ReferenceAligner {
public:
    ReferenceAligner() = default;
    ReferenceAligner(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg);
    Var operator()(const Var& coarse, const Var& ref) const;

    MotionEstimator estimator;
    MotionHead head;
    DeformCompensator compensator;
};

// Channel + spatial attention fusion of <coarse, fine1, fine2, fine3>:
//   F_ch   = CA(F_cat) * F_cat
//   F_conv = relu(conv1x1(F_ch))          (4C -> C)
//   F_sp   = SA(F_conv) * F_conv
//   F_mpre = coarse + F_sp
class PredictionFusion {
public:
    PredictionFusion() = default;
    PredictionFusion(nn::ParamStore& ps, const std::string& name, int channels);

    struct Trace {
        Var channel_attention;  // [4C]
        Var spatial_attention;  // 1 x H x W
        Var fused;
    };
    Var operator()(const Var& coarse, const std::array<Var, 3>& fine, Trace* trace = nullptr) const;

    nn::Linear mlp1, mlp2;
    nn::Conv2d reduce, spatial;
};

Var compute_residual(const Var& cur, const Var& pred);
Var add_prediction(const Var& resi_hat, const Var& pred);

}  // namespace sttvc
