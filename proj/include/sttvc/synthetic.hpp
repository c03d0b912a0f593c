#pragma once

#include <cstdint>
#include <vector>

#include "sttvc/tensor.hpp"

namespace sttvc {

// Deterministic test video: a smooth multi-frequency background under a
// sub-pixel camera pan with a few antialiased objects moving on top.
std::vector<Tensor> synthetic_clip(int frames, int height, int width, std::uint64_t seed);

}  // namespace sttvc
