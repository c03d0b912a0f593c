#pragma once

#include <string>
#include <vector>

#include "sttvc/autograd.hpp"

namespace sttvc::metrics {

constexpr double kPsnrCap = 100.0;

double mse(const Tensor& a, const Tensor& b);
// 10 log10(1 / MSE) for [0, 1] frames, capped at kPsnrCap.
double psnr(const Tensor& a, const Tensor& b);
double psnr_from_mse(double mse);

// Five-scale MS-SSIM with an 11-tap Gaussian window (sigma 1.5), data range 1,
// K = (0.01, 0.03) and weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333).
// Follows the widely used pytorch_msssim conventions: valid filtering that is
// skipped along any axis shorter than the window, relu on the contrast terms,
// odd sizes zero-padded before 2x downsampling, mean over channels. Frames
// smaller than that package accepts are still evaluated under these rules.
Var ms_ssim(const Var& a, const Var& b);
double ms_ssim(const Tensor& a, const Tensor& b);

// Single-scale SSIM under the same conventions.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace sttvc::metrics
