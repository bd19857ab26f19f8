#pragma once

// Image quality metrics: PSNR and mean SSIM.

#include "msfs/image.hpp"

namespace msfs {

// 10 * log10(peak^2 / MSE); returns +infinity when the images are equal.
double psnr(const Image& a, const Image& b, double peak = 1.0);

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5, K1 = 0.01,
// K2 = 0.03) on the grayscale images, dynamic range 1. Images must be at
// least 11x11.
double ssim(const Image& a, const Image& b);

}  // namespace msfs
