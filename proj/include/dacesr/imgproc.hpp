#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dacesr/image.hpp"
#include "dacesr/rng.hpp"

namespace dacesr::imgproc {

enum class ResizeMethod { bicubic, bilinear, nearest };

ResizeMethod resize_method_from_string(const std::string& s);
std::string to_string(ResizeMethod m);

struct BlurStep {
    double sigma;  // > 0
};
struct GaussianNoiseStep {
    double sigma255;  // >= 0, sigma in 0-255 units
};
struct JpegStep {
    int quality;  // 1..100
};
struct ResizeStep {
    double scale;  // > 0
    ResizeMethod method = ResizeMethod::bicubic;
};

using DegradationStep =
    std::variant<BlurStep, GaussianNoiseStep, JpegStep, ResizeStep>;

/// Ordered, seeded degradation chain. Same spec + same input is bit-identical.
struct DegradationSpec {
    std::vector<DegradationStep> steps;
    uint64_t seed = 0;

    std::string to_json() const;
    static DegradationSpec from_json(const std::string& text);

    /// Product of all resize scales in the chain (1.0 when none).
    double total_scale() const;
};

/// Normalized 2-D isotropic Gaussian kernel; size must be odd and >= 3.
std::vector<double> gaussian_kernel(double sigma, int size);

/// 2-D convolution with replicate padding. Kernel is size×size, row-major.
ImageTensor apply_blur(const ImageTensor& img, const std::vector<double>& kernel,
                       int size);

/// Kernel size conventionally used for a given blur sigma (odd, >= 3).
int blur_kernel_size(double sigma);

/// Adds N(0, (sigma255/255)^2) noise, clamps to [0,1].
ImageTensor add_gaussian_noise(const ImageTensor& img, double sigma255, Rng& rng);

/// Deterministic DCT-quantization JPEG surrogate: RGB→YCbCr, 8×8 DCT per
/// channel (no chroma subsampling), standard tables scaled by quality,
/// inverse transform, clamp. No entropy coding.
ImageTensor jpeg_degrade(const ImageTensor& img, int quality);

/// Resampling with center-aligned coordinates. Bicubic is the a=-0.5 cubic,
/// antialiased (kernel widened by 1/scale) when downscaling.
ImageTensor resize(const ImageTensor& img, double scale, ResizeMethod method);
ImageTensor resize_to(const ImageTensor& img, int out_h, int out_w,
                      ResizeMethod method);

/// Applies the chain in order. Step i draws from sub-stream fork(seed, i).
ImageTensor apply_chain(const ImageTensor& img, const DegradationSpec& spec);

/// Second-order Real-ESRGAN-style chain: two rounds of
/// blur → resize → noise → jpeg, total spatial scale fixed at 1/4.
DegradationSpec sample_degradation(Rng& rng);

}  // namespace dacesr::imgproc
