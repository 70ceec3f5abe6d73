#pragma once

#include <map>
#include <string>
#include <vector>

#include "dacesr/image.hpp"
#include "dacesr/imgproc.hpp"
#include "dacesr/ree.hpp"
#include "dacesr/srnet.hpp"
#include "dacesr/tagging.hpp"

namespace dacesr::evalkit {

/// ITU-R BT.601 studio-swing luminance: Y = (65.481R + 128.553G + 24.966B + 16)/255.
ImageTensor rgb_to_y(const ImageTensor& img);

/// PSNR in dB on the Y channel with a 4-pixel border crop per side;
/// identical images return +infinity.
double psnr_y(const ImageTensor& sr, const ImageTensor& hr);

struct EvalRow {
    std::string name;
    double psnr_y_mean = 0.0;
    double proxy_mean = 0.0;
    int n_images = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::string to_json() const;
    std::string to_csv() const;
    static EvalReport from_json(const std::string& text);
};

/// Named degradation levels (e.g. Level-I/II/III), each a frozen spec list.
using Levels = std::vector<std::pair<std::string, std::vector<imgproc::DegradationSpec>>>;

/// Builds Levels from a severity report: class1 → Level-I,
/// class2 ∪ class3 → Level-II, class4 → Level-III.
Levels levels_from_report(const std::vector<imgproc::DegradationSpec>& specs,
                          const tagging::SimilarityReport& report);

struct BenchmarkOptions {
    uint64_t seed = 0;
    /// When null, the model is the bicubic ×scale upsample baseline.
    srnet::SrNet* net = nullptr;
    const ree::LoraAdapter* cond_adapter = nullptr;
    int scale = 4;
};

/// Synthesizes LR per level (spec round-robin, seeds frozen from opts.seed),
/// runs the model, and scores PSNR-Y plus the REE embedding-distance proxy.
EvalReport benchmark(const std::vector<ImageTensor>& hr_images, const Levels& levels,
                     ree::EncoderWeights& ree_base, const BenchmarkOptions& opts);

}  // namespace dacesr::evalkit
