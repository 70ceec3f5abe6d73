#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dacesr {

/// H×W×C image, row-major channel-last, values in [0,1].
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {
        if (h <= 0 || w <= 0 || (c != 1 && c != 3))
            throw std::invalid_argument("ImageTensor: bad shape");
    }

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t size() const { return data.size(); }

    /// Clamps every value into [0,1]; non-finite values are an error.
    void clamp01();
};

/// 8-bit PNG I/O. Grayscale files load as 1 channel, everything else as RGB.
ImageTensor load_png(const std::string& path);
void save_png(const ImageTensor& img, const std::string& path);

}  // namespace dacesr
