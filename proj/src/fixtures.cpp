#include "dacesr/fixtures.hpp"

#include <algorithm>
#include <cmath>

#include "dacesr/rng.hpp"

namespace dacesr::fixtures {

namespace {

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    h = std::fmod(h, 360.0);
    double c = v * s;
    double x = c * (1.0 - std::fabs(std::fmod(h / 60.0, 2.0) - 1.0));
    double m = v - c;
    double r = 0, g = 0, b = 0;
    if (h < 60) { r = c; g = x; }
    else if (h < 120) { r = x; g = c; }
    else if (h < 180) { g = c; b = x; }
    else if (h < 240) { g = x; b = c; }
    else if (h < 300) { r = x; b = c; }
    else { r = c; b = x; }
    rgb[0] = r + m;
    rgb[1] = g + m;
    rgb[2] = b + m;
}


ImageTensor gradient_image(int size, Rng& rng) {
    ImageTensor img(size, size, 3);
    double rgb0[3], rgb1[3];
    hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.4, 0.9), rng.uniform(0.5, 0.95), rgb0);
    hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.4, 0.9), rng.uniform(0.3, 0.9), rgb1);
    double ang = rng.uniform(0, 2 * 3.14159265358979323846);
    double dx = std::cos(ang), dy = std::sin(ang);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double t = ((x * dx + y * dy) / size + 1.0) / 2.0;
            t = std::clamp(t, 0.0, 1.0);
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = rgb0[c] * (1 - t) + rgb1[c] * t;
        }
    return img;
}

ImageTensor checkerboard_image(int size, Rng& rng) {
    ImageTensor img(size, size, 3);
    int period = static_cast<int>(rng.uniform_int(6, 20));
    double rgb0[3], rgb1[3];
    hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.5, 1.0), rng.uniform(0.6, 1.0), rgb0);
    hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.3, 0.8), rng.uniform(0.1, 0.5), rgb1);
    int px = static_cast<int>(rng.uniform_int(0, period - 1));
    int py = static_cast<int>(rng.uniform_int(0, period - 1));
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            bool odd = (((x + px) / period) + ((y + py) / period)) % 2 == 1;
            const double* rgb = odd ? rgb1 : rgb0;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
        }
    return img;
}

ImageTensor wave_image(int size, Rng& rng) {
    ImageTensor img(size, size, 3);
    double rgb0[3], rgb1[3];
    hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.4, 0.9), rng.uniform(0.5, 0.9), rgb0);
    hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.4, 0.9), rng.uniform(0.4, 0.9), rgb1);
    double f1 = rng.uniform(0.15, 0.55), f2 = rng.uniform(0.05, 0.35);
    double a1 = rng.uniform(0, 3.14), a2 = rng.uniform(0, 3.14);
    double sharp = rng.uniform(2.0, 6.0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double t = 0.5 + 0.25 * std::sin(f1 * (x * std::cos(a1) + y * std::sin(a1))) +
                       0.25 * std::sin(f2 * (x * std::cos(a2) - y * std::sin(a2)));
            t = 0.5 + 0.5 * std::tanh(sharp * (t - 0.5));
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = std::clamp(rgb0[c] * (1 - t) + rgb1[c] * t, 0.0, 1.0);
        }
    return img;
}

ImageTensor blobs_image(int size, Rng& rng) {
    ImageTensor img(size, size, 3);
    double bg[3];
    hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.1, 0.4), rng.uniform(0.2, 0.8), bg);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = bg[c];
    int k = static_cast<int>(rng.uniform_int(4, 9));
    for (int i = 0; i < k; ++i) {
        double cx = rng.uniform(0, size), cy = rng.uniform(0, size);
        double rad = rng.uniform(size / 12.0, size / 4.0);
        double rgb[3];
        hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.5, 1.0), rng.uniform(0.4, 1.0), rgb);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                double w = 1.0 / (1.0 + std::exp((std::sqrt(d2) - rad) * 2.0));
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = std::clamp(
                        img.at(y, x, c) * (1 - w) + rgb[c] * w, 0.0, 1.0);
            }
    }
    return img;
}

}  // namespace

ImageTensor make_gradient(int height, int width) {
    ImageTensor img(height, width, 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            img.at(y, x, 0) = static_cast<double>(x) / std::max(1, width - 1);
            img.at(y, x, 1) = static_cast<double>(y) / std::max(1, height - 1);
            img.at(y, x, 2) = 0.5 * (img.at(y, x, 0) + img.at(y, x, 1));
        }
    return img;
}

std::vector<ImageTensor> make_fixture_corpus(uint64_t seed, int count, int size) {
    std::vector<ImageTensor> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng rng(Rng::mix(seed, static_cast<uint64_t>(i)));
        switch (i % 4) {
            case 0: out.push_back(gradient_image(size, rng)); break;
            case 1: out.push_back(checkerboard_image(size, rng)); break;
            case 2: out.push_back(wave_image(size, rng)); break;
            default: out.push_back(blobs_image(size, rng)); break;
        }
    }
    return out;
}

}  // namespace dacesr::fixtures
