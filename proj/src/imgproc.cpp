#include "dacesr/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace dacesr::imgproc {

using nlohmann::json;

ResizeMethod resize_method_from_string(const std::string& s) {
    if (s == "bicubic") return ResizeMethod::bicubic;
    if (s == "bilinear") return ResizeMethod::bilinear;
    if (s == "nearest") return ResizeMethod::nearest;
    throw std::invalid_argument("unknown resize method: " + s);
}

std::string to_string(ResizeMethod m) {
    switch (m) {
        case ResizeMethod::bicubic: return "bicubic";
        case ResizeMethod::bilinear: return "bilinear";
        case ResizeMethod::nearest: return "nearest";
    }
    return "bicubic";
}

std::vector<double> gaussian_kernel(double sigma, int size) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
    if (size < 3 || size % 2 == 0)
        throw std::invalid_argument("gaussian_kernel: size must be odd and >= 3");
    std::vector<double> k(static_cast<size_t>(size) * size);
    const int r = size / 2;
    double sum = 0.0;
    for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
            double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
            k[static_cast<size_t>(y + r) * size + (x + r)] = v;
            sum += v;
        }
    }
    for (double& v : k) v /= sum;
    return k;
}

int blur_kernel_size(double sigma) {
    int r = static_cast<int>(std::ceil(3.0 * sigma));
    return std::max(3, 2 * r + 1);
}

ImageTensor apply_blur(const ImageTensor& img, const std::vector<double>& kernel,
                       int size) {
    if (size < 3 || size % 2 == 0 ||
        kernel.size() != static_cast<size_t>(size) * size)
        throw std::invalid_argument("apply_blur: bad kernel");
    const int r = size / 2;
    ImageTensor out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int ky = -r; ky <= r; ++ky) {
                    int sy = std::clamp(y + ky, 0, img.height - 1);
                    for (int kx = -r; kx <= r; ++kx) {
                        int sx = std::clamp(x + kx, 0, img.width - 1);
                        acc += kernel[static_cast<size_t>(ky + r) * size + (kx + r)] *
                               img.at(sy, sx, c);
                    }
                }
                out.at(y, x, c) = acc;
            }
        }
    }
    out.clamp01();
    return out;
}

ImageTensor add_gaussian_noise(const ImageTensor& img, double sigma255, Rng& rng) {
    if (sigma255 < 0.0) throw std::invalid_argument("add_gaussian_noise: sigma255 < 0");
    if (sigma255 == 0.0) return img;
    ImageTensor out = img;
    const double s = sigma255 / 255.0;
    for (double& v : out.data) v += s * rng.gaussian();
    out.clamp01();
    return out;
}

namespace {

// Annex K luminance / chrominance quantization tables.
constexpr int kLumaQ[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr int kChromaQ[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

void scaled_table(const int* base, int quality, double* out) {
    int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    for (int i = 0; i < 64; ++i) {
        int q = (base[i] * scale + 50) / 100;
        out[i] = static_cast<double>(std::clamp(q, 1, 255));
    }
}

void dct8(const double* in, double* out) {
    constexpr double kPi = 3.14159265358979323846;
    for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x)
                    acc += in[y * 8 + x] * std::cos((2 * y + 1) * u * kPi / 16.0) *
                           std::cos((2 * x + 1) * v * kPi / 16.0);
            double cu = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
            double cv = v == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
            out[u * 8 + v] = 0.25 * cu * cv * acc;
        }
    }
}

void idct8(const double* in, double* out) {
    constexpr double kPi = 3.14159265358979323846;
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u) {
                for (int v = 0; v < 8; ++v) {
                    double cu = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
                    double cv = v == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
                    acc += cu * cv * in[u * 8 + v] *
                           std::cos((2 * y + 1) * u * kPi / 16.0) *
                           std::cos((2 * x + 1) * v * kPi / 16.0);
                }
            }
            out[y * 8 + x] = 0.25 * acc;
        }
    }
}

}  // namespace

ImageTensor jpeg_degrade(const ImageTensor& img, int quality) {
    if (img.channels != 3)
        throw std::invalid_argument("jpeg_degrade: 3-channel input required");
    if (quality < 1 || quality > 100)
        throw std::invalid_argument("jpeg_degrade: quality must be in [1,100]");

    const int ph = (img.height + 7) / 8 * 8;
    const int pw = (img.width + 7) / 8 * 8;

    // Full-range JFIF YCbCr in 0..255 units, edge-replicated to 8x8 blocks.
    std::vector<double> ycc(static_cast<size_t>(3) * ph * pw);
    for (int y = 0; y < ph; ++y) {
        int sy = std::min(y, img.height - 1);
        for (int x = 0; x < pw; ++x) {
            int sx = std::min(x, img.width - 1);
            double r = img.at(sy, sx, 0) * 255.0;
            double g = img.at(sy, sx, 1) * 255.0;
            double b = img.at(sy, sx, 2) * 255.0;
            size_t p = static_cast<size_t>(y) * pw + x;
            ycc[p] = 0.299 * r + 0.587 * g + 0.114 * b;
            ycc[static_cast<size_t>(ph) * pw + p] =
                -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
            ycc[2 * static_cast<size_t>(ph) * pw + p] =
                0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
        }
    }

    double qtab[2][64];
    scaled_table(kLumaQ, quality, qtab[0]);
    scaled_table(kChromaQ, quality, qtab[1]);

    double block[64], coef[64];
    for (int c = 0; c < 3; ++c) {
        const double* q = qtab[c == 0 ? 0 : 1];
        double* plane = ycc.data() + static_cast<size_t>(c) * ph * pw;
        for (int by = 0; by < ph; by += 8) {
            for (int bx = 0; bx < pw; bx += 8) {
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        block[y * 8 + x] =
                            plane[static_cast<size_t>(by + y) * pw + bx + x] - 128.0;
                dct8(block, coef);
                for (int i = 0; i < 64; ++i)
                    coef[i] = std::round(coef[i] / q[i]) * q[i];
                idct8(coef, block);
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        plane[static_cast<size_t>(by + y) * pw + bx + x] =
                            block[y * 8 + x] + 128.0;
            }
        }
    }

    ImageTensor out(img.height, img.width, 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            size_t p = static_cast<size_t>(y) * pw + x;
            double Y = ycc[p];
            double cb = ycc[static_cast<size_t>(ph) * pw + p] - 128.0;
            double cr = ycc[2 * static_cast<size_t>(ph) * pw + p] - 128.0;
            out.at(y, x, 0) = (Y + 1.402 * cr) / 255.0;
            out.at(y, x, 1) = (Y - 0.344136 * cb - 0.714136 * cr) / 255.0;
            out.at(y, x, 2) = (Y + 1.772 * cb) / 255.0;
        }
    }
    out.clamp01();
    return out;
}

namespace {

double cubic_kernel(double x) {
    constexpr double a = -0.5;
    x = std::fabs(x);
    if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
    if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
    return 0.0;
}

double tent_kernel(double x) {
    x = std::fabs(x);
    return x < 1.0 ? 1.0 - x : 0.0;
}

struct AxisWeights {
    std::vector<int> first;         // first source index per output index
    std::vector<double> weights;    // taps per output index, row-major
    int taps = 0;
};

// Normalized resampling weights along one axis, center-aligned mapping.
// For bicubic downscale the kernel is widened by 1/scale (antialias).
AxisWeights axis_weights(int in, int out, ResizeMethod method) {
    const double scale = static_cast<double>(out) / in;
    double support;
    double kscale = 1.0;
    if (method == ResizeMethod::bilinear) {
        support = 1.0;
    } else {
        support = 2.0;
        if (scale < 1.0) {
            kscale = scale;
            support = 2.0 / scale;
        }
    }
    AxisWeights w;
    w.taps = static_cast<int>(std::ceil(support)) * 2 + 1;
    w.first.resize(out);
    w.weights.assign(static_cast<size_t>(out) * w.taps, 0.0);
    for (int o = 0; o < out; ++o) {
        double center = (o + 0.5) / scale - 0.5;
        int first = static_cast<int>(std::floor(center - support)) + 1;
        w.first[o] = first;
        double sum = 0.0;
        for (int t = 0; t < w.taps; ++t) {
            double x = (center - (first + t)) * kscale;
            double v = method == ResizeMethod::bilinear ? tent_kernel(x)
                                                        : cubic_kernel(x) * kscale;
            w.weights[static_cast<size_t>(o) * w.taps + t] = v;
            sum += v;
        }
        if (sum != 0.0)
            for (int t = 0; t < w.taps; ++t)
                w.weights[static_cast<size_t>(o) * w.taps + t] /= sum;
    }
    return w;
}

}  // namespace

ImageTensor resize_to(const ImageTensor& img, int out_h, int out_w,
                      ResizeMethod method) {
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("resize: output dimension must be >= 1");
    if (method == ResizeMethod::nearest) {
        ImageTensor out(out_h, out_w, img.channels);
        const double sy = static_cast<double>(out_h) / img.height;
        const double sx = static_cast<double>(out_w) / img.width;
        for (int y = 0; y < out_h; ++y) {
            int iy = std::clamp(static_cast<int>((y + 0.5) / sy), 0, img.height - 1);
            for (int x = 0; x < out_w; ++x) {
                int ix = std::clamp(static_cast<int>((x + 0.5) / sx), 0, img.width - 1);
                for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(iy, ix, c);
            }
        }
        return out;
    }

    AxisWeights wy = axis_weights(img.height, out_h, method);
    AxisWeights wx = axis_weights(img.width, out_w, method);

    // Separable: rows first, then columns.
    ImageTensor tmp(img.height, out_w, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int t = 0; t < wx.taps; ++t) {
                    int sx = std::clamp(wx.first[x] + t, 0, img.width - 1);
                    acc += wx.weights[static_cast<size_t>(x) * wx.taps + t] *
                           img.at(y, sx, c);
                }
                tmp.at(y, x, c) = acc;
            }
        }
    }
    ImageTensor out(out_h, out_w, img.channels);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int t = 0; t < wy.taps; ++t) {
                    int sy = std::clamp(wy.first[y] + t, 0, img.height - 1);
                    acc += wy.weights[static_cast<size_t>(y) * wy.taps + t] *
                           tmp.at(sy, x, c);
                }
                out.at(y, x, c) = acc;
            }
        }
    }
    out.clamp01();
    return out;
}

ImageTensor resize(const ImageTensor& img, double scale, ResizeMethod method) {
    if (scale <= 0.0) throw std::invalid_argument("resize: scale must be > 0");
    int oh = static_cast<int>(std::lround(img.height * scale));
    int ow = static_cast<int>(std::lround(img.width * scale));
    if (oh < 1 || ow < 1)
        throw std::invalid_argument("resize: output dimension rounds to zero");
    return resize_to(img, oh, ow, method);
}

double DegradationSpec::total_scale() const {
    double s = 1.0;
    for (const auto& st : steps)
        if (const auto* rs = std::get_if<ResizeStep>(&st)) s *= rs->scale;
    return s;
}

ImageTensor apply_chain(const ImageTensor& img, const DegradationSpec& spec) {
    ImageTensor cur = img;
    for (size_t i = 0; i < spec.steps.size(); ++i) {
        Rng step_rng(Rng::mix(spec.seed, i));
        const auto& st = spec.steps[i];
        if (const auto* b = std::get_if<BlurStep>(&st)) {
            int size = blur_kernel_size(b->sigma);
            cur = apply_blur(cur, gaussian_kernel(b->sigma, size), size);
        } else if (const auto* n = std::get_if<GaussianNoiseStep>(&st)) {
            cur = add_gaussian_noise(cur, n->sigma255, step_rng);
        } else if (const auto* j = std::get_if<JpegStep>(&st)) {
            cur = jpeg_degrade(cur, j->quality);
        } else if (const auto* r = std::get_if<ResizeStep>(&st)) {
            cur = resize(cur, r->scale, r->method);
        }
    }
    return cur;
}

DegradationSpec sample_degradation(Rng& rng) {
    DegradationSpec spec;
    spec.seed = rng.next_u64();
    double round1_scale = rng.uniform(0.25, 1.0);
    double round2_scale = 0.25 / round1_scale;
    for (int round = 0; round < 2; ++round) {
        spec.steps.push_back(BlurStep{rng.uniform(0.2, 3.0)});
        spec.steps.push_back(
            ResizeStep{round == 0 ? round1_scale : round2_scale, ResizeMethod::bicubic});
        spec.steps.push_back(GaussianNoiseStep{rng.uniform(1.0, 30.0)});
        spec.steps.push_back(JpegStep{static_cast<int>(rng.uniform_int(30, 95))});
    }
    return spec;
}

std::string DegradationSpec::to_json() const {
    json steps_json = json::array();
    for (const auto& st : steps) {
        json j;
        if (const auto* b = std::get_if<BlurStep>(&st)) {
            j = {{"kind", "blur"}, {"sigma", b->sigma}};
        } else if (const auto* n = std::get_if<GaussianNoiseStep>(&st)) {
            j = {{"kind", "gaussian_noise"}, {"sigma255", n->sigma255}};
        } else if (const auto* jp = std::get_if<JpegStep>(&st)) {
            j = {{"kind", "jpeg"}, {"quality", jp->quality}};
        } else if (const auto* r = std::get_if<ResizeStep>(&st)) {
            j = {{"kind", "resize"},
                 {"scale", r->scale},
                 {"method", to_string(r->method)}};
        }
        steps_json.push_back(j);
    }
    return json{{"seed", seed}, {"steps", steps_json}}.dump();
}

DegradationSpec DegradationSpec::from_json(const std::string& text) {
    json j = json::parse(text);
    DegradationSpec spec;
    spec.seed = j.at("seed").get<uint64_t>();
    for (const auto& sj : j.at("steps")) {
        std::string kind = sj.at("kind").get<std::string>();
        if (kind == "blur") {
            double sigma = sj.at("sigma").get<double>();
            if (sigma <= 0.0) throw std::invalid_argument("blur sigma must be > 0");
            spec.steps.push_back(BlurStep{sigma});
        } else if (kind == "gaussian_noise") {
            double s = sj.at("sigma255").get<double>();
            if (s < 0.0) throw std::invalid_argument("noise sigma255 must be >= 0");
            spec.steps.push_back(GaussianNoiseStep{s});
        } else if (kind == "jpeg") {
            int q = sj.at("quality").get<int>();
            if (q < 1 || q > 100) throw std::invalid_argument("jpeg quality out of range");
            spec.steps.push_back(JpegStep{q});
        } else if (kind == "resize") {
            double scale = sj.at("scale").get<double>();
            if (scale <= 0.0) throw std::invalid_argument("resize scale must be > 0");
            spec.steps.push_back(ResizeStep{
                scale, resize_method_from_string(sj.at("method").get<std::string>())});
        } else {
            throw std::invalid_argument("unknown degradation kind: " + kind);
        }
    }
    return spec;
}

}  // namespace dacesr::imgproc
