#include "dacesr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dacesr::evalkit {

using nlohmann::json;

ImageTensor rgb_to_y(const ImageTensor& img) {
    if (img.channels == 1) return img;
    ImageTensor y(img.height, img.width, 1);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            y.at(r, c, 0) = (65.481 * img.at(r, c, 0) + 128.553 * img.at(r, c, 1) +
                             24.966 * img.at(r, c, 2) + 16.0) /
                            255.0;
    return y;
}

double psnr_y(const ImageTensor& sr, const ImageTensor& hr) {
    if (sr.height != hr.height || sr.width != hr.width || sr.channels != hr.channels)
        throw std::invalid_argument("psnr_y: shape mismatch");
    ImageTensor ya = rgb_to_y(sr);
    ImageTensor yb = rgb_to_y(hr);
    constexpr int kCrop = 4;
    const int y0 = std::min(kCrop, ya.height / 2);
    const int x0 = std::min(kCrop, ya.width / 2);
    double mse = 0.0;
    int n = 0;
    for (int y = y0; y < ya.height - y0; ++y)
        for (int x = x0; x < ya.width - x0; ++x) {
            double d = ya.at(y, x, 0) - yb.at(y, x, 0);
            mse += d * d;
            ++n;
        }
    if (n == 0) throw std::invalid_argument("psnr_y: image too small after crop");
    mse /= n;
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

std::string EvalReport::to_json() const {
    json rows_json = json::array();
    for (const auto& r : rows)
        rows_json.push_back({{"name", r.name},
                             {"psnr_y_mean", r.psnr_y_mean},
                             {"proxy_mean", r.proxy_mean},
                             {"n_images", r.n_images}});
    return json{{"schema_version", 1}, {"rows", rows_json}}.dump(2);
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "name,psnr_y_mean,proxy_mean,n_images\n";
    for (const auto& r : rows)
        os << r.name << "," << r.psnr_y_mean << "," << r.proxy_mean << ","
           << r.n_images << "\n";
    return os.str();
}

EvalReport EvalReport::from_json(const std::string& text) {
    json j = json::parse(text);
    EvalReport rep;
    for (const auto& rj : j.at("rows"))
        rep.rows.push_back({rj.at("name").get<std::string>(),
                            rj.at("psnr_y_mean").get<double>(),
                            rj.at("proxy_mean").get<double>(),
                            rj.at("n_images").get<int>()});
    return rep;
}

Levels levels_from_report(const std::vector<imgproc::DegradationSpec>& specs,
                          const tagging::SimilarityReport& report) {
    tagging::SeverityClasses cls = tagging::classify_four(report);
    Levels levels;
    auto collect = [&](const std::string& name, std::initializer_list<int> classes) {
        std::vector<imgproc::DegradationSpec> out;
        for (int k : classes)
            for (int id : cls.class_ids[k])
                out.push_back(specs.at(static_cast<size_t>(id)));
        levels.emplace_back(name, std::move(out));
    };
    collect("Level-I", {0});
    collect("Level-II", {1, 2});
    collect("Level-III", {3});
    return levels;
}

EvalReport benchmark(const std::vector<ImageTensor>& hr_images, const Levels& levels,
                     ree::EncoderWeights& ree_base, const BenchmarkOptions& opts) {
    if (hr_images.empty()) throw std::invalid_argument("benchmark: no images");
    const int scale = opts.net ? opts.net->cfg.scale : opts.scale;

    EvalReport report;
    for (const auto& [name, specs] : levels) {
        if (specs.empty()) continue;
        double psnr_acc = 0.0, proxy_acc = 0.0;
        int n = 0;
        for (size_t j = 0; j < hr_images.size(); ++j) {
            // Crop HR to a multiple of the scale so LR×scale matches exactly.
            const ImageTensor& src = hr_images[j];
            int h = src.height / scale * scale;
            int w = src.width / scale * scale;
            ImageTensor hr(h, w, src.channels);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < src.channels; ++c) hr.at(y, x, c) = src.at(y, x, c);

            imgproc::DegradationSpec spec = specs[j % specs.size()];
            spec.seed = Rng::mix(opts.seed, j);
            ImageTensor lr = imgproc::apply_chain(hr, spec);
            if (lr.height != h / scale || lr.width != w / scale)
                lr = imgproc::resize_to(lr, h / scale, w / scale,
                                        imgproc::ResizeMethod::bicubic);

            ImageTensor sr;
            if (opts.net) {
                nn::Tensor cond;
                if (opts.net->cfg.use_cfm)
                    cond = ree::encode(lr, ree_base, opts.cond_adapter);
                srnet::NetCache nc;
                sr = srnet::to_image(
                    srnet::net_forward(srnet::from_image(lr), cond, *opts.net, nc));
            } else {
                sr = imgproc::resize_to(lr, h, w, imgproc::ResizeMethod::bicubic);
            }
            psnr_acc += psnr_y(sr, hr);
            proxy_acc += ree::rep_mse_loss(ree::encode(sr, ree_base),
                                           ree::encode(hr, ree_base));
            ++n;
        }
        report.rows.push_back({name, psnr_acc / n, proxy_acc / n, n});
    }
    return report;
}

}  // namespace dacesr::evalkit
