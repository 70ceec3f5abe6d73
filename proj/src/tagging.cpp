#include "dacesr/tagging.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace dacesr::tagging {

using nlohmann::json;

void TagSet::insert(std::string token) {
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    tags.insert(std::move(token));
}

double jaccard(const TagSet& a, const TagSet& b) {
    if (a.tags.empty() && b.tags.empty()) return 1.0;
    size_t inter = 0;
    for (const auto& t : a.tags) inter += b.tags.count(t);
    size_t uni = a.tags.size() + b.tags.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

constexpr int kHueBins = 12;

// Hue bin in [0, kHueBins), or -1 for achromatic pixels.
int hue_bin(double r, double g, double b) {
    double mx = std::max({r, g, b});
    double mn = std::min({r, g, b});
    double d = mx - mn;
    if (d < 0.06 || mx < 0.08) return -1;
    double h;
    if (mx == r)
        h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
    else if (mx == g)
        h = 60.0 * ((b - r) / d + 2.0);
    else
        h = 60.0 * ((r - g) / d + 4.0);
    int bin = static_cast<int>(h / (360.0 / kHueBins));
    return std::clamp(bin, 0, kHueBins - 1);
}

double luminance(const ImageTensor& img, int y, int x) {
    if (img.channels == 1) return img.at(y, x, 0);
    return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

}  // namespace

TagSet SurrogateTagger::tag(const ImageTensor& img) const {
    if (img.channels != 3)
        throw std::invalid_argument("surrogate tagger: 3-channel image required");
    if (img.height < 32 || img.width < 32)
        throw std::invalid_argument("surrogate tagger: image must be at least 32x32");

    TagSet out;
    const int h = img.height, w = img.width;
    const double n_px = static_cast<double>(h) * w;

    // (a) global hue histogram, bin 12 collects achromatic pixels.
    std::vector<double> hue_hist(kHueBins + 1, 0.0);
    // (e) per-cell histograms on a 4x4 grid.
    std::vector<std::vector<double>> cell_hist(16, std::vector<double>(kHueBins + 1, 0.0));
    double lum_sum = 0.0, lum_sq = 0.0;
    for (int y = 0; y < h; ++y) {
        int cr = std::min(3, y * 4 / h);
        for (int x = 0; x < w; ++x) {
            int cc = std::min(3, x * 4 / w);
            int bin = hue_bin(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
            int idx = bin < 0 ? kHueBins : bin;
            hue_hist[idx] += 1.0;
            cell_hist[cr * 4 + cc][idx] += 1.0;
            double l = luminance(img, y, x);
            lum_sum += l;
            lum_sq += l * l;
        }
    }
    for (int k = 0; k <= kHueBins; ++k) {
        if (hue_hist[k] / n_px >= 0.05)
            out.insert(k == kHueBins ? "hue_achroma" : "hue_" + std::to_string(k));
    }
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            const auto& ch = cell_hist[r * 4 + c];
            int best = static_cast<int>(std::max_element(ch.begin(), ch.end()) - ch.begin());
            std::string hue = best == kHueBins ? "achroma" : std::to_string(best);
            out.insert("cell_" + std::to_string(r) + "_" + std::to_string(c) + "_hue_" + hue);
        }
    }

    // (b)+(c) Sobel magnitude and orientation on luminance, replicate border.
    double mag_sum = 0.0;
    std::vector<double> orient_hist(8, 0.0);
    double orient_n = 0.0;
    for (int y = 0; y < h; ++y) {
        int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x) {
            int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
            double gx = luminance(img, ym, xp) + 2.0 * luminance(img, y, xp) +
                        luminance(img, yp, xp) - luminance(img, ym, xm) -
                        2.0 * luminance(img, y, xm) - luminance(img, yp, xm);
            double gy = luminance(img, yp, xm) + 2.0 * luminance(img, yp, x) +
                        luminance(img, yp, xp) - luminance(img, ym, xm) -
                        2.0 * luminance(img, ym, x) - luminance(img, ym, xp);
            double mag = std::sqrt(gx * gx + gy * gy);
            mag_sum += mag;
            if (mag > 0.1) {
                double ang = std::atan2(gy, gx);  // (-pi, pi]
                int bin = static_cast<int>((ang + 3.14159265358979323846) /
                                           (2.0 * 3.14159265358979323846) * 8.0);
                orient_hist[std::clamp(bin, 0, 7)] += 1.0;
                orient_n += 1.0;
            }
        }
    }
    int edge_level = std::min(7, static_cast<int>(mag_sum / n_px / 0.05));
    out.insert("edge_" + std::to_string(edge_level));
    if (orient_n > 0.0) {
        for (int k = 0; k < 8; ++k)
            if (orient_hist[k] / orient_n >= 0.10) out.insert("orient_" + std::to_string(k));
    }

    // (d) luminance mean / variance, 6 levels each.
    double mean = lum_sum / n_px;
    double var = std::max(0.0, lum_sq / n_px - mean * mean);
    out.insert("lum_" + std::to_string(std::min(5, static_cast<int>(mean * 6.0))));
    out.insert("var_" + std::to_string(std::min(5, static_cast<int>(var / 0.01))));
    return out;
}

std::unique_ptr<Tagger> make_tagger(const std::string& name) {
    if (name == "surrogate") return std::make_unique<SurrogateTagger>();
    throw std::invalid_argument("unknown tagger: " + name);
}

SimilarityReport severity_profile(const std::vector<ImageTensor>& hr_images,
                                  const std::vector<imgproc::DegradationSpec>& degradations,
                                  const Tagger& tagger, int jobs) {
    if (hr_images.empty()) throw std::invalid_argument("severity_profile: no images");
    if (degradations.empty()) throw std::invalid_argument("severity_profile: no degradations");

    const size_t n = hr_images.size();
    std::vector<TagSet> hr_tags(n);
    for (size_t j = 0; j < n; ++j) hr_tags[j] = tagger.tag(hr_images[j]);

    const size_t m = degradations.size();
    std::vector<double> sims(m, 0.0);
    std::vector<std::string> errors(m);

    auto work = [&](size_t i) {
        double acc = 0.0;
        for (size_t j = 0; j < n; ++j) {
            try {
                ImageTensor lr = imgproc::apply_chain(hr_images[j], degradations[i]);
                acc += jaccard(hr_tags[j], tagger.tag(lr));
            } catch (const std::exception& e) {
                errors[i] = "spec_id " + std::to_string(i) + ", image " +
                            std::to_string(j) + ": " + e.what();
                return;
            }
        }
        sims[i] = acc / static_cast<double>(n);
    };

    jobs = std::max(1, jobs);
    if (jobs == 1 || m < 2) {
        for (size_t i = 0; i < m; ++i) work(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < m; i = next.fetch_add(1)) work(i);
            });
        for (auto& t : pool) t.join();
    }
    for (const auto& err : errors)
        if (!err.empty()) throw std::runtime_error("severity_profile: " + err);

    SimilarityReport report;
    report.records.reserve(m);
    for (size_t i = 0; i < m; ++i)
        report.records.push_back({static_cast<int>(i), sims[i], static_cast<int>(n)});
    return report;
}

SeverityClasses classify_four(const SimilarityReport& report) {
    const size_t m = report.records.size();
    if (m < 4) throw std::invalid_argument("classify_four: need at least 4 records");
    std::vector<SimilarityRecord> sorted = report.records;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.mean_similarity != b.mean_similarity)
            return a.mean_similarity > b.mean_similarity;
        return a.spec_id < b.spec_id;
    });
    SeverityClasses cls;
    size_t base = m / 4, rem = m % 4, pos = 0;
    for (int k = 0; k < 4; ++k) {
        size_t sz = base + (static_cast<size_t>(k) < rem ? 1 : 0);
        for (size_t i = 0; i < sz; ++i) cls.class_ids[k].push_back(sorted[pos++].spec_id);
    }
    return cls;
}

ThresholdSelection select_by_threshold(const SimilarityReport& report, double tau1,
                                       double tau2) {
    if (tau1 <= tau2) throw std::invalid_argument("select_by_threshold: tau1 must exceed tau2");
    ThresholdSelection sel;
    for (const auto& r : report.records) {
        if (r.mean_similarity > tau1) sel.mild.insert(r.spec_id);
        if (r.mean_similarity < tau2) sel.severe.insert(r.spec_id);
    }
    return sel;
}

std::string SimilarityReport::to_jsonl() const {
    std::ostringstream os;
    for (const auto& r : records) {
        os << json{{"spec_id", r.spec_id},
                   {"mean_similarity", r.mean_similarity},
                   {"n_images", r.n_images}}
                  .dump()
           << "\n";
    }
    return os.str();
}

SimilarityReport SimilarityReport::from_jsonl(const std::string& text) {
    SimilarityReport rep;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        rep.records.push_back({j.at("spec_id").get<int>(),
                               j.at("mean_similarity").get<double>(),
                               j.at("n_images").get<int>()});
    }
    return rep;
}

std::string SimilarityReport::to_csv() const {
    std::ostringstream os;
    os << "spec_id,mean_similarity,n_images\n";
    for (const auto& r : records)
        os << r.spec_id << "," << r.mean_similarity << "," << r.n_images << "\n";
    return os.str();
}

}  // namespace dacesr::tagging
