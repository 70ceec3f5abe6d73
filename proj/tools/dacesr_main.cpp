// dacesr: one binary, nine subcommands. All randomness flows from --seed /
// config seed through named sub-streams, so reruns are byte-identical.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dacesr/evalkit.hpp"
#include "dacesr/fixtures.hpp"
#include "dacesr/image.hpp"
#include "dacesr/imgproc.hpp"
#include "dacesr/ree.hpp"
#include "dacesr/rng.hpp"
#include "dacesr/srnet.hpp"
#include "dacesr/ssm.hpp"
#include "dacesr/tagging.hpp"
#include "dacesr/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dacesr;

namespace {

// ---- logging --------------------------------------------------------------

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel g_log = LogLevel::info;

void init_log_level() {
    const char* env = std::getenv("DACESR_LOG");
    if (!env) return;
    std::string s(env);
    if (s == "error") g_log = LogLevel::error;
    else if (s == "info") g_log = LogLevel::info;
    else if (s == "debug") g_log = LogLevel::debug;
    else std::fprintf(stderr, "[warn] unknown DACESR_LOG value '%s'\n", s.c_str());
}

template <typename... Args>
void log_at(LogLevel lvl, const char* fmt, Args... args) {
    if (g_log < lvl) return;
    const char* tag = lvl == LogLevel::error ? "error" : lvl == LogLevel::info ? "info" : "debug";
    std::fprintf(stderr, "[%s] ", tag);
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}
#define LOG_INFO(...) log_at(LogLevel::info, __VA_ARGS__)
#define LOG_DEBUG(...) log_at(LogLevel::debug, __VA_ARGS__)
#define LOG_ERROR(...) log_at(LogLevel::error, __VA_ARGS__)

// ---- config ---------------------------------------------------------------

struct ProjectConfig {
    std::string data_dir;  // empty -> procedural fixture corpus
    std::string out_dir = "out";
    uint64_t seed = 0;
    int jobs = 1;
    double tau1 = 0.710;
    double tau2 = 0.297;

    int corpus_count = 64;
    int corpus_size = 128;
    int n_specs = 1000;
    int score_images = 8;  // corpus subset used for severity profiling

    srnet::NetworkConfig net;
    training::TrainConfig train;
    int gan_iterations = 300;
    ree::PretrainConfig ree_pretrain;
    ree::FinetuneConfig ree_finetune;

    int eval_images = 8;
    int eval_specs_per_level = 4;

    ProjectConfig() {
        // desk-scale budgets so a fresh single-core pipeline run stays
        // well under half an hour; raise via --config for longer runs
        train.batch_size = 4;
        train.iterations = 1000;
        ree_finetune.iterations = 1500;
        ree_finetune.lr = 5e-3;
    }
};

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

ProjectConfig load_config(const std::string& path) {
    ProjectConfig c;
    if (path.empty()) return c;
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config not readable: " + path);
    json j = json::parse(f);
    get_if(j, "data_dir", c.data_dir);
    get_if(j, "out_dir", c.out_dir);
    get_if(j, "seed", c.seed);
    get_if(j, "jobs", c.jobs);
    get_if(j, "tau1", c.tau1);
    get_if(j, "tau2", c.tau2);
    get_if(j, "corpus_count", c.corpus_count);
    get_if(j, "corpus_size", c.corpus_size);
    get_if(j, "n_specs", c.n_specs);
    get_if(j, "score_images", c.score_images);
    get_if(j, "eval_images", c.eval_images);
    get_if(j, "eval_specs_per_level", c.eval_specs_per_level);
    get_if(j, "gan_iterations", c.gan_iterations);
    if (j.contains("network")) {
        const json& n = j["network"];
        get_if(n, "n_rssb", c.net.n_rssb);
        get_if(n, "vimm_per_rssb", c.net.vimm_per_rssb);
        get_if(n, "channels", c.net.channels);
        get_if(n, "scale", c.net.scale);
        get_if(n, "lambda_expand", c.net.lambda_expand);
        get_if(n, "state", c.net.state);
        get_if(n, "cond_dim", c.net.cond_dim);
        get_if(n, "use_cfm", c.net.use_cfm);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        get_if(t, "patch_size", c.train.patch_size);
        get_if(t, "batch_size", c.train.batch_size);
        get_if(t, "iterations", c.train.iterations);
        get_if(t, "lr", c.train.lr);
        get_if(t, "beta1", c.train.beta1);
        get_if(t, "beta2", c.train.beta2);
        get_if(t, "lambda1", c.train.lambda1);
        get_if(t, "lambda2", c.train.lambda2);
    }
    if (j.contains("ree_pretrain")) {
        const json& r = j["ree_pretrain"];
        get_if(r, "iterations", c.ree_pretrain.iterations);
        get_if(r, "batch_size", c.ree_pretrain.batch_size);
        get_if(r, "lr", c.ree_pretrain.lr);
        get_if(r, "embed_dim", c.ree_pretrain.embed_dim);
    }
    if (j.contains("ree_finetune")) {
        const json& r = j["ree_finetune"];
        get_if(r, "iterations", c.ree_finetune.iterations);
        get_if(r, "batch_size", c.ree_finetune.batch_size);
        get_if(r, "lr", c.ree_finetune.lr);
        get_if(r, "rank", c.ree_finetune.rank);
    }
    return c;
}

json network_to_json(const srnet::NetworkConfig& n) {
    return json{{"n_rssb", n.n_rssb},
                {"vimm_per_rssb", n.vimm_per_rssb},
                {"channels", n.channels},
                {"scale", n.scale},
                {"lambda_expand", n.lambda_expand},
                {"state", n.state},
                {"cond_dim", n.cond_dim},
                {"use_cfm", n.use_cfm}};
}

srnet::NetworkConfig network_from_json(const json& n) {
    srnet::NetworkConfig c;
    get_if(n, "n_rssb", c.n_rssb);
    get_if(n, "vimm_per_rssb", c.vimm_per_rssb);
    get_if(n, "channels", c.channels);
    get_if(n, "scale", c.scale);
    get_if(n, "lambda_expand", c.lambda_expand);
    get_if(n, "state", c.state);
    get_if(n, "cond_dim", c.cond_dim);
    get_if(n, "use_cfm", c.use_cfm);
    return c;
}

// ---- shared helpers -------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<ImageTensor> load_corpus(const ProjectConfig& cfg) {
    if (cfg.data_dir.empty()) {
        LOG_DEBUG("using procedural fixture corpus (%d x %dpx, seed %llu)",
                  cfg.corpus_count, cfg.corpus_size,
                  static_cast<unsigned long long>(cfg.seed));
        return fixtures::make_fixture_corpus(cfg.seed, cfg.corpus_count,
                                             cfg.corpus_size);
    }
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(cfg.data_dir))
        if (e.path().extension() == ".png") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    if (paths.empty())
        throw std::runtime_error("no .png files in data_dir " + cfg.data_dir);
    std::vector<ImageTensor> imgs;
    imgs.reserve(paths.size());
    for (const auto& p : paths) imgs.push_back(load_png(p.string()));
    return imgs;
}

std::vector<imgproc::DegradationSpec> sample_specs(uint64_t seed, int n) {
    Rng rng = Rng(seed).fork("specs");
    std::vector<imgproc::DegradationSpec> specs;
    specs.reserve(n);
    for (int i = 0; i < n; ++i) specs.push_back(imgproc::sample_degradation(rng));
    return specs;
}

std::string specs_to_jsonl(const std::vector<imgproc::DegradationSpec>& specs) {
    std::string out;
    for (const auto& s : specs) {
        out += s.to_json();
        out += '\n';
    }
    return out;
}

std::vector<imgproc::DegradationSpec> specs_from_jsonl(const std::string& text) {
    std::vector<imgproc::DegradationSpec> specs;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        specs.push_back(imgproc::DegradationSpec::from_json(line));
    }
    return specs;
}

std::vector<ImageTensor> center_crops(const std::vector<ImageTensor>& imgs, int size) {
    std::vector<ImageTensor> crops;
    crops.reserve(imgs.size());
    for (const auto& img : imgs) {
        int y0 = (img.height - size) / 2, x0 = (img.width - size) / 2;
        if (y0 < 0 || x0 < 0) throw std::runtime_error("image smaller than crop size");
        ImageTensor c(size, size, img.channels);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                for (int ch = 0; ch < img.channels; ++ch)
                    c.at(y, x, ch) = img.at(y0 + y, x0 + x, ch);
        crops.push_back(std::move(c));
    }
    return crops;
}

// Training-log CSV without wall-clock times, so pipeline artifacts are
// byte-identical across runs.
std::string stable_log_csv(const training::TrainResult& r) {
    std::ostringstream ss;
    ss << "iteration,pixel,perceptual,adversarial,total\n";
    ss.precision(12);
    for (const auto& rec : r.log)
        ss << rec.iteration << ',' << rec.pixel << ',' << rec.perceptual << ','
           << rec.adversarial << ',' << rec.total << '\n';
    return ss.str();
}

std::vector<int> severe_ids_from_selection(const json& sel) {
    std::vector<int> ids;
    for (const auto& v : sel.at("severe")) ids.push_back(v.get<int>());
    return ids;
}

std::vector<imgproc::DegradationSpec> pick_specs(
    const std::vector<imgproc::DegradationSpec>& specs, const std::vector<int>& ids) {
    std::vector<imgproc::DegradationSpec> out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= static_cast<int>(specs.size()))
            throw std::runtime_error("spec id out of range: " + std::to_string(id));
        out.push_back(specs[static_cast<size_t>(id)]);
    }
    return out;
}

// ---- subcommands ----------------------------------------------------------

struct GlobalOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> out;
};

ProjectConfig resolve_config(const GlobalOpts& g) {
    ProjectConfig cfg = load_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (g.jobs) cfg.jobs = *g.jobs;
    if (g.out) cfg.out_dir = *g.out;
    if (cfg.tau1 <= cfg.tau2)
        throw std::runtime_error("config: tau1 must exceed tau2");
    cfg.net.validate();
    cfg.train.validate();
    return cfg;
}

int cmd_degrade(const ProjectConfig& cfg, const std::string& spec_file, int sample_n) {
    std::vector<imgproc::DegradationSpec> specs;
    if (!spec_file.empty())
        specs = specs_from_jsonl(read_text(spec_file));
    else
        specs = sample_specs(cfg.seed, sample_n);
    if (specs.empty()) throw std::runtime_error("degrade: no specs to apply");

    std::vector<ImageTensor> imgs = load_corpus(cfg);
    fs::create_directories(cfg.out_dir);
    int failures = 0;
    for (size_t si = 0; si < specs.size(); ++si) {
        char name[64];
        std::snprintf(name, sizeof(name), "spec_%03zu.json", si);
        write_text(fs::path(cfg.out_dir) / name, specs[si].to_json() + "\n");
        for (size_t ii = 0; ii < imgs.size(); ++ii) {
            std::snprintf(name, sizeof(name), "img_%03zu_spec_%03zu.png", ii, si);
            try {
                ImageTensor deg = imgproc::apply_chain(imgs[ii], specs[si]);
                save_png(deg, (fs::path(cfg.out_dir) / name).string());
            } catch (const std::exception& e) {
                LOG_ERROR("degrade failed for image %zu spec %zu: %s", ii, si, e.what());
                ++failures;
            }
        }
    }
    LOG_INFO("degrade: wrote %zu specs x %zu images to %s", specs.size(), imgs.size(),
             cfg.out_dir.c_str());
    return failures == static_cast<int>(specs.size() * imgs.size()) ? 1 : 0;
}

int cmd_score(const ProjectConfig& cfg, const std::string& spec_file, int sample_n,
              const std::string& tagger_name) {
    std::vector<imgproc::DegradationSpec> specs;
    if (!spec_file.empty())
        specs = specs_from_jsonl(read_text(spec_file));
    else
        specs = sample_specs(cfg.seed, sample_n > 0 ? sample_n : cfg.n_specs);

    std::vector<ImageTensor> imgs = load_corpus(cfg);
    if (cfg.score_images > 0 && static_cast<int>(imgs.size()) > cfg.score_images)
        imgs.resize(static_cast<size_t>(cfg.score_images));

    auto tagger = tagging::make_tagger(tagger_name);
    LOG_INFO("score: %zu specs x %zu images, tagger=%s, jobs=%d", specs.size(),
             imgs.size(), tagger_name.c_str(), cfg.jobs);
    tagging::SimilarityReport report =
        tagging::severity_profile(imgs, specs, *tagger, cfg.jobs);

    write_text(fs::path(cfg.out_dir) / "specs.jsonl", specs_to_jsonl(specs));
    write_text(fs::path(cfg.out_dir) / "report.jsonl", report.to_jsonl());
    write_text(fs::path(cfg.out_dir) / "report.csv", report.to_csv());
    if (report.records.size() >= 4) {
        tagging::SeverityClasses cls = tagging::classify_four(report);
        json jc;
        for (int k = 0; k < 4; ++k)
            jc["class" + std::to_string(k + 1)] = cls.class_ids[k];
        write_text(fs::path(cfg.out_dir) / "classes.json", jc.dump(2) + "\n");
    }
    LOG_INFO("score: report written to %s", cfg.out_dir.c_str());
    return 0;
}

int cmd_select(const ProjectConfig& cfg, const std::string& report_path) {
    fs::path rp = report_path.empty() ? fs::path(cfg.out_dir) / "report.jsonl"
                                      : fs::path(report_path);
    tagging::SimilarityReport report =
        tagging::SimilarityReport::from_jsonl(read_text(rp));
    tagging::ThresholdSelection sel =
        tagging::select_by_threshold(report, cfg.tau1, cfg.tau2);
    json j;
    j["tau1"] = cfg.tau1;
    j["tau2"] = cfg.tau2;
    j["mild"] = std::vector<int>(sel.mild.begin(), sel.mild.end());
    j["severe"] = std::vector<int>(sel.severe.begin(), sel.severe.end());
    write_text(fs::path(cfg.out_dir) / "selection.json", j.dump(2) + "\n");
    LOG_INFO("select: %zu mild, %zu severe (tau1=%.3f tau2=%.3f)", sel.mild.size(),
             sel.severe.size(), cfg.tau1, cfg.tau2);
    return 0;
}

int cmd_train_ree(const ProjectConfig& cfg, const std::string& specs_path,
                  const std::string& selection_path) {
    fs::path sp = specs_path.empty() ? fs::path(cfg.out_dir) / "specs.jsonl"
                                     : fs::path(specs_path);
    fs::path lp = selection_path.empty() ? fs::path(cfg.out_dir) / "selection.json"
                                         : fs::path(selection_path);
    auto specs = specs_from_jsonl(read_text(sp));
    json sel = json::parse(read_text(lp));
    auto severe = pick_specs(specs, severe_ids_from_selection(sel));
    if (severe.empty()) {
        // small corpora can leave nothing below tau2; fall back to the most
        // severe quartile so the stage still produces an adapter
        fs::path cp = fs::path(cfg.out_dir) / "classes.json";
        if (fs::exists(cp)) {
            json classes = json::parse(read_text(cp));
            std::vector<int> ids;
            for (const auto& v : classes.value("class4", json::array()))
                ids.push_back(v.get<int>());
            severe = pick_specs(specs, ids);
            LOG_INFO("train-ree: threshold selection empty, falling back to the "
                     "severest quartile (%zu specs)", severe.size());
        }
    }
    if (severe.empty())
        throw std::runtime_error("train-ree: severe set is empty — lower tau2");

    std::vector<ImageTensor> corpus = load_corpus(cfg);
    std::vector<ImageTensor> crops = center_crops(corpus, 64);

    ree::PretrainConfig pc = cfg.ree_pretrain;
    pc.seed = cfg.seed;
    pc.embed_dim = cfg.net.cond_dim;
    fs::path base_path = fs::path(cfg.out_dir) / "ree_base";
    ree::EncoderWeights base;
    if (fs::exists(base_path.string() + ".json")) {
        Rng r(cfg.seed);
        base.init(pc.embed_dim, r);
        base.load(base_path.string());
        LOG_INFO("train-ree: reusing existing base %s", base_path.string().c_str());
    } else {
        std::vector<double> chunk_losses;
        LOG_INFO("train-ree: pretraining base (%d iters)", pc.iterations);
        base = ree::pretrain_base(crops, pc, &chunk_losses);
        base.save(base_path.string());
        std::ostringstream ss;
        ss << "chunk,loss\n";
        ss.precision(12);
        for (size_t i = 0; i < chunk_losses.size(); ++i)
            ss << i << ',' << chunk_losses[i] << '\n';
        write_text(fs::path(cfg.out_dir) / "ree_pretrain_log.csv", ss.str());
    }

    ree::FinetuneConfig fc = cfg.ree_finetune;
    fc.seed = cfg.seed;
    auto pairs = ree::build_pairs(crops, severe, Rng::mix(cfg.seed, Rng::fnv1a("pairs")));
    LOG_INFO("train-ree: fine-tuning LoRA rank %d on %zu severe pairs (%d iters)",
             fc.rank, pairs.size(), fc.iterations);
    std::vector<double> losses;
    ree::LoraAdapter adapter = ree::finetune_ree(pairs, base, fc, &losses);
    adapter.save((fs::path(cfg.out_dir) / "ree_lora").string());
    std::ostringstream ss;
    ss << "iteration,loss\n";
    ss.precision(12);
    for (size_t i = 0; i < losses.size(); ++i) ss << i << ',' << losses[i] << '\n';
    write_text(fs::path(cfg.out_dir) / "ree_finetune_log.csv", ss.str());

    double before = ree::pair_embedding_mse(pairs, base, nullptr);
    double after = ree::pair_embedding_mse(pairs, base, &adapter);
    LOG_INFO("train-ree: severe-pair embedding MSE %.6g -> %.6g", before, after);
    return 0;
}

ree::EncoderWeights load_ree_base(const ProjectConfig& cfg, const std::string& path) {
    fs::path bp = path.empty() ? fs::path(cfg.out_dir) / "ree_base" : fs::path(path);
    ree::EncoderWeights base;
    Rng r(cfg.seed);
    base.init(cfg.net.cond_dim, r);
    base.load(bp.string());
    return base;
}

std::optional<ree::LoraAdapter> load_ree_lora(const ProjectConfig& cfg,
                                              const ree::EncoderWeights& base,
                                              const std::string& path) {
    fs::path ap = path.empty() ? fs::path(cfg.out_dir) / "ree_lora" : fs::path(path);
    if (!fs::exists(ap.string() + ".json")) return std::nullopt;
    ree::LoraAdapter adapter;
    Rng r(cfg.seed);
    adapter.init(base, cfg.ree_finetune.rank, r);
    adapter.load(ap.string());
    return adapter;
}

int cmd_train_sr(const ProjectConfig& cfg, const std::string& stage_name,
                 const std::string& init_path, const std::string& ree_path,
                 const std::string& lora_path) {
    training::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    tc.stage = stage_name == "gan" ? training::Stage::gan : training::Stage::psnr;
    if (tc.stage == training::Stage::gan) tc.iterations = cfg.gan_iterations;

    srnet::SrNet net;
    Rng rng = Rng(cfg.seed).fork("srnet");
    net.init(cfg.net, rng);
    if (!init_path.empty()) {
        net.load(init_path);
        LOG_INFO("train-sr: initialized from %s", init_path.c_str());
    }

    ree::EncoderWeights base = load_ree_base(cfg, ree_path);
    std::optional<ree::LoraAdapter> adapter;
    if (cfg.net.use_cfm) adapter = load_ree_lora(cfg, base, lora_path);

    std::vector<ImageTensor> corpus = load_corpus(cfg);
    std::unique_ptr<training::Discriminator> disc;
    if (tc.stage == training::Stage::gan) {
        disc = std::make_unique<training::Discriminator>();
        Rng drng = Rng(cfg.seed).fork("disc");
        disc->init(drng);
    }
    LOG_INFO("train-sr: stage=%s iters=%d batch=%d patch=%d cfm=%d", stage_name.c_str(),
             tc.iterations, tc.batch_size, tc.patch_size, cfg.net.use_cfm ? 1 : 0);
    training::TrainResult result = training::train_stage(
        net, base, adapter ? &*adapter : nullptr, corpus, tc, disc.get());

    std::string model_name = tc.stage == training::Stage::gan ? "sr_gan" : "sr_psnr";
    fs::path mp = fs::path(cfg.out_dir) / model_name;
    net.save(mp.string());
    write_text(mp.string() + ".cfg.json", network_to_json(cfg.net).dump(2) + "\n");
    write_text(fs::path(cfg.out_dir) / (model_name + "_log.csv"), stable_log_csv(result));
    LOG_INFO("train-sr: saved %s", mp.string().c_str());
    return 0;
}

srnet::SrNet load_model(const std::string& base_path, uint64_t seed) {
    srnet::NetworkConfig nc = network_from_json(json::parse(read_text(base_path + ".cfg.json")));
    srnet::SrNet net;
    Rng r = Rng(seed).fork("srnet");
    net.init(nc, r);
    net.load(base_path);
    return net;
}

int cmd_infer(const ProjectConfig& cfg, const std::string& model_path,
              const std::string& ree_path, const std::string& lora_path,
              const std::string& input, const std::string& output) {
    srnet::SrNet net = load_model(model_path, cfg.seed);
    ImageTensor lr = load_png(input);
    nn::Tensor cond;
    if (net.cfg.use_cfm) {
        ree::EncoderWeights base = load_ree_base(cfg, ree_path);
        auto adapter = load_ree_lora(cfg, base, lora_path);
        cond = ree::encode(lr, base, adapter ? &*adapter : nullptr);
    }
    srnet::NetCache cache;
    nn::Tensor sr = srnet::net_forward(srnet::from_image(lr), cond, net, cache);
    save_png(srnet::to_image(sr), output);
    LOG_INFO("infer: %s (%dx%d) -> %s (x%d)", input.c_str(), lr.width, lr.height,
             output.c_str(), net.cfg.scale);
    return 0;
}

int cmd_eval(const ProjectConfig& cfg, const std::string& model_path,
             const std::string& ree_path, const std::string& lora_path,
             const std::string& specs_path, const std::string& report_path,
             const std::string& out_name) {
    fs::path sp = specs_path.empty() ? fs::path(cfg.out_dir) / "specs.jsonl"
                                     : fs::path(specs_path);
    fs::path rp = report_path.empty() ? fs::path(cfg.out_dir) / "report.jsonl"
                                      : fs::path(report_path);
    auto specs = specs_from_jsonl(read_text(sp));
    auto report = tagging::SimilarityReport::from_jsonl(read_text(rp));
    evalkit::Levels levels = evalkit::levels_from_report(specs, report);
    for (auto& [name, lv] : levels)
        if (cfg.eval_specs_per_level > 0 &&
            static_cast<int>(lv.size()) > cfg.eval_specs_per_level)
            lv.resize(static_cast<size_t>(cfg.eval_specs_per_level));

    std::vector<ImageTensor> corpus = load_corpus(cfg);
    // Held-out slice: evaluate on the tail of the corpus.
    std::vector<ImageTensor> held;
    int n_eval = std::min<int>(cfg.eval_images, static_cast<int>(corpus.size()));
    for (int i = static_cast<int>(corpus.size()) - n_eval;
         i < static_cast<int>(corpus.size()); ++i)
        held.push_back(corpus[static_cast<size_t>(i)]);

    ree::EncoderWeights base = load_ree_base(cfg, ree_path);
    std::optional<srnet::SrNet> net;
    std::optional<ree::LoraAdapter> adapter;
    evalkit::BenchmarkOptions opts;
    opts.seed = Rng::mix(cfg.seed, Rng::fnv1a("eval"));
    opts.scale = cfg.net.scale;
    if (!model_path.empty()) {
        net = load_model(model_path, cfg.seed);
        opts.net = &*net;
        opts.scale = net->cfg.scale;
        if (net->cfg.use_cfm) {
            adapter = load_ree_lora(cfg, base, lora_path);
            if (adapter) opts.cond_adapter = &*adapter;
        }
    }
    evalkit::EvalReport er = evalkit::benchmark(held, levels, base, opts);
    write_text(fs::path(cfg.out_dir) / (out_name + ".json"), er.to_json());
    write_text(fs::path(cfg.out_dir) / (out_name + ".csv"), er.to_csv());
    for (const auto& row : er.rows)
        LOG_INFO("eval %-10s psnr_y=%8.4f proxy=%.6g n=%d", row.name.c_str(),
                 row.psnr_y_mean, row.proxy_mean, row.n_images);
    return 0;
}

// ---- gradcheck ------------------------------------------------------------

double fd_relerr(const std::function<double(double)>& f, double x0, double analytic) {
    double eps = 1e-5;
    double num = (f(x0 + eps) - f(x0 - eps)) / (2 * eps);
    double denom = std::max({std::abs(num), std::abs(analytic), 1e-8});
    return std::abs(num - analytic) / denom;
}

int cmd_gradcheck(const ProjectConfig& cfg) {
    int fails = 0;
    Rng rng = Rng(cfg.seed).fork("gradcheck");

    // selective scan: grad of sum(y) w.r.t. random x entries
    {
        int L = 6, D = 4, N = 3;
        ssm::SsmParams p;
        p.init("gc.ssm", D, N, rng);
        nn::Tensor x({L, D});
        for (double& v : x.v) v = rng.uniform(-1, 1);
        ssm::ScanCache cache;
        nn::Tensor y = ssm::selective_scan(x, p, cache);
        nn::Tensor gy(y.shape);
        std::fill(gy.v.begin(), gy.v.end(), 1.0);
        nn::zero_grads(p.params());
        nn::Tensor gx = ssm::selective_scan_backward(gy, p, cache);
        double worst = 0;
        for (int trial = 0; trial < 10; ++trial) {
            size_t idx = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(x.size()) - 1));
            auto f = [&](double v) {
                nn::Tensor xv = x;
                xv.v[idx] = v;
                ssm::ScanCache c2;
                nn::Tensor yv = ssm::selective_scan(xv, p, c2);
                double s = 0;
                for (double e : yv.v) s += e;
                return s;
            };
            worst = std::max(worst, fd_relerr(f, x.v[idx], gx.v[idx]));
        }
        std::printf("gradcheck selective_scan   max rel err %.3e  %s\n", worst,
                    worst < 1e-4 ? "ok" : "FAIL");
        if (worst >= 1e-4) ++fails;
    }

    // tiny SR net end to end
    {
        srnet::NetworkConfig nc;
        nc.n_rssb = 1;
        nc.vimm_per_rssb = 1;
        nc.channels = 6;
        nc.scale = 2;
        nc.state = 3;
        nc.cond_dim = 4;
        nc.use_cfm = true;
        srnet::SrNet net;
        net.init(nc, rng);
        nn::Tensor lr({6, 6, 3}), cond({2, 2, 4});
        for (double& v : lr.v) v = rng.uniform(0.1, 0.9);
        for (double& v : cond.v) v = rng.uniform(-0.5, 0.5);
        srnet::NetCache cache;
        nn::Tensor sr = srnet::net_forward(lr, cond, net, cache);
        nn::Tensor gy(sr.shape);
        for (double& v : gy.v) v = rng.uniform(-1, 1);
        nn::zero_grads(net.params());
        nn::Tensor glr = srnet::net_backward(gy, net, cache);
        double worst = 0;
        for (int trial = 0; trial < 10; ++trial) {
            size_t idx = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(lr.size()) - 1));
            auto f = [&](double v) {
                nn::Tensor lv = lr;
                lv.v[idx] = v;
                srnet::NetCache c2;
                nn::Tensor yv = srnet::net_forward(lv, cond, net, c2);
                double s = 0;
                for (size_t i = 0; i < yv.size(); ++i) s += yv.v[i] * gy.v[i];
                return s;
            };
            worst = std::max(worst, fd_relerr(f, lr.v[idx], glr.v[idx]));
        }
        std::printf("gradcheck net_forward      max rel err %.3e  %s\n", worst,
                    worst < 1e-4 ? "ok" : "FAIL");
        if (worst >= 1e-4) ++fails;
    }

    std::printf("gradcheck: %s\n", fails == 0 ? "all ok" : "FAILURES");
    return fails == 0 ? 0 : 1;
}

// ---- pipeline -------------------------------------------------------------

struct StagePlan {
    std::string name;
    std::vector<fs::path> artifacts;
    std::function<void()> run;
};

int cmd_pipeline(const ProjectConfig& cfg, bool dry_run) {
    fs::path out(cfg.out_dir);
    std::vector<StagePlan> stages;

    stages.push_back({"score",
                      {out / "specs.jsonl", out / "report.jsonl", out / "classes.json"},
                      [&] { cmd_score(cfg, "", cfg.n_specs, "surrogate"); }});
    stages.push_back({"select",
                      {out / "selection.json"},
                      [&] { cmd_select(cfg, ""); }});
    stages.push_back({"train-ree",
                      {out / "ree_base.json", out / "ree_lora.json"},
                      [&] { cmd_train_ree(cfg, "", ""); }});
    stages.push_back({"train-sr-psnr",
                      {out / "sr_psnr.json"},
                      [&] { cmd_train_sr(cfg, "psnr", "", "", ""); }});
    stages.push_back({"train-sr-gan",
                      {out / "sr_gan.json"},
                      [&] {
                          cmd_train_sr(cfg, "gan", (out / "sr_psnr").string(), "", "");
                      }});
    stages.push_back({"eval",
                      {out / "eval.json"},
                      [&] {
                          cmd_eval(cfg, (out / "sr_gan").string(), "", "", "", "",
                                   "eval");
                      }});

    if (dry_run) {
        for (const auto& s : stages) {
            bool done = true;
            for (const auto& a : s.artifacts) done = done && fs::exists(a);
            std::printf("%-14s %s\n", s.name.c_str(), done ? "skip (artifacts exist)" : "run");
        }
        return 0;
    }

    for (const auto& s : stages) {
        bool done = true;
        for (const auto& a : s.artifacts) done = done && fs::exists(a);
        if (done) {
            LOG_INFO("pipeline: stage %s complete, skipping", s.name.c_str());
            continue;
        }
        LOG_INFO("pipeline: running stage %s", s.name.c_str());
        try {
            s.run();
        } catch (const std::exception& e) {
            LOG_ERROR("pipeline: stage %s failed: %s (expected artifacts: %s)",
                      s.name.c_str(), e.what(), s.artifacts.front().string().c_str());
            return 1;
        }
    }
    LOG_INFO("pipeline: complete, artifacts in %s", cfg.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    init_log_level();
    CLI::App app{"DACESR: degradation-aware conditional super-resolution toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "Project config JSON")->check(CLI::ExistingFile);
    uint64_t seed_flag = 0;
    auto* seed_opt = app.add_option("--seed", seed_flag, "Master seed (overrides config)");
    int jobs_flag = 1;
    auto* jobs_opt = app.add_option("--jobs", jobs_flag, "Worker cap (overrides config)");
    std::string out_flag;
    auto* out_opt = app.add_option("--out", out_flag, "Output directory (overrides config)");

    std::string spec_file, tagger_name = "surrogate", report_path, selection_path;
    std::string stage_name = "psnr", init_path, ree_path, lora_path, model_path;
    std::string input_path, output_path, specs_path, eval_out = "eval";
    int sample_n = 0;
    bool dry_run = false;

    auto* deg = app.add_subcommand("degrade", "Apply degradation chains to images");
    deg->add_option("--spec", spec_file, "Spec JSONL to replay")->check(CLI::ExistingFile);
    deg->add_option("--sample", sample_n, "Sample N fresh degradation specs");

    auto* sco = app.add_subcommand("score", "Severity-profile degradations via tag similarity");
    sco->add_option("--specs", spec_file, "Spec JSONL file")->check(CLI::ExistingFile);
    sco->add_option("--sample", sample_n, "Sample N degradation specs");
    sco->add_option("--tagger", tagger_name, "Tagger implementation");

    auto* sel = app.add_subcommand("select", "Threshold a severity report into mild/severe");
    sel->add_option("--report", report_path, "Severity report JSONL");

    auto* tre = app.add_subcommand("train-ree", "Pretrain encoder and LoRA fine-tune on severe pairs");
    tre->add_option("--specs", specs_path, "Spec JSONL file");
    tre->add_option("--selection", selection_path, "selection.json path");

    auto* tsr = app.add_subcommand("train-sr", "Train the SR network");
    tsr->add_option("--stage", stage_name, "psnr | gan")
        ->check(CLI::IsMember({"psnr", "gan"}));
    tsr->add_option("--init", init_path, "Checkpoint base path to initialize from");
    tsr->add_option("--ree", ree_path, "REE base checkpoint base path");
    tsr->add_option("--lora", lora_path, "REE LoRA checkpoint base path");

    auto* inf = app.add_subcommand("infer", "Super-resolve one PNG");
    inf->add_option("--model", model_path, "Model checkpoint base path")->required();
    inf->add_option("--ree", ree_path, "REE base checkpoint base path");
    inf->add_option("--lora", lora_path, "REE LoRA checkpoint base path");
    inf->add_option("--input", input_path, "Input PNG")->required()->check(CLI::ExistingFile);
    inf->add_option("--output", output_path, "Output PNG")->required();

    auto* ev = app.add_subcommand("eval", "Benchmark PSNR-Y and perceptual proxy per level");
    ev->add_option("--model", model_path, "Model base path (omit for bicubic baseline)");
    ev->add_option("--ree", ree_path, "REE base checkpoint base path");
    ev->add_option("--lora", lora_path, "REE LoRA checkpoint base path");
    ev->add_option("--specs", specs_path, "Spec JSONL file");
    ev->add_option("--report", report_path, "Severity report JSONL");
    ev->add_option("--name", eval_out, "Output report basename");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference spot checks");

    auto* pip = app.add_subcommand("pipeline", "score -> select -> train-ree -> train-sr -> eval");
    pip->add_flag("--dry-run", dry_run, "Print the stage plan without side effects");

    CLI11_PARSE(app, argc, argv);

    if (*seed_opt) g.seed = seed_flag;
    if (*jobs_opt) g.jobs = jobs_flag;
    if (*out_opt) g.out = out_flag;

    try {
        ProjectConfig cfg = resolve_config(g);
        if (deg->parsed()) return cmd_degrade(cfg, spec_file, sample_n > 0 ? sample_n : 5);
        if (sco->parsed()) return cmd_score(cfg, spec_file, sample_n, tagger_name);
        if (sel->parsed()) return cmd_select(cfg, report_path);
        if (tre->parsed()) return cmd_train_ree(cfg, specs_path, selection_path);
        if (tsr->parsed()) return cmd_train_sr(cfg, stage_name, init_path, ree_path, lora_path);
        if (inf->parsed()) return cmd_infer(cfg, model_path, ree_path, lora_path, input_path, output_path);
        if (ev->parsed()) return cmd_eval(cfg, model_path, ree_path, lora_path, specs_path, report_path, eval_out);
        if (gc->parsed()) return cmd_gradcheck(cfg);
        if (pip->parsed()) return cmd_pipeline(cfg, dry_run);
    } catch (const std::exception& e) {
        LOG_ERROR("%s", e.what());
        return 1;
    }
    return 0;
}
