#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmo/grid.hpp"
#include "dmo/mo.hpp"
#include "dmo/samplers.hpp"
#include "dmo/schedule.hpp"
#include "dmo/synth.hpp"

namespace dmo {

using ordered_json = nlohmann::ordered_json;

// Configuration mistakes get their own type so the CLI can map them to a
// distinct exit code.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetSpec {
    bool synthetic = true;
    SynthKind synth = SynthKind::blobs;
    int n = 16;
    GridShape shape{32, 32, 1};
    std::uint64_t seed = 11;
    std::string path;  // directory of images when !synthetic
};

struct OperatorSpec {
    std::string kind = "inpaint-random";
    double keep_prob = 0.3;        // inpaint-random
    int box_h = 16, box_w = 16;    // inpaint-box
    int factor = 4;                // sr
    std::string sr_kernel = "bicubic";
    int ksize = 9;                 // blur family
    double blur_sigma = 1.5;
    double intensity = 0.5;        // blur-motion
    double oversample = 2.0;       // phase-retrieval
    double hdr_factor = 2.0;       // hdr
    double gain = 2.0;             // blur-nonlinear
    double noise_sigma = 0.05;
    bool fixed_seed = false;       // default: mask/kernel seed derives from the run seed
    std::uint64_t seed = 0;
};

struct ExperimentConfig {
    std::string task = "inpaint-random";
    std::string scale = "desk";  // desk | paper
    DatasetSpec dataset{};
    OperatorSpec op{};
    EdmSchedule schedule{};
    MoConfig mo{};
    SamplerKind sampler = SamplerKind::dps_mo;
    double guidance_scale = 0.3;
    MuOptimizer mu_optimizer = MuOptimizer::adam;
    double mu_lr = 0.1;
    bool per_step_init = true;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4};
    int best_of = 1;
    int threads = 1;
    std::string out_dir;  // empty: resolved from DMO_OUT_ROOT or ./out
    bool save_raw_dump = true;
    bool save_measurement_files = false;

    void validate() const {
        if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
        if (best_of < 1) throw ConfigError("config: best_of < 1");
        if (threads < 0) throw ConfigError("config: threads < 0");
        if (dataset.n < 1) throw ConfigError("config: dataset n < 1");
        if (!dataset.shape.valid()) throw ConfigError("config: bad dataset shape");
        schedule.validate();
        mo.validate();
    }
};

inline SamplerKind sampler_kind_from_string(const std::string& s) {
    if (s == "dps-mo") return SamplerKind::dps_mo;
    if (s == "red-diff-mo") return SamplerKind::red_diff_mo;
    if (s == "dps") return SamplerKind::dps;
    throw ConfigError("config: unknown sampler '" + s + "'");
}

inline std::string to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::dps_mo: return "dps-mo";
        case SamplerKind::red_diff_mo: return "red-diff-mo";
        case SamplerKind::dps: return "dps";
    }
    return "?";
}

inline const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names = {
        "sr4",           "inpaint-box",      "inpaint-random",
        "deblur-gauss",  "deblur-motion",    "phase-retrieval",
        "deblur-nonlinear", "hdr",           "phase-retrieval-imagenet",
    };
    return names;
}

// Published hyperparameter rows for the eight tasks (plus the alternate
// phase-retrieval tuning), with geometry and inner-loop budgets scaled down in
// the desk profile so the whole suite runs in seconds on one core.
inline void apply_task_preset(ExperimentConfig& cfg, const std::string& task,
                              const std::string& scale) {
    if (scale != "desk" && scale != "paper")
        throw ConfigError("config: scale must be 'desk' or 'paper'");
    const bool paper = scale == "paper";
    cfg.task = task;
    cfg.scale = scale;
    cfg.dataset.shape = paper ? GridShape{256, 256, 3} : GridShape{32, 32, 1};
    cfg.schedule.sigma_max = 80.0;
    cfg.schedule.rho = 7.0;
    cfg.schedule.terminal_zero = true;
    cfg.mo.base_eta = 5e-5;
    cfg.mo.tau = 0.01;
    cfg.best_of = 1;
    cfg.sampler = SamplerKind::dps_mo;

    auto set = [&](const char* op_kind, int nfe, double sigma_min, int sgld_paper, int sgld_desk,
                   SynthKind synth, int best) {
        cfg.op.kind = op_kind;
        cfg.schedule.n_steps = nfe;
        cfg.schedule.sigma_min = sigma_min;
        cfg.mo.n_sgld = paper ? sgld_paper : sgld_desk;
        cfg.dataset.synth = synth;
        cfg.best_of = best;
    };

    if (task == "sr4") {
        set("sr", 50, 0.01, 150, 100, SynthKind::digits_like, 1);
        cfg.op.factor = 4;
        cfg.op.sr_kernel = "bicubic";
    } else if (task == "inpaint-box") {
        set("inpaint-box", 50, 0.05, 100, 100, SynthKind::digits_like, 1);
        cfg.op.box_h = cfg.op.box_w = paper ? 128 : 16;
    } else if (task == "inpaint-random") {
        set("inpaint-random", 50, 0.05, 150, 100, SynthKind::blobs, 1);
        cfg.op.keep_prob = 0.3;
    } else if (task == "deblur-gauss") {
        set("blur-gauss", 50, 0.002, 50, 50, SynthKind::digits_like, 1);
        cfg.op.ksize = paper ? 61 : 9;
        cfg.op.blur_sigma = paper ? 3.0 : 1.5;
    } else if (task == "deblur-motion") {
        set("blur-motion", 50, 0.02, 100, 100, SynthKind::digits_like, 1);
        cfg.op.ksize = paper ? 61 : 9;
        cfg.op.intensity = 0.5;
    } else if (task == "phase-retrieval" || task == "phase-retrieval-imagenet") {
        set("phase-retrieval", 100, 0.05, 500, 150, SynthKind::blobs, 4);
        cfg.op.oversample = 2.0;
        if (task == "phase-retrieval-imagenet") cfg.mo.base_eta = 5e-4;
    } else if (task == "deblur-nonlinear") {
        set("blur-nonlinear", 100, 0.05, 200, 100, SynthKind::blobs, 4);
        cfg.op.ksize = paper ? 61 : 9;
        cfg.op.blur_sigma = paper ? 3.0 : 1.5;
        cfg.op.gain = 2.0;
    } else if (task == "hdr") {
        set("hdr", 100, 0.02, 500, 150, SynthKind::blobs, 4);
        cfg.op.hdr_factor = 2.0;
    } else {
        throw ConfigError("config: unknown task '" + task + "'");
    }
    cfg.op.noise_sigma = 0.05;
}

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const char* where) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(std::string("config: unknown key '") + key + "' in " + where);
    }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// Applies a parsed JSON document on top of `cfg`. `task`/`scale` resolve their
// preset first so explicit keys in the same document override preset values.
inline void apply_json(ExperimentConfig& cfg, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    detail::check_keys(j,
                       {"task", "scale", "dataset", "operator", "schedule", "mo", "sampler",
                        "seeds", "best_of", "threads", "out_dir", "save_raw",
                        "save_measurements"},
                       "top level");
    {
        std::string task = j.value("task", cfg.task);
        std::string scale = j.value("scale", cfg.scale);
        apply_task_preset(cfg, task, scale);
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::check_keys(d, {"kind", "synth", "n", "height", "width", "channels", "seed", "path"},
                           "dataset");
        if (d.contains("kind")) {
            const std::string k = d.at("kind").get<std::string>();
            if (k == "synthetic")
                cfg.dataset.synthetic = true;
            else if (k == "directory")
                cfg.dataset.synthetic = false;
            else
                throw ConfigError("config: dataset.kind must be 'synthetic' or 'directory'");
        }
        if (d.contains("synth")) cfg.dataset.synth = synth_kind_from_string(d.at("synth"));
        detail::maybe(d, "n", cfg.dataset.n);
        detail::maybe(d, "height", cfg.dataset.shape.height);
        detail::maybe(d, "width", cfg.dataset.shape.width);
        detail::maybe(d, "channels", cfg.dataset.shape.channels);
        detail::maybe(d, "seed", cfg.dataset.seed);
        detail::maybe(d, "path", cfg.dataset.path);
        if (!cfg.dataset.synthetic && cfg.dataset.path.empty())
            throw ConfigError("config: dataset.kind 'directory' needs dataset.path");
    }
    if (j.contains("operator")) {
        const auto& o = j.at("operator");
        detail::check_keys(o,
                           {"kind", "keep_prob", "box_h", "box_w", "factor", "sr_kernel", "ksize",
                            "blur_sigma", "intensity", "oversample", "hdr_factor", "gain",
                            "noise_sigma", "seed_mode", "seed"},
                           "operator");
        detail::maybe(o, "kind", cfg.op.kind);
        detail::maybe(o, "keep_prob", cfg.op.keep_prob);
        detail::maybe(o, "box_h", cfg.op.box_h);
        detail::maybe(o, "box_w", cfg.op.box_w);
        detail::maybe(o, "factor", cfg.op.factor);
        detail::maybe(o, "sr_kernel", cfg.op.sr_kernel);
        detail::maybe(o, "ksize", cfg.op.ksize);
        detail::maybe(o, "blur_sigma", cfg.op.blur_sigma);
        detail::maybe(o, "intensity", cfg.op.intensity);
        detail::maybe(o, "oversample", cfg.op.oversample);
        detail::maybe(o, "hdr_factor", cfg.op.hdr_factor);
        detail::maybe(o, "gain", cfg.op.gain);
        detail::maybe(o, "noise_sigma", cfg.op.noise_sigma);
        if (o.contains("seed_mode")) {
            const std::string m = o.at("seed_mode").get<std::string>();
            if (m == "per-run")
                cfg.op.fixed_seed = false;
            else if (m == "fixed")
                cfg.op.fixed_seed = true;
            else
                throw ConfigError("config: operator.seed_mode must be 'per-run' or 'fixed'");
        }
        detail::maybe(o, "seed", cfg.op.seed);
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        detail::check_keys(s, {"nfe", "sigma_max", "sigma_min", "rho", "terminal_zero"},
                           "schedule");
        detail::maybe(s, "nfe", cfg.schedule.n_steps);
        detail::maybe(s, "sigma_max", cfg.schedule.sigma_max);
        detail::maybe(s, "sigma_min", cfg.schedule.sigma_min);
        detail::maybe(s, "rho", cfg.schedule.rho);
        detail::maybe(s, "terminal_zero", cfg.schedule.terminal_zero);
    }
    if (j.contains("mo")) {
        const auto& m = j.at("mo");
        detail::check_keys(m,
                           {"sgld_steps", "sgld_lr", "tau", "optimizer", "adam_lr", "decay_floor",
                            "decay_power"},
                           "mo");
        detail::maybe(m, "sgld_steps", cfg.mo.n_sgld);
        detail::maybe(m, "sgld_lr", cfg.mo.base_eta);
        detail::maybe(m, "tau", cfg.mo.tau);
        if (m.contains("optimizer")) {
            const std::string o = m.at("optimizer").get<std::string>();
            if (o == "sgld")
                cfg.mo.optimizer = InnerOptimizer::sgld;
            else if (o == "adam")
                cfg.mo.optimizer = InnerOptimizer::adam;
            else
                throw ConfigError("config: mo.optimizer must be 'sgld' or 'adam'");
        }
        detail::maybe(m, "adam_lr", cfg.mo.adam_lr);
        detail::maybe(m, "decay_floor", cfg.mo.decay.floor_ratio);
        detail::maybe(m, "decay_power", cfg.mo.decay.power);
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        detail::check_keys(
            s, {"kind", "guidance_scale", "mu_optimizer", "mu_lr", "per_step_init"}, "sampler");
        if (s.contains("kind")) cfg.sampler = sampler_kind_from_string(s.at("kind"));
        detail::maybe(s, "guidance_scale", cfg.guidance_scale);
        if (s.contains("mu_optimizer")) {
            const std::string o = s.at("mu_optimizer").get<std::string>();
            if (o == "adam")
                cfg.mu_optimizer = MuOptimizer::adam;
            else if (o == "sgd")
                cfg.mu_optimizer = MuOptimizer::sgd;
            else
                throw ConfigError("config: sampler.mu_optimizer must be 'adam' or 'sgd'");
        }
        detail::maybe(s, "mu_lr", cfg.mu_lr);
        detail::maybe(s, "per_step_init", cfg.per_step_init);
    }
    detail::maybe(j, "seeds", cfg.seeds);
    detail::maybe(j, "best_of", cfg.best_of);
    detail::maybe(j, "threads", cfg.threads);
    detail::maybe(j, "out_dir", cfg.out_dir);
    detail::maybe(j, "save_raw", cfg.save_raw_dump);
    detail::maybe(j, "save_measurements", cfg.save_measurement_files);
    cfg.validate();
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    apply_json(cfg, j);
    return cfg;
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

// Full resolved echo; feeding this back through config_from_json reproduces
// the identical configuration.
inline ordered_json to_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["task"] = cfg.task;
    j["scale"] = cfg.scale;
    ordered_json d;
    d["kind"] = cfg.dataset.synthetic ? "synthetic" : "directory";
    d["synth"] = to_string(cfg.dataset.synth);
    d["n"] = cfg.dataset.n;
    d["height"] = cfg.dataset.shape.height;
    d["width"] = cfg.dataset.shape.width;
    d["channels"] = cfg.dataset.shape.channels;
    d["seed"] = cfg.dataset.seed;
    if (!cfg.dataset.synthetic) d["path"] = cfg.dataset.path;
    j["dataset"] = d;
    ordered_json o;
    o["kind"] = cfg.op.kind;
    o["keep_prob"] = cfg.op.keep_prob;
    o["box_h"] = cfg.op.box_h;
    o["box_w"] = cfg.op.box_w;
    o["factor"] = cfg.op.factor;
    o["sr_kernel"] = cfg.op.sr_kernel;
    o["ksize"] = cfg.op.ksize;
    o["blur_sigma"] = cfg.op.blur_sigma;
    o["intensity"] = cfg.op.intensity;
    o["oversample"] = cfg.op.oversample;
    o["hdr_factor"] = cfg.op.hdr_factor;
    o["gain"] = cfg.op.gain;
    o["noise_sigma"] = cfg.op.noise_sigma;
    o["seed_mode"] = cfg.op.fixed_seed ? "fixed" : "per-run";
    o["seed"] = cfg.op.seed;
    j["operator"] = o;
    ordered_json s;
    s["nfe"] = cfg.schedule.n_steps;
    s["sigma_max"] = cfg.schedule.sigma_max;
    s["sigma_min"] = cfg.schedule.sigma_min;
    s["rho"] = cfg.schedule.rho;
    s["terminal_zero"] = cfg.schedule.terminal_zero;
    j["schedule"] = s;
    ordered_json m;
    m["sgld_steps"] = cfg.mo.n_sgld;
    m["sgld_lr"] = cfg.mo.base_eta;
    m["tau"] = cfg.mo.tau;
    m["optimizer"] = cfg.mo.optimizer == InnerOptimizer::sgld ? "sgld" : "adam";
    m["adam_lr"] = cfg.mo.adam_lr;
    m["decay_floor"] = cfg.mo.decay.floor_ratio;
    m["decay_power"] = cfg.mo.decay.power;
    j["mo"] = m;
    ordered_json sp;
    sp["kind"] = to_string(cfg.sampler);
    sp["guidance_scale"] = cfg.guidance_scale;
    sp["mu_optimizer"] = cfg.mu_optimizer == MuOptimizer::adam ? "adam" : "sgd";
    sp["mu_lr"] = cfg.mu_lr;
    sp["per_step_init"] = cfg.per_step_init;
    j["sampler"] = sp;
    j["seeds"] = cfg.seeds;
    j["best_of"] = cfg.best_of;
    j["threads"] = cfg.threads;
    j["out_dir"] = cfg.out_dir;
    j["save_raw"] = cfg.save_raw_dump;
    j["save_measurements"] = cfg.save_measurement_files;
    return j;
}

}  // namespace dmo
