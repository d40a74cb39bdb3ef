#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "dmo/config.hpp"
#include "dmo/image_io.hpp"
#include "dmo/metrics.hpp"
#include "dmo/operators.hpp"
#include "dmo/prior.hpp"
#include "dmo/samplers.hpp"
#include "dmo/synth.hpp"

namespace dmo {

struct ReportRow {
    std::string task;
    std::string sampler;
    int nfe = 0;
    int sgld_steps = 0;
    std::uint64_t seed = 0;
    int replica = 0;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    double residual_norm = 0.0;
    double runtime_ms = 0.0;
    std::string image_path;
    bool failed = false;
    std::string error;
};

inline PriorDataset build_dataset(const DatasetSpec& spec) {
    if (spec.synthetic) return synth_dataset(spec.synth, spec.n, spec.shape, spec.seed);
    return load_dataset(spec.path);
}

// Operator randomness (mask, box position, walk kernel) is keyed on the run
// seed unless the config pins one fixed seed for every run.
inline std::unique_ptr<ForwardOperator> build_operator(const OperatorSpec& spec, GridShape shape,
                                                       std::uint64_t run_seed) {
    const std::uint64_t s = spec.fixed_seed ? spec.seed : run_seed;
    if (spec.kind == "inpaint-random") return make_random_inpaint(shape, spec.keep_prob, s);
    if (spec.kind == "inpaint-box") return make_box_inpaint(shape, spec.box_h, spec.box_w, s);
    if (spec.kind == "sr") {
        if (spec.sr_kernel != "bicubic" && spec.sr_kernel != "average")
            throw ConfigError("config: sr_kernel must be 'bicubic' or 'average'");
        return make_downsample(shape, spec.factor,
                               spec.sr_kernel == "bicubic" ? DownsampleKernel::bicubic
                                                           : DownsampleKernel::average);
    }
    if (spec.kind == "blur-gauss") return make_gaussian_blur(shape, spec.ksize, spec.blur_sigma);
    if (spec.kind == "blur-motion") return make_motion_blur(shape, spec.ksize, spec.intensity, s);
    if (spec.kind == "phase-retrieval") return make_phase_retrieval(shape, spec.oversample);
    if (spec.kind == "hdr") return make_hdr(shape, spec.hdr_factor);
    if (spec.kind == "blur-nonlinear")
        return make_nonlinear_blur(shape, spec.ksize, spec.blur_sigma, spec.gain);
    throw ConfigError("config: unknown operator kind '" + spec.kind + "'");
}

namespace detail {

// Static-free worker fan-out: job i writes only slot i, so any thread count
// produces identical results.
inline void run_parallel(std::size_t n_jobs, int threads,
                         const std::function<void(std::size_t)>& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n_jobs);
    if (n_workers <= 1) {
        for (std::size_t i = 0; i < n_jobs; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n_jobs) break;
                fn(i);
            }
        });
    for (auto& t : pool) t.join();
}

inline std::string format_double(double v, const char* fmt) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

}  // namespace detail

inline std::string csv_header() {
    return "task,sampler,nfe,sgld_steps,seed,replica,psnr_db,ssim,residual_norm,runtime_ms,"
           "image_path";
}

inline std::string to_csv_line(const ReportRow& r) {
    std::string line;
    line += r.task + ",";
    line += r.sampler + ",";
    line += std::to_string(r.nfe) + ",";
    line += std::to_string(r.sgld_steps) + ",";
    line += std::to_string(r.seed) + ",";
    line += std::to_string(r.replica) + ",";
    line += detail::format_double(r.psnr_db, "%.6f") + ",";
    line += detail::format_double(r.ssim_val, "%.6f") + ",";
    line += detail::format_double(r.residual_norm, "%.9e") + ",";
    line += detail::format_double(r.runtime_ms, "%.3f") + ",";
    line += r.image_path;
    return line;
}

// Drops the runtime_ms field from every line so reports can be compared
// across runs; timing is the one column that is not deterministic.
inline std::string csv_strip_runtime(const std::string& csv) {
    std::string out;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        const std::size_t eol = csv.find('\n', pos);
        const std::string line =
            csv.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        if (!line.empty()) {
            std::vector<std::string> fields;
            std::size_t f = 0;
            while (true) {
                const std::size_t c = line.find(',', f);
                fields.push_back(line.substr(f, c == std::string::npos ? std::string::npos : c - f));
                if (c == std::string::npos) break;
                f = c + 1;
            }
            for (std::size_t k = 0; k < fields.size(); ++k) {
                if (k == 9) continue;
                if (!out.empty() && out.back() != '\n') out += ",";
                out += fields[k];
            }
            out += "\n";
        }
        if (eol == std::string::npos) break;
        pos = eol + 1;
    }
    return out;
}

inline void write_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
    out << csv_header() << "\n";
    for (const auto& r : rows) out << to_csv_line(r) << "\n";
    if (!out) throw std::runtime_error("write_csv: write failed");
}

inline std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg) {
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* root = std::getenv("DMO_OUT_ROOT"); root && *root)
        return std::filesystem::path(root) / cfg.task;
    return std::filesystem::path("out") / cfg.task;
}

// Runs every (seed, replica) job of the config: build operator, synthesize the
// measurement, run the sampler, score against the ground-truth dataset item,
// persist images. A failing job yields a nan row and the run continues.
inline std::vector<ReportRow> run_experiment(const ExperimentConfig& cfg,
                                             bool write_outputs = true) {
    cfg.validate();
    const PriorDataset ds = build_dataset(cfg.dataset);
    const std::filesystem::path out_dir = resolve_out_dir(cfg);
    if (write_outputs) {
        std::filesystem::create_directories(out_dir);
        std::ofstream echo(out_dir / "config.json");
        echo << to_json(cfg).dump(2) << "\n";
    }

    // Per-seed context is prepared sequentially so operator construction and
    // measurement noise never depend on scheduling.
    struct SeedContext {
        std::uint64_t seed = 0;
        std::unique_ptr<ForwardOperator> op;
        Measurement y;
        const ImageGrid* x_true = nullptr;
        std::string error;  // non-empty: setup failed, all replicas report it
    };
    std::vector<SeedContext> contexts;
    contexts.reserve(cfg.seeds.size());
    for (std::uint64_t seed : cfg.seeds) {
        SeedContext sc;
        sc.seed = seed;
        try {
            sc.op = build_operator(cfg.op, cfg.dataset.shape, seed);
            sc.x_true = &ds.item(static_cast<int>(seed % static_cast<std::uint64_t>(ds.size())));
            RngStream noise(seed, StreamId{0, 0, purpose::measurement_noise});
            sc.y = measure(*sc.op, *sc.x_true, cfg.op.noise_sigma, noise, seed);
            if (write_outputs && cfg.save_measurement_files) {
                const auto mdir = out_dir / "measurements";
                std::filesystem::create_directories(mdir);
                save_measurement(mdir / (std::to_string(seed) + ".meas"), sc.y);
            }
        } catch (const std::exception& e) {
            sc.error = e.what();
        }
        contexts.push_back(std::move(sc));
    }

    const bool allow_rot = cfg.op.kind == "phase-retrieval";
    const std::size_t jobs = contexts.size() * static_cast<std::size_t>(cfg.best_of);
    std::vector<ReportRow> rows(jobs);

    detail::run_parallel(jobs, cfg.threads, [&](std::size_t i) {
        const SeedContext& sc = contexts[i / static_cast<std::size_t>(cfg.best_of)];
        const int replica = static_cast<int>(i % static_cast<std::size_t>(cfg.best_of));
        ReportRow row;
        row.task = cfg.task;
        row.sampler = to_string(cfg.sampler);
        row.nfe = cfg.schedule.n_steps;
        row.sgld_steps = cfg.mo.n_sgld;
        row.seed = sc.seed;
        row.replica = replica;
        if (!sc.error.empty()) {
            row.failed = true;
            row.error = sc.error;
            row.psnr_db = row.ssim_val = row.residual_norm = row.runtime_ms =
                std::numeric_limits<double>::quiet_NaN();
            rows[i] = std::move(row);
            return;
        }
        try {
            SamplerRun run;
            run.schedule = cfg.schedule;
            run.mo = cfg.mo;
            run.kind = cfg.sampler;
            run.guidance_scale = cfg.guidance_scale;
            run.mu_optimizer = cfg.mu_optimizer;
            run.mu_lr = cfg.mu_lr;
            run.per_step_init = cfg.per_step_init;
            run.seed = sc.seed;
            run.replica = static_cast<std::uint64_t>(replica);
            const auto t0 = std::chrono::steady_clock::now();
            SamplerResult res = run_sampler(ds, *sc.op, sc.y, run);
            const auto t1 = std::chrono::steady_clock::now();
            row.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

            bool corrected = false;
            row.psnr_db = ambiguity_psnr(res.x0, *sc.x_true, allow_rot, &corrected);
            // SSIM follows the orientation the PSNR picked
            const ImageGrid scored = corrected ? rot180(res.x0) : res.x0;
            row.ssim_val = ssim(scored, *sc.x_true);
            std::vector<double> ax = sc.op->forward(res.x0);
            double rn2 = 0.0;
            for (std::size_t k = 0; k < ax.size(); ++k) {
                const double d = ax[k] - sc.y.values[k];
                rn2 += d * d;
            }
            row.residual_norm = std::sqrt(rn2);
            if (write_outputs) {
                const auto img_dir =
                    out_dir / "images" / std::to_string(sc.seed);
                std::filesystem::create_directories(img_dir);
                const std::string stem = std::to_string(replica);
                save_image(img_dir / (stem + ".pgm"), res.x0);
                if (cfg.save_raw_dump) save_raw(img_dir / (stem + ".f64"), res.x0);
                row.image_path = "images/" + std::to_string(sc.seed) + "/" + stem + ".pgm";
            }
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            row.psnr_db = row.ssim_val = row.residual_norm = row.runtime_ms =
                std::numeric_limits<double>::quiet_NaN();
        }
        rows[i] = std::move(row);
    });

    if (write_outputs) write_csv(out_dir / "results.csv", rows);
    for (const auto& r : rows)
        if (r.failed)
            std::cerr << "run failed (seed " << r.seed << ", replica " << r.replica
                      << "): " << r.error << "\n";
    return rows;
}

// One run_experiment per NFE value, all sharing the config's seeds.
inline std::vector<ReportRow> nfe_sweep(const ExperimentConfig& cfg, const std::vector<int>& nfes,
                                        bool write_outputs = true) {
    if (nfes.empty()) throw ConfigError("nfe_sweep: empty NFE list");
    std::vector<ReportRow> all;
    for (int nfe : nfes) {
        ExperimentConfig c = cfg;
        c.schedule.n_steps = nfe;
        c.out_dir = (resolve_out_dir(cfg) / ("nfe-" + std::to_string(nfe))).string();
        auto rows = run_experiment(c, write_outputs);
        all.insert(all.end(), rows.begin(), rows.end());
    }
    if (write_outputs) write_csv(resolve_out_dir(cfg) / "sweep.csv", all);
    return all;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Per-seed best-replica PSNR values (nan rows dropped).
inline std::vector<double> best_psnr_per_seed(const std::vector<ReportRow>& rows) {
    std::vector<double> out;
    std::uint64_t cur = 0;
    bool have = false;
    double best = 0.0;
    auto flush = [&] {
        if (have) out.push_back(best);
        have = false;
    };
    for (const auto& r : rows) {
        if (r.failed || std::isnan(r.psnr_db)) continue;
        if (have && r.seed != cur) flush();
        if (!have) {
            cur = r.seed;
            best = r.psnr_db;
            have = true;
        } else {
            best = std::max(best, r.psnr_db);
        }
    }
    flush();
    return out;
}

}  // namespace dmo
