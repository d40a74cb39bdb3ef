// Command-line front end: run / sweep / ablate-optimizer / ablate-init /
// validate. Flags override config-file keys, which override task presets.
// Exit codes: 0 success, 1 config error, 2 every row failed, 3 some rows
// failed.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dmo/dmo.hpp"

namespace {

using dmo::ExperimentConfig;
using dmo::ReportRow;

struct CommonFlags {
    std::string config_path;
    std::optional<std::string> task;
    std::optional<std::string> scale;
    std::optional<std::string> sampler;
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds;
    std::optional<int> nfe;
    std::optional<int> sgld_steps;
    std::optional<double> sgld_lr;
    std::optional<double> tau;
    std::optional<std::string> optimizer;
    std::optional<double> guidance_scale;
    std::optional<std::string> mu_optimizer;
    std::optional<double> mu_lr;
    std::optional<bool> per_step_init;
    std::optional<int> best_of;
    std::optional<int> threads;
    std::optional<int> dataset_n;
    std::optional<int> size;
    std::optional<std::string> dataset_dir;
    std::string out_dir;
    bool save_measurements = false;
    bool no_raw = false;
    bool print_config = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file");
    cmd->add_option("--task", f.task,
                    "task preset (resets operator/schedule/inner-loop to the preset row)");
    cmd->add_option("--scale", f.scale, "preset profile: desk | paper");
    cmd->add_option("--sampler", f.sampler, "dps-mo | red-diff-mo | dps");
    auto* seed = cmd->add_option("--seed", f.seed, "replace the seed list with this one seed");
    cmd->add_option("--seeds", f.seeds, "comma-separated seed list")
        ->delimiter(',')
        ->excludes(seed);
    cmd->add_option("--nfe", f.nfe, "denoiser budget (schedule steps)");
    cmd->add_option("--sgld-steps", f.sgld_steps, "inner-loop iterations per outer step");
    cmd->add_option("--sgld-lr", f.sgld_lr, "inner-loop base learning rate");
    cmd->add_option("--tau", f.tau, "data-fit temperature");
    cmd->add_option("--optimizer", f.optimizer, "inner loop: sgld | adam");
    cmd->add_option("--guidance-scale", f.guidance_scale, "dps baseline guidance step");
    cmd->add_option("--mu-optimizer", f.mu_optimizer, "red-diff mean update: adam | sgd");
    cmd->add_option("--mu-lr", f.mu_lr, "red-diff mean learning rate");
    cmd->add_option("--per-step-init", f.per_step_init,
                    "true: fresh inner chain per outer step; false: carry one solution");
    cmd->add_option("--best-of", f.best_of, "independent replicas per seed, best kept");
    cmd->add_option("--threads", f.threads, "worker threads (0 = hardware)");
    cmd->add_option("--dataset-n", f.dataset_n, "synthetic dataset size");
    cmd->add_option("--size", f.size, "synthetic image edge length");
    cmd->add_option("--dataset-dir", f.dataset_dir, "load the prior set from a directory");
    cmd->add_option("--out", f.out_dir, "output directory (default: $DMO_OUT_ROOT/<task>)");
    cmd->add_flag("--save-measurements", f.save_measurements, "persist measurement vectors");
    cmd->add_flag("--no-raw", f.no_raw, "skip float64 image dumps");
    cmd->add_flag("--print-config", f.print_config, "echo the resolved config and exit");
}

ExperimentConfig resolve(const CommonFlags& f) {
    ExperimentConfig cfg;
    if (!f.config_path.empty()) cfg = dmo::load_config_file(f.config_path);
    if (f.task || f.scale)
        dmo::apply_task_preset(cfg, f.task.value_or(cfg.task), f.scale.value_or(cfg.scale));
    if (f.sampler) cfg.sampler = dmo::sampler_kind_from_string(*f.sampler);
    if (f.seed) cfg.seeds = {*f.seed};
    if (!f.seeds.empty()) cfg.seeds = f.seeds;
    if (f.nfe) cfg.schedule.n_steps = *f.nfe;
    if (f.sgld_steps) cfg.mo.n_sgld = *f.sgld_steps;
    if (f.sgld_lr) cfg.mo.base_eta = *f.sgld_lr;
    if (f.tau) cfg.mo.tau = *f.tau;
    if (f.optimizer) {
        if (*f.optimizer == "sgld")
            cfg.mo.optimizer = dmo::InnerOptimizer::sgld;
        else if (*f.optimizer == "adam")
            cfg.mo.optimizer = dmo::InnerOptimizer::adam;
        else
            throw dmo::ConfigError("config: --optimizer must be 'sgld' or 'adam'");
    }
    if (f.guidance_scale) cfg.guidance_scale = *f.guidance_scale;
    if (f.mu_optimizer) {
        if (*f.mu_optimizer == "adam")
            cfg.mu_optimizer = dmo::MuOptimizer::adam;
        else if (*f.mu_optimizer == "sgd")
            cfg.mu_optimizer = dmo::MuOptimizer::sgd;
        else
            throw dmo::ConfigError("config: --mu-optimizer must be 'adam' or 'sgd'");
    }
    if (f.mu_lr) cfg.mu_lr = *f.mu_lr;
    if (f.per_step_init) cfg.per_step_init = *f.per_step_init;
    if (f.best_of) cfg.best_of = *f.best_of;
    if (f.threads) cfg.threads = *f.threads;
    if (f.dataset_n) cfg.dataset.n = *f.dataset_n;
    if (f.size) {
        cfg.dataset.shape.height = *f.size;
        cfg.dataset.shape.width = *f.size;
    }
    if (f.dataset_dir) {
        cfg.dataset.synthetic = false;
        cfg.dataset.path = *f.dataset_dir;
    }
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (f.save_measurements) cfg.save_measurement_files = true;
    if (f.no_raw) cfg.save_raw_dump = false;
    cfg.validate();
    return cfg;
}

int exit_code_for(const std::vector<ReportRow>& rows) {
    std::size_t failed = 0;
    for (const auto& r : rows)
        if (r.failed) ++failed;
    if (failed == 0) return 0;
    return failed == rows.size() ? 2 : 3;
}

void print_summary(const std::vector<ReportRow>& rows, const std::filesystem::path& out) {
    std::size_t failed = 0;
    for (const auto& r : rows)
        if (r.failed) ++failed;
    std::cout << "rows: " << rows.size() << "  failed: " << failed;
    const auto best = dmo::best_psnr_per_seed(rows);
    if (!best.empty()) std::cout << "  median psnr: " << dmo::median(best) << " dB";
    std::cout << "  out: " << out.string() << "\n";
}

int cmd_run(const CommonFlags& f) {
    ExperimentConfig cfg = resolve(f);
    if (f.print_config) {
        std::cout << dmo::to_json(cfg).dump(2) << "\n";
        return 0;
    }
    const auto rows = dmo::run_experiment(cfg);
    print_summary(rows, dmo::resolve_out_dir(cfg));
    return exit_code_for(rows);
}

int cmd_sweep(const CommonFlags& f, const std::vector<int>& nfes) {
    ExperimentConfig cfg = resolve(f);
    if (f.print_config) {
        std::cout << dmo::to_json(cfg).dump(2) << "\n";
        return 0;
    }
    const auto rows = dmo::nfe_sweep(cfg, nfes);
    for (int nfe : nfes) {
        std::vector<ReportRow> slice;
        for (const auto& r : rows)
            if (r.nfe == nfe && !r.failed) slice.push_back(r);
        std::cout << "nfe " << nfe << ": ";
        const auto best = dmo::best_psnr_per_seed(slice);
        if (best.empty())
            std::cout << "all rows failed\n";
        else
            std::cout << "median psnr " << dmo::median(best) << " dB\n";
    }
    print_summary(rows, dmo::resolve_out_dir(cfg));
    return exit_code_for(rows);
}

// Two runs differing in exactly one switch; per-arm report trees plus a merged
// CSV and a one-line verdict.
int run_arms(const ExperimentConfig& base, const char* arm_a, const char* arm_b,
             const std::function<void(ExperimentConfig&, bool)>& tweak) {
    const std::filesystem::path root = dmo::resolve_out_dir(base);
    std::vector<ReportRow> all;
    double med[2] = {0.0, 0.0};
    bool have[2] = {false, false};
    const char* names[2] = {arm_a, arm_b};
    for (int arm = 0; arm < 2; ++arm) {
        ExperimentConfig cfg = base;
        tweak(cfg, arm == 1);
        cfg.out_dir = (root / names[arm]).string();
        const auto rows = dmo::run_experiment(cfg);
        const auto best = dmo::best_psnr_per_seed(rows);
        if (!best.empty()) {
            med[arm] = dmo::median(best);
            have[arm] = true;
        }
        std::cout << names[arm] << ": ";
        if (have[arm])
            std::cout << "median psnr " << med[arm] << " dB\n";
        else
            std::cout << "all rows failed\n";
        all.insert(all.end(), rows.begin(), rows.end());
    }
    dmo::write_csv(root / "ablation.csv", all);
    if (have[0] && have[1])
        std::cout << "verdict: " << (med[0] > med[1] ? arm_a : med[1] > med[0] ? arm_b : "tie")
                  << (med[0] == med[1] ? "" : " ahead") << " ("
                  << med[0] << " vs " << med[1] << " dB)\n";
    return exit_code_for(all);
}

int cmd_ablate_optimizer(const CommonFlags& f) {
    ExperimentConfig cfg = resolve(f);
    if (f.print_config) {
        std::cout << dmo::to_json(cfg).dump(2) << "\n";
        return 0;
    }
    return run_arms(cfg, "sgld", "adam", [](ExperimentConfig& c, bool second) {
        c.mo.optimizer = second ? dmo::InnerOptimizer::adam : dmo::InnerOptimizer::sgld;
    });
}

int cmd_ablate_init(const CommonFlags& f) {
    ExperimentConfig cfg = resolve(f);
    if (f.print_config) {
        std::cout << dmo::to_json(cfg).dump(2) << "\n";
        return 0;
    }
    return run_arms(cfg, "per-step", "same-solution",
                    [](ExperimentConfig& c, bool second) { c.per_step_init = !second; });
}

int cmd_validate(const CommonFlags& f) {
    ExperimentConfig cfg = resolve(f);
    if (f.print_config) {
        std::cout << dmo::to_json(cfg).dump(2) << "\n";
        return 0;
    }
    return dmo::run_validation(cfg, std::cout) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"measurement-optimization diffusion solver"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::vector<int> nfes;

    auto* run = app.add_subcommand("run", "run one experiment");
    add_common(run, flags);
    auto* sweep = app.add_subcommand("sweep", "run the config once per NFE value");
    add_common(sweep, flags);
    sweep->add_option("--nfes", nfes, "comma-separated NFE list")->delimiter(',')->required();
    auto* abl_opt =
        app.add_subcommand("ablate-optimizer", "paired inner-loop runs: sgld vs adam");
    add_common(abl_opt, flags);
    auto* abl_init =
        app.add_subcommand("ablate-init", "paired runs: per-step init vs one carried solution");
    add_common(abl_init, flags);
    auto* validate = app.add_subcommand("validate", "run the invariant battery on the config");
    add_common(validate, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) return cmd_run(flags);
        if (sweep->parsed()) return cmd_sweep(flags, nfes);
        if (abl_opt->parsed()) return cmd_ablate_optimizer(flags);
        if (abl_init->parsed()) return cmd_ablate_init(flags);
        if (validate->parsed()) return cmd_validate(flags);
    } catch (const dmo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
