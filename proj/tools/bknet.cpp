// bknet: basis-kernel CNN compression pipeline.
//
// Subcommands: pretrain, compress, decompose, retrain, prune, shrink,
// finetune, eval, bench, report. Exit codes: 0 success, 1 phase failure,
// 2 I/O or config error.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "bknet/config.hpp"
#include "bknet/pipeline.hpp"
#include "bknet/serialize.hpp"

using namespace bknet;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string model_path;
    std::string out_dir;
    long long seed = -1;
    int threads = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config) {
    auto* opt = cmd->add_option("--config", args.config_path, "pipeline config (JSON)");
    if (needs_config) opt->required();
    cmd->add_option("--model", args.model_path, "model file (BKNET v1)");
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", args.seed, "RNG seed (overrides config)");
    cmd->add_option("--threads", args.threads,
                    "worker threads, 0 = serial deterministic (overrides config; env BK_THREADS)");
}

PipelineConfig resolve_config(const CommonArgs& args) {
    PipelineConfig cfg = args.config_path.empty() ? PipelineConfig{} : load_config(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.seed >= 0) {
        cfg.seed = std::uint64_t(args.seed);
        cfg.pretrain.seed = cfg.seed;
        cfg.retrain_cfg.seed = cfg.seed;
        cfg.finetune_cfg.seed = cfg.seed;
    }
    if (args.threads >= 0) cfg.threads = args.threads;
    return cfg;
}

template <class Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ModelIoError& e) {
        std::fprintf(stderr, "model i/o error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"basis-kernel CNN compression and sparse inference toolkit"};
    app.require_subcommand(1);

    CommonArgs pretrain_args;
    auto* pretrain_cmd = app.add_subcommand("pretrain", "train the dense baseline");
    add_common(pretrain_cmd, pretrain_args, true);

    CommonArgs compress_args;
    std::string from_phase;
    auto* compress_cmd =
        app.add_subcommand("compress", "decompose -> retrain -> prune -> shrink -> finetune");
    add_common(compress_cmd, compress_args, true);
    compress_cmd->add_option("--from", from_phase,
                             "resume from phase (decompose|retrain|prune|shrink|finetune)");

    struct PhaseCmd {
        CommonArgs args;
        CLI::App* cmd = nullptr;
        const char* name;
    };
    PhaseCmd phase_cmds[5] = {{{}, nullptr, "decompose"},
                              {{}, nullptr, "retrain"},
                              {{}, nullptr, "prune"},
                              {{}, nullptr, "shrink"},
                              {{}, nullptr, "finetune"}};
    for (auto& pc : phase_cmds) {
        pc.cmd = app.add_subcommand(pc.name, std::string("run only the ") + pc.name + " phase");
        add_common(pc.cmd, pc.args, true);
    }

    CommonArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "top-1 accuracy and FLOP ledger of a model");
    add_common(eval_cmd, eval_args, true);
    eval_cmd->get_option("--model")->required();

    CommonArgs bench_args;
    int bench_batch = 1, bench_reps = 9;
    auto* bench_cmd = app.add_subcommand("bench", "dense vs two-stage latency benchmark");
    add_common(bench_cmd, bench_args, false);
    bench_cmd->get_option("--model")->required();
    bench_cmd->add_option("--batch", bench_batch, "batch size");
    bench_cmd->add_option("--reps", bench_reps, "timed repetitions (>= 5)");

    std::string report_dir;
    auto* report_cmd = app.add_subcommand("report", "consolidated tables from a run directory");
    report_cmd->add_option("--run-dir", report_dir, "directory with report.json")->required();

    CLI11_PARSE(app, argc, argv);

    if (pretrain_cmd->parsed())
        return guarded([&] { return cmd_pretrain(resolve_config(pretrain_args)); });
    if (compress_cmd->parsed())
        return guarded([&] {
            return cmd_compress(resolve_config(compress_args), compress_args.model_path,
                                from_phase);
        });
    for (auto& pc : phase_cmds)
        if (pc.cmd->parsed())
            return guarded([&] {
                return run_phases(resolve_config(pc.args), pc.name, pc.name, pc.args.model_path);
            });
    if (eval_cmd->parsed())
        return guarded([&] { return cmd_eval(resolve_config(eval_args), eval_args.model_path); });
    if (bench_cmd->parsed())
        return guarded([&] {
            PipelineConfig cfg = resolve_config(bench_args);
            if (cfg.out_dir.empty()) cfg.out_dir = ".";
            return cmd_bench(cfg, bench_args.model_path, bench_batch, bench_reps);
        });
    if (report_cmd->parsed()) return guarded([&] { return cmd_report(report_dir); });
    return 2;
}
