#include "bknet/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "bknet/decompose.hpp"
#include "bknet/presets.hpp"
#include "bknet/prune.hpp"
#include "bknet/report.hpp"
#include "bknet/runtime.hpp"
#include "bknet/serialize.hpp"
#include "bknet/sha1.hpp"
#include "bknet/shrink.hpp"
#include "bknet/threads.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bknet {

const char* const kPhases[5] = {"decompose", "retrain", "prune", "shrink", "finetune"};

namespace {

int phase_index(const std::string& name) {
    for (int i = 0; i < 5; ++i)
        if (name == kPhases[i]) return i;
    throw ConfigError("unknown phase '" + name + "' (expected decompose|retrain|prune|shrink|finetune)");
}

std::string checkpoint_name(int phase) {
    switch (phase) {
        case 0: return "model_decomposed.bknet";
        case 1: return "model_retrained.bknet";
        case 2: return "model_pruned.bknet";
        case 3: return "model_shrunk.bknet";
        default: return "model_final.bknet";
    }
}

fs::path ensure_out_dir(const PipelineConfig& cfg) {
    fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create out_dir '" + cfg.out_dir + "': " + ec.message());
    return dir;
}

void check_labels(const DataSplit& data, int classes) {
    for (int l : data.train.labels)
        if (l < 0 || l >= classes)
            throw ConfigError("dataset label " + std::to_string(l) +
                              " outside the configured class count");
}

json artifact_entry(const fs::path& dir, const std::string& name) {
    json a;
    a["file"] = name;
    a["sha1"] = sha1_file((dir / name).string());
    return a;
}

double eval_accuracy(const Network& net, const Dataset& test, int batch) {
    return evaluate(net, test, batch);
}

json ledger_summary(const FlopLedger& ledger) {
    json j;
    j["dense_macs_total"] = ledger.dense_macs_total;
    j["two_stage_total"] = ledger.two_stage_total;
    j["params_total"] = ledger.params_total;
    j["params_conv_total"] = ledger.params_conv_total;
    return j;
}

}  // namespace

int cmd_pretrain(const PipelineConfig& cfg) {
    const fs::path dir = ensure_out_dir(cfg);
    DataSplit data = load_dataset(cfg);
    check_labels(data, cfg.classes);

    Network net = build_preset(cfg.arch, cfg.classes);
    Rng init_rng(derive_seed(cfg.seed, "init"));
    init_parameters(net, init_rng);
    auto diags = validate(net);
    if (!diags.empty()) throw std::runtime_error("preset failed validation: " + diags.front());

    auto logs = pretrain_dense(net, data, cfg.pretrain);
    save_model(net, (dir / "model_baseline.bknet").string());
    write_text_file((dir / "pretrain_log.csv").string(), epoch_log_csv(logs));

    const double acc = eval_accuracy(net, data.test, cfg.pretrain.batch_size);
    std::printf("pretrain: %d epochs, test accuracy %.4f\n", cfg.pretrain.epochs, acc);
    std::printf("saved %s\n", (dir / "model_baseline.bknet").c_str());
    return 0;
}

int run_phases(const PipelineConfig& cfg, const std::string& first, const std::string& last,
               const std::string& model_in) {
    const fs::path dir = ensure_out_dir(cfg);
    const int first_idx = phase_index(first);
    const int last_idx = phase_index(last);
    if (first_idx > last_idx) throw ConfigError("--from phase is after the final phase");

    DataSplit data = load_dataset(cfg);
    check_labels(data, cfg.classes);

    // resolve the input checkpoint for the first phase
    std::string input_path;
    if (!model_in.empty()) {
        input_path = model_in;
    } else if (first_idx == 0) {
        input_path = (dir / "model_baseline.bknet").string();
    } else {
        input_path = (dir / checkpoint_name(first_idx - 1)).string();
    }

    json report;
    const fs::path report_path = dir / "report.json";
    if (fs::exists(report_path)) {
        try {
            report = json::parse(read_text_file(report_path.string()));
        } catch (...) {
            report = json::object();
        }
    }
    report["config"] = json::parse(config_to_json(cfg));
    report["input_model"] = json{{"file", input_path}, {"sha1", sha1_file(input_path)}};
    if (!report.contains("phases")) report["phases"] = json::object();
    if (!report.contains("timestamps")) report["timestamps"] = json::object();
    report["timestamps"]["started"] = iso_timestamp_utc();

    Network net = load_model(input_path);
    {
        auto diags = validate(net);
        if (!diags.empty())
            throw std::runtime_error("input model failed validation: " + diags.front());
    }

    const std::string current_phase_names[5] = {"decompose", "retrain", "prune", "shrink",
                                                "finetune"};
    for (int p = first_idx; p <= last_idx; ++p) {
        const std::string& phase = current_phase_names[p];
        try {
            json block;
            block["accuracy_before"] = eval_accuracy(net, data.test, cfg.retrain_cfg.batch_size);
            json artifacts = json::array();

            switch (p) {
                case 0: {  // decompose
                    std::map<int, int> dmap = default_d_map(net, cfg.d_default);
                    for (auto [idx, d] : cfg.d_per_layer) dmap[idx] = d;
                    net = decompose_network(net, dmap, cfg.center);
                    block["layers_decomposed"] = int(dmap.size());
                    break;
                }
                case 1: {  // retrain
                    auto logs = retrain(net, data, cfg.retrain_cfg);
                    write_text_file((dir / "retrain_log.csv").string(), epoch_log_csv(logs));
                    artifacts.push_back(artifact_entry(dir, "retrain_log.csv"));
                    block["coeff_sparsity"] = coefficient_sparsity(net);
                    break;
                }
                case 2: {  // prune
                    SparsityReport rep = prune(net, cfg.prune_s, cfg.std_nonzero_only);
                    write_text_file((dir / "sparsity.json").string(), rep.to_json());
                    artifacts.push_back(artifact_entry(dir, "sparsity.json"));
                    block["sparsity_pct"] = rep.sparsity_pct;
                    block["nnz_total"] = rep.nnz_total;
                    block["coeff_total"] = rep.coeff_total;
                    break;
                }
                case 3: {  // shrink
                    RedundancyReport rr = propagate(net);
                    ShrinkResult sr = shrink(net, rr);
                    int removed_channels = 0, removed_basis = 0;
                    for (const auto& row : sr.width_table) {
                        removed_channels += row.width_before - row.width_after;
                        removed_basis += row.d_before - row.d_after;
                    }
                    net = std::move(sr.net);
                    write_text_file((dir / "widths.csv").string(),
                                    width_table_csv(sr.width_table));
                    artifacts.push_back(artifact_entry(dir, "widths.csv"));
                    block["iterations_to_fixpoint"] = rr.iterations_to_fixpoint;
                    block["channels_removed"] = removed_channels;
                    block["basis_removed"] = removed_basis;
                    break;
                }
                case 4: {  // finetune
                    auto logs = finetune_masked(net, data, cfg.finetune_cfg);
                    write_text_file((dir / "finetune_log.csv").string(), epoch_log_csv(logs));
                    artifacts.push_back(artifact_entry(dir, "finetune_log.csv"));
                    break;
                }
            }

            const std::string ckpt = checkpoint_name(p);
            save_model(net, (dir / ckpt).string());
            artifacts.push_back(artifact_entry(dir, ckpt));
            block["accuracy_after"] = eval_accuracy(net, data.test, cfg.retrain_cfg.batch_size);
            block["artifacts"] = artifacts;
            block["completed"] = iso_timestamp_utc();
            report["phases"][phase] = block;
            std::printf("phase %-9s accuracy %.4f -> %.4f\n", phase.c_str(),
                        block["accuracy_before"].get<double>(),
                        block["accuracy_after"].get<double>());
        } catch (const std::exception& e) {
            std::fprintf(stderr, "phase %s failed: %s\n", phase.c_str(), e.what());
            report["failed_phase"] = phase;
            report["error"] = e.what();
            write_text_file(report_path.string(), report.dump(2) + "\n");
            return 1;
        }
    }

    report["flops"] = json::object();
    report["flops"]["final"] = ledger_summary(count_flops(net));
    {
        Network base = load_model(input_path);
        report["flops"]["baseline"] = ledger_summary(count_flops(base));
    }
    const SparsityReport final_sparsity = sparsity_report(net);
    report["final_sparsity_pct"] = final_sparsity.sparsity_pct;

    if (cfg.bench_enabled) {
        BenchmarkResult bench =
            benchmark(net, cfg.bench_batch, cfg.bench_repetitions, resolve_threads(cfg.threads));
        write_text_file((dir / "bench.json").string(), bench.to_json() + "\n");
        write_text_file((dir / "bench.csv").string(), bench.to_csv());
        report["benchmark"] = json::parse(bench.to_json());
    }

    report["timestamps"]["finished"] = iso_timestamp_utc();
    write_text_file(report_path.string(), report.dump(2) + "\n");
    std::printf("report written to %s\n", report_path.c_str());
    return 0;
}

int cmd_compress(const PipelineConfig& cfg, const std::string& model_in,
                 const std::string& from_phase) {
    return run_phases(cfg, from_phase.empty() ? "decompose" : from_phase, "finetune", model_in);
}

int cmd_eval(const PipelineConfig& cfg, const std::string& model_path) {
    DataSplit data = load_dataset(cfg);
    Network net = load_model(model_path);
    auto diags = validate(net);
    if (!diags.empty()) throw std::runtime_error("model failed validation: " + diags.front());
    const double acc = evaluate(net, data.test, cfg.retrain_cfg.batch_size);
    FlopLedger ledger = count_flops(net);
    json j;
    j["model"] = model_path;
    j["top1_accuracy"] = acc;
    j["flops"] = json::parse(ledger.to_json());
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
}

int cmd_bench(const PipelineConfig& cfg, const std::string& model_path, int batch,
              int repetitions) {
    const fs::path dir = ensure_out_dir(cfg);
    Network net = load_model(model_path);
    BenchmarkResult res = benchmark(net, batch, repetitions, resolve_threads(cfg.threads));
    write_text_file((dir / "bench.json").string(), res.to_json() + "\n");
    write_text_file((dir / "bench.csv").string(), res.to_csv());
    std::printf("%s\n", res.to_json().c_str());
    return 0;
}

int cmd_report(const std::string& run_dir) {
    const fs::path dir(run_dir);
    const fs::path report_path = dir / "report.json";
    if (!fs::exists(report_path))
        throw ConfigError("no report.json under '" + run_dir + "' (run compress first)");
    json report = json::parse(read_text_file(report_path.string()));

    const auto& phases = report.at("phases");
    const double base_acc = phases.contains("decompose")
                                ? phases.at("decompose").at("accuracy_before").get<double>()
                                : 0.0;
    const double final_acc = phases.contains("finetune")
                                 ? phases.at("finetune").at("accuracy_after").get<double>()
                                 : 0.0;
    const auto& fl = report.at("flops");
    const double params_base = fl.at("baseline").at("params_total").get<double>();
    const double params_final = fl.at("final").at("params_total").get<double>();
    const double flops_base = fl.at("baseline").at("dense_macs_total").get<double>();
    const double flops_final = fl.at("final").at("two_stage_total").get<double>();

    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "base_acc,pruned_acc,delta_acc,params,r_param_pct,flops,r_flops_pct\n"
                  "%.4f,%.4f,%+.4f,%.0f,%.2f,%.0f,%.2f\n",
                  base_acc, final_acc, final_acc - base_acc, params_final,
                  100.0 * (1.0 - params_final / params_base), flops_final,
                  100.0 * (1.0 - flops_final / flops_base));
    write_text_file((dir / "report_table.csv").string(), buf);
    std::printf("%s", buf);
    if (fs::exists(dir / "widths.csv"))
        std::printf("layer width table: %s\n", (dir / "widths.csv").c_str());
    return 0;
}

}  // namespace bknet
