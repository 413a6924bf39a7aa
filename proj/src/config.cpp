#include "bknet/config.hpp"

#include <filesystem>
#include <fstream>

#include "bknet/presets.hpp"
#include "json.hpp"

namespace bknet {

namespace {

using nlohmann::json;

TrainConfig parse_train_block(const json& j, const TrainConfig& defaults) {
    TrainConfig cfg = defaults;
    if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<float>();
    if (j.contains("lr")) cfg.base_lr = j.at("lr").get<float>();
    if (j.contains("schedule")) {
        const std::string s = j.at("schedule").get<std::string>();
        if (s == "step-50/75") cfg.schedule = LrSchedule::Step5075;
        else if (s == "cosine") cfg.schedule = LrSchedule::Cosine;
        else throw ConfigError("unknown lr schedule '" + s + "'");
    }
    if (j.contains("momentum")) cfg.momentum = j.at("momentum").get<float>();
    if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay").get<float>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int>();
    if (j.contains("alternation_interval"))
        cfg.alternation_interval = j.at("alternation_interval").get<int>();
    if (j.contains("start_group")) {
        const std::string s = j.at("start_group").get<std::string>();
        if (s == "basis") cfg.start_group = ParamGroup::Basis;
        else if (s == "coefficients") cfg.start_group = ParamGroup::Coefficients;
        else throw ConfigError("start_group must be 'basis' or 'coefficients'");
    }
    if (j.contains("augment")) cfg.augment = j.at("augment").get<bool>();
    try {
        cfg.check();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

std::string schedule_name(LrSchedule s) {
    return s == LrSchedule::Step5075 ? "step-50/75" : "cosine";
}

json train_block_json(const TrainConfig& cfg) {
    json j;
    j["gamma"] = cfg.gamma;
    j["lr"] = cfg.base_lr;
    j["schedule"] = schedule_name(cfg.schedule);
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["alternation_interval"] = cfg.alternation_interval;
    j["start_group"] = cfg.start_group == ParamGroup::Basis ? "basis" : "coefficients";
    j["augment"] = cfg.augment;
    return j;
}

void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path))
        throw ConfigError(std::string(what) + " path does not exist: '" + path + "'");
}

}  // namespace

PipelineConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    try {
        PipelineConfig cfg;
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
        if (cfg.threads < 0) throw ConfigError("threads must be >= 0");

        if (j.contains("dataset")) {
            const json& d = j.at("dataset");
            if (d.contains("kind")) cfg.dataset.kind = d.at("kind").get<std::string>();
            if (d.contains("train_count")) cfg.dataset.train_count = d.at("train_count").get<int>();
            if (d.contains("test_count")) cfg.dataset.test_count = d.at("test_count").get<int>();
            if (d.contains("noise")) cfg.dataset.noise = d.at("noise").get<double>();
            if (d.contains("train_paths"))
                cfg.dataset.train_paths = d.at("train_paths").get<std::vector<std::string>>();
            if (d.contains("test_paths"))
                cfg.dataset.test_paths = d.at("test_paths").get<std::vector<std::string>>();
            if (d.contains("mean"))
                for (int c = 0; c < 3; ++c) cfg.dataset.mean[std::size_t(c)] = d.at("mean").at(std::size_t(c)).get<float>();
            if (d.contains("std"))
                for (int c = 0; c < 3; ++c) cfg.dataset.stddev[std::size_t(c)] = d.at("std").at(std::size_t(c)).get<float>();
            if (d.contains("train_images")) cfg.dataset.train_images = d.at("train_images").get<std::string>();
            if (d.contains("train_labels")) cfg.dataset.train_labels = d.at("train_labels").get<std::string>();
            if (d.contains("test_images")) cfg.dataset.test_images = d.at("test_images").get<std::string>();
            if (d.contains("test_labels")) cfg.dataset.test_labels = d.at("test_labels").get<std::string>();
            if (d.contains("idx_mean")) cfg.dataset.idx_mean = d.at("idx_mean").get<float>();
            if (d.contains("idx_std")) cfg.dataset.idx_std = d.at("idx_std").get<float>();
        }
        const std::string& kind = cfg.dataset.kind;
        if (kind != "synthetic" && kind != "cifar10-binary" && kind != "idx-images")
            throw ConfigError("dataset.kind must be synthetic, cifar10-binary or idx-images");
        if (kind == "synthetic" &&
            (cfg.dataset.train_count < 1 || cfg.dataset.test_count < 1 || cfg.dataset.noise < 0))
            throw ConfigError("synthetic dataset counts must be >= 1 and noise >= 0");
        if (kind == "cifar10-binary") {
            if (cfg.dataset.train_paths.empty() || cfg.dataset.test_paths.empty())
                throw ConfigError("cifar10-binary requires train_paths and test_paths");
            for (const auto& p : cfg.dataset.train_paths) require_file(p, "dataset train");
            for (const auto& p : cfg.dataset.test_paths) require_file(p, "dataset test");
        }
        if (kind == "idx-images") {
            require_file(cfg.dataset.train_images, "dataset train images");
            require_file(cfg.dataset.train_labels, "dataset train labels");
            require_file(cfg.dataset.test_images, "dataset test images");
            require_file(cfg.dataset.test_labels, "dataset test labels");
        }

        if (j.contains("arch")) {
            const json& a = j.at("arch");
            if (a.contains("preset")) cfg.arch = a.at("preset").get<std::string>();
            if (a.contains("classes")) cfg.classes = a.at("classes").get<int>();
        }
        bool known = false;
        for (const auto& name : preset_names()) known |= (name == cfg.arch);
        if (!known) throw ConfigError("unknown architecture preset '" + cfg.arch + "'");
        if (cfg.classes < 2) throw ConfigError("classes must be >= 2");

        if (j.contains("decompose")) {
            const json& d = j.at("decompose");
            if (d.contains("d")) cfg.d_default = d.at("d").get<int>();
            if (d.contains("center")) cfg.center = d.at("center").get<bool>();
            if (d.contains("d_per_layer"))
                for (const auto& [key, value] : d.at("d_per_layer").items())
                    cfg.d_per_layer[std::stoi(key)] = value.get<int>();
        }
        if (cfg.d_default < 1) throw ConfigError("decompose.d must be >= 1");
        for (auto [idx, d] : cfg.d_per_layer)
            if (d < 1) throw ConfigError("d_per_layer[" + std::to_string(idx) + "] must be >= 1");

        // defaults mirror the hyper-parameters of the compression recipe
        cfg.pretrain.gamma = 0.0f;
        cfg.pretrain.base_lr = 0.1f;
        cfg.pretrain.epochs = 100;
        cfg.retrain_cfg.gamma = 1e-4f;
        cfg.retrain_cfg.base_lr = 0.01f;
        cfg.retrain_cfg.epochs = 100;
        cfg.retrain_cfg.alternation_interval = 5;
        cfg.finetune_cfg.gamma = 0.0f;
        cfg.finetune_cfg.base_lr = 0.01f;
        cfg.finetune_cfg.epochs = 30;
        if (j.contains("pretrain")) cfg.pretrain = parse_train_block(j.at("pretrain"), cfg.pretrain);
        if (j.contains("retrain")) cfg.retrain_cfg = parse_train_block(j.at("retrain"), cfg.retrain_cfg);
        if (j.contains("finetune"))
            cfg.finetune_cfg = parse_train_block(j.at("finetune"), cfg.finetune_cfg);
        cfg.pretrain.seed = cfg.seed;
        cfg.retrain_cfg.seed = cfg.seed;
        cfg.finetune_cfg.seed = cfg.seed;

        if (j.contains("prune")) {
            const json& p = j.at("prune");
            if (p.contains("s")) cfg.prune_s = p.at("s").get<double>();
            if (p.contains("std_nonzero_only"))
                cfg.std_nonzero_only = p.at("std_nonzero_only").get<bool>();
        }
        if (cfg.prune_s < 0) throw ConfigError("prune.s must be >= 0");

        if (j.contains("bench")) {
            const json& b = j.at("bench");
            if (b.contains("enabled")) cfg.bench_enabled = b.at("enabled").get<bool>();
            if (b.contains("batch")) cfg.bench_batch = b.at("batch").get<int>();
            if (b.contains("repetitions")) cfg.bench_repetitions = b.at("repetitions").get<int>();
            if (cfg.bench_batch < 1 || cfg.bench_repetitions < 5)
                throw ConfigError("bench.batch must be >= 1 and bench.repetitions >= 5");
        }
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config field: ") + e.what());
    }
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string config_to_json(const PipelineConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["threads"] = cfg.threads;
    json d;
    d["kind"] = cfg.dataset.kind;
    if (cfg.dataset.kind == "synthetic") {
        d["train_count"] = cfg.dataset.train_count;
        d["test_count"] = cfg.dataset.test_count;
        d["noise"] = cfg.dataset.noise;
    } else if (cfg.dataset.kind == "cifar10-binary") {
        d["train_paths"] = cfg.dataset.train_paths;
        d["test_paths"] = cfg.dataset.test_paths;
        d["mean"] = cfg.dataset.mean;
        d["std"] = cfg.dataset.stddev;
    } else {
        d["train_images"] = cfg.dataset.train_images;
        d["train_labels"] = cfg.dataset.train_labels;
        d["test_images"] = cfg.dataset.test_images;
        d["test_labels"] = cfg.dataset.test_labels;
        d["idx_mean"] = cfg.dataset.idx_mean;
        d["idx_std"] = cfg.dataset.idx_std;
    }
    j["dataset"] = d;
    j["arch"] = {{"preset", cfg.arch}, {"classes", cfg.classes}};
    json dec;
    dec["d"] = cfg.d_default;
    dec["center"] = cfg.center;
    json dmap = json::object();
    for (auto [idx, dd] : cfg.d_per_layer) dmap[std::to_string(idx)] = dd;
    dec["d_per_layer"] = dmap;
    j["decompose"] = dec;
    j["pretrain"] = train_block_json(cfg.pretrain);
    j["retrain"] = train_block_json(cfg.retrain_cfg);
    j["finetune"] = train_block_json(cfg.finetune_cfg);
    j["prune"] = {{"s", cfg.prune_s}, {"std_nonzero_only", cfg.std_nonzero_only}};
    j["bench"] = {{"enabled", cfg.bench_enabled},
                  {"batch", cfg.bench_batch},
                  {"repetitions", cfg.bench_repetitions}};
    return j.dump(2);
}

DataSplit load_dataset(const PipelineConfig& cfg) {
    if (cfg.dataset.kind == "synthetic")
        return synthetic_dataset(cfg.seed, cfg.dataset.train_count, cfg.dataset.test_count,
                                 cfg.dataset.noise);
    if (cfg.dataset.kind == "cifar10-binary") {
        DataSplit split;
        split.train = load_cifar10_binary(cfg.dataset.train_paths, cfg.dataset.mean,
                                          cfg.dataset.stddev);
        split.test =
            load_cifar10_binary(cfg.dataset.test_paths, cfg.dataset.mean, cfg.dataset.stddev);
        split.num_classes = 10;
        return split;
    }
    DataSplit split;
    split.train = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels,
                           cfg.dataset.idx_mean, cfg.dataset.idx_std);
    split.test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels, cfg.dataset.idx_mean,
                          cfg.dataset.idx_std);
    int max_label = 0;
    for (int l : split.train.labels) max_label = std::max(max_label, l);
    split.num_classes = max_label + 1;
    return split;
}

}  // namespace bknet
