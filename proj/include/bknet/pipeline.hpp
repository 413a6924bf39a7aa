#pragma once

#include <string>

#include "bknet/config.hpp"

namespace bknet {

// Compression phases in pipeline order.
extern const char* const kPhases[5];  // decompose, retrain, prune, shrink, finetune

// Train the dense baseline; writes model_baseline.bknet and
// pretrain_log.csv into cfg.out_dir.
int cmd_pretrain(const PipelineConfig& cfg);

// Run phases [first..last] of decompose -> retrain -> prune -> shrink ->
// finetune. model_in seeds the first phase ("" = the previous phase's
// checkpoint in out_dir). Writes per-phase checkpoints and report.json;
// returns 0 on success, 1 on phase failure.
int run_phases(const PipelineConfig& cfg, const std::string& first, const std::string& last,
               const std::string& model_in);

int cmd_compress(const PipelineConfig& cfg, const std::string& model_in,
                 const std::string& from_phase);

int cmd_eval(const PipelineConfig& cfg, const std::string& model_path);

int cmd_bench(const PipelineConfig& cfg, const std::string& model_path, int batch,
              int repetitions);

int cmd_report(const std::string& run_dir);

}  // namespace bknet
