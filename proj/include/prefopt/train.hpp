// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0
//
// The training loop binding everything together: load pairs, freeze a
// reference copy of the initial policy, iterate shuffled batches, push
// per-token loss gradients through the model and apply AdamW on the warmup
// plus cosine schedule, logging one metrics row per optimizer step. Runs are
// bit-reproducible for a fixed (config, data, seed).

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefopt/curation.hpp"
#include "prefopt/loss.hpp"
#include "prefopt/model.hpp"
#include "prefopt/optim.hpp"
#include "prefopt/tasks.hpp"

namespace prefopt {

// Raised when a loss turns non-finite; the CLI maps it to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    LossVariant variant = LossVariant::lddpo;
    double beta = 0.1;
    double alpha = 0.3;
    bool damp_reference = true;

    double peak_lr = 1e-2; // toy-scale default; the full-scale recipe uses 5e-7
    double warmup_frac = 0.10;
    AdamWConfig adamw;

    std::int64_t batch_size = 32;
    std::int64_t epochs = 1;
    double eval_every_frac = 0.10;
    std::uint64_t seed = 0;

    std::int64_t max_seq_len = 512;
    std::int32_t vocab_size = 32;
    std::int32_t dim = 16;
    std::int32_t difficulty = 2; // task family used to interpret the tasks file
    double init_scale = 0.05;
    std::int64_t eval_max_len = 32; // generation cap for in-training evals

    std::string pairs_path;
    std::string tasks_path;      // optional; empty disables in-training evals
    std::string init_checkpoint; // optional; overrides seed initialization
    std::string checkpoint_out;
    std::string metrics_out;

    // Fill the wall_ms column. Off by default so identical runs produce
    // byte-identical metrics files.
    bool timing = false;
};

void validate_train_config(const TrainConfig& cfg);

struct MetricsRow {
    std::int64_t step = 0; // 1-based
    double lr = 0.0;
    double loss = 0.0;
    double rewards_accuracy = 0.0;
    std::optional<double> wall_ms;
    std::optional<double> pass_at_1;
    std::optional<double> mean_gen_len;
};

struct TrainResult {
    ModelParams params;    // trained policy
    ModelParams reference; // frozen copy of the initial policy
    std::optional<AdamWState> optimizer; // final optimizer state
    std::vector<MetricsRow> rows;
    std::uint64_t reference_hash_before = 0;
    std::uint64_t reference_hash_after = 0;
    std::int64_t total_steps = 0;
    std::int64_t identical_pair_warnings = 0;
};

// In-memory core; records must already fit the model vocabulary. tasks may
// be empty, which leaves the eval columns blank.
TrainResult train_on_records(const TrainConfig& cfg,
                             std::span<const PreferencePairRecord> records, ModelParams init,
                             std::span<const TaskInstance> tasks);

struct LoadedPairs {
    std::vector<PreferencePairRecord> records;
    std::int64_t dropped_overlong = 0;
};

// Loads a pairs file, rejecting records whose prompt or responses exceed
// max_seq_len (counted, not truncated) and validating token ids.
LoadedPairs load_pairs_filtered(const std::string& path, std::int64_t max_seq_len,
                                std::int32_t vocab_size);

// File-level entry point: resolves the initial policy (checkpoint or seed),
// trains, writes the metrics CSV and the final checkpoint.
TrainResult run_training(const TrainConfig& cfg);

void write_metrics_csv(const std::string& path, std::span<const MetricsRow> rows);

// Steps at which the in-training evaluation fires: every
// floor(eval_every_frac * total_steps) steps (1-based) plus the final step.
bool is_eval_step(std::int64_t step, std::int64_t total_steps, double eval_every_frac);

struct CompareRow {
    std::string name;
    double pass_at_1 = 0.0;
    double mean_generation_length = 0.0;
    double delta_pass_at_1 = 0.0;         // vs baseline
    double delta_generation_length = 0.0; // vs baseline
};

struct CompareReport {
    CompareRow baseline;
    CompareRow a;
    CompareRow b;
};

// Trains both configs from one shared initialization and evaluates them plus
// the untrained baseline on the same tasks. Both configs must agree on seed,
// data and model dimensions.
CompareReport run_compare(const TrainConfig& cfg_a, const TrainConfig& cfg_b,
                          std::span<const TaskInstance> tasks);

std::string compare_report_to_text(const CompareReport& report);
std::string compare_report_to_json(const CompareReport& report);

const char* to_string(LossVariant v);
LossVariant variant_from_string(const std::string& s);

}  // namespace prefopt
