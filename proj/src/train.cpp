// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefopt/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "prefopt/checkpoint.hpp"
#include "prefopt/rng.hpp"

namespace prefopt {

namespace {

// Substream ids under the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStreamBase = 1000;

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

const char* to_string(LossVariant v) { return v == LossVariant::dpo ? "dpo" : "lddpo"; }

LossVariant variant_from_string(const std::string& s) {
    if (s == "dpo") return LossVariant::dpo;
    if (s == "lddpo") return LossVariant::lddpo;
    throw std::runtime_error("unknown variant: " + s + " (expected dpo or lddpo)");
}

void validate_train_config(const TrainConfig& cfg) {
    if (!(cfg.beta > 0.0)) {
        throw std::invalid_argument("train config: beta must be positive");
    }
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
        throw std::invalid_argument("train config: alpha must be in [0,1]");
    }
    if (cfg.batch_size < 1) {
        throw std::invalid_argument("train config: batch_size must be >= 1");
    }
    if (cfg.epochs < 1) {
        throw std::invalid_argument("train config: epochs must be >= 1");
    }
    if (!(cfg.eval_every_frac > 0.0 && cfg.eval_every_frac <= 1.0)) {
        throw std::invalid_argument("train config: eval_every_frac must be in (0,1]");
    }
    if (cfg.max_seq_len < 1) {
        throw std::invalid_argument("train config: max_seq_len must be >= 1");
    }
    if (cfg.vocab_size < 4 || cfg.dim < 1) {
        throw std::invalid_argument("train config: bad model dimensions");
    }
    if (!(cfg.peak_lr >= 0.0)) {
        throw std::invalid_argument("train config: peak_lr must be nonnegative");
    }
}

bool is_eval_step(std::int64_t step, std::int64_t total_steps, double eval_every_frac) {
    if (step == total_steps) {
        return true;
    }
    const auto period =
        static_cast<std::int64_t>(std::floor(eval_every_frac * static_cast<double>(total_steps)));
    return period >= 1 && step % period == 0;
}

LoadedPairs load_pairs_filtered(const std::string& path, std::int64_t max_seq_len,
                                std::int32_t vocab_size) {
    LoadedPairs out;
    std::vector<PreferencePairRecord> raw = load_pair_records(path);
    out.records.reserve(raw.size());
    for (auto& r : raw) {
        const auto too_long = [max_seq_len](const TokenSeq& t) {
            return static_cast<std::int64_t>(t.size()) > max_seq_len;
        };
        if (too_long(r.prompt) || too_long(r.chosen) || too_long(r.rejected)) {
            out.dropped_overlong += 1;
            continue;
        }
        const auto check_ids = [&](const TokenSeq& t) {
            for (std::int32_t id : t) {
                if (id < 0 || id >= vocab_size) {
                    throw std::runtime_error(path + ": token id " + std::to_string(id) +
                                             " outside vocab in record " + r.query_id);
                }
            }
        };
        check_ids(r.prompt);
        check_ids(r.chosen);
        check_ids(r.rejected);
        out.records.push_back(std::move(r));
    }
    return out;
}

TrainResult train_on_records(const TrainConfig& cfg,
                             std::span<const PreferencePairRecord> records, ModelParams init,
                             std::span<const TaskInstance> tasks) {
    validate_train_config(cfg);
    if (records.empty()) {
        throw std::runtime_error("train: no usable preference pairs");
    }

    TrainResult result;
    result.reference = init; // frozen copy
    result.params = std::move(init);
    result.reference_hash_before = params_hash(result.reference);

    for (const auto& r : records) {
        if (r.chosen == r.rejected) {
            result.identical_pair_warnings += 1;
        }
    }
    if (result.identical_pair_warnings > 0) {
        std::cerr << "warning: " << result.identical_pair_warnings
                  << " pair(s) have identical chosen/rejected responses (no gradient signal)\n";
    }

    // The reference is frozen, so its per-record log-probs are fixed.
    std::vector<TokenLogProbs> ref_chosen;
    std::vector<TokenLogProbs> ref_rejected;
    ref_chosen.reserve(records.size());
    ref_rejected.reserve(records.size());
    for (const auto& r : records) {
        ref_chosen.push_back(forward_logprobs(result.reference, r.prompt, r.chosen));
        ref_rejected.push_back(forward_logprobs(result.reference, r.prompt, r.rejected));
    }

    const auto n = static_cast<std::int64_t>(records.size());
    const std::int64_t steps_per_epoch = ceil_div(n, cfg.batch_size);
    result.total_steps = cfg.epochs * steps_per_epoch;

    const ScheduleConfig schedule{cfg.peak_lr, result.total_steps, cfg.warmup_frac};
    validate_schedule(schedule);
    AdamWState opt = make_adamw_state(result.params.param_count(), cfg.adamw);

    const LossConfig loss_cfg{cfg.beta, cfg.alpha, cfg.damp_reference};
    const Rng run_rng(cfg.seed);

    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::size_t{0});

    ModelGradients grads = zero_gradients_like(result.params);
    std::int64_t step = 0;

    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = run_rng.stream(kShuffleStreamBase + static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
            const auto t0 = std::chrono::steady_clock::now();
            const std::int64_t stop = std::min<std::int64_t>(n, start + cfg.batch_size);
            const std::size_t batch_count = static_cast<std::size_t>(stop - start);

            std::vector<PreferenceItem> items;
            items.reserve(batch_count);
            for (std::int64_t i = start; i < stop; ++i) {
                const std::size_t idx = order[static_cast<std::size_t>(i)];
                const PreferencePairRecord& rec = records[idx];
                items.push_back(PreferenceItem{
                    forward_logprobs(result.params, rec.prompt, rec.chosen),
                    forward_logprobs(result.params, rec.prompt, rec.rejected),
                    ref_chosen[idx],
                    ref_rejected[idx],
                });
            }

            const BatchResult batch = batch_loss(items, loss_cfg, cfg.variant);
            if (!std::isfinite(batch.loss)) {
                throw NumericError("train: non-finite loss at step " + std::to_string(step + 1));
            }

            // Batch loss is a mean, so each item's upstream carries 1/B.
            grads = zero_gradients_like(result.params);
            const double inv_batch = 1.0 / static_cast<double>(batch_count);
            std::vector<double> upstream;
            for (std::size_t bi = 0; bi < batch_count; ++bi) {
                const std::size_t idx = order[static_cast<std::size_t>(start) + bi];
                const PreferencePairRecord& rec = records[idx];
                const LossResult& lr_item = batch.items[bi];

                upstream.assign(lr_item.grad_chosen.begin(), lr_item.grad_chosen.end());
                for (double& u : upstream) {
                    u *= inv_batch;
                }
                backward_accumulate(result.params, rec.prompt, rec.chosen, upstream, grads);

                upstream.assign(lr_item.grad_rejected.begin(), lr_item.grad_rejected.end());
                for (double& u : upstream) {
                    u *= inv_batch;
                }
                backward_accumulate(result.params, rec.prompt, rec.rejected, upstream, grads);
            }

            const double lr = lr_at_step(schedule, step);
            adamw_step(result.params, grads, opt, lr);
            step += 1;

            MetricsRow row;
            row.step = step;
            row.lr = lr;
            row.loss = batch.loss;
            row.rewards_accuracy = batch.rewards_accuracy;
            if (cfg.timing) {
                const auto t1 = std::chrono::steady_clock::now();
                row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            }
            if (!tasks.empty() && is_eval_step(step, result.total_steps, cfg.eval_every_frac)) {
                DecodeConfig decode;
                decode.greedy = true;
                decode.max_len = cfg.eval_max_len;
                const EvalReport eval = evaluate_model(result.params, tasks, decode);
                row.pass_at_1 = eval.pass_at_1;
                row.mean_gen_len = eval.mean_generation_length;
            }
            result.rows.push_back(std::move(row));
        }
    }

    result.reference_hash_after = params_hash(result.reference);
    result.optimizer = std::move(opt);
    return result;
}

TrainResult run_training(const TrainConfig& cfg) {
    validate_train_config(cfg);
    if (cfg.pairs_path.empty()) {
        throw std::runtime_error("train: no pairs file given");
    }

    LoadedPairs loaded = load_pairs_filtered(cfg.pairs_path, cfg.max_seq_len, cfg.vocab_size);
    if (loaded.dropped_overlong > 0) {
        std::cerr << "warning: dropped " << loaded.dropped_overlong
                  << " record(s) longer than max_seq_len\n";
    }
    if (loaded.records.empty()) {
        throw std::runtime_error("train: pairs file has no usable records: " + cfg.pairs_path);
    }

    ModelParams init;
    if (!cfg.init_checkpoint.empty()) {
        Checkpoint ck = load_checkpoint(cfg.init_checkpoint);
        if (ck.params.vocab.size != cfg.vocab_size || ck.params.dim != cfg.dim) {
            throw std::runtime_error("train: checkpoint dimensions (" +
                                     std::to_string(ck.params.vocab.size) + "x" +
                                     std::to_string(ck.params.dim) +
                                     ") do not match the configured model");
        }
        init = std::move(ck.params);
    } else {
        const std::uint64_t init_seed = Rng(cfg.seed).stream(kInitStream).next_u64();
        init = init_params(init_seed, cfg.vocab_size, cfg.dim, cfg.init_scale);
    }

    std::vector<TaskInstance> tasks;
    if (!cfg.tasks_path.empty()) {
        const TaskFamily family = make_task_family(cfg.vocab_size, cfg.difficulty);
        tasks = load_tasks(cfg.tasks_path, family);
    }

    TrainResult result = train_on_records(cfg, loaded.records, std::move(init), tasks);

    if (!cfg.metrics_out.empty()) {
        write_metrics_csv(cfg.metrics_out, result.rows);
    }
    if (!cfg.checkpoint_out.empty()) {
        save_checkpoint(cfg.checkpoint_out, result.params,
                        result.optimizer ? &*result.optimizer : nullptr);
    }
    return result;
}

void write_metrics_csv(const std::string& path, std::span<const MetricsRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("metrics: cannot open for writing: " + path);
    }
    out << "step,lr,loss,rewards_accuracy,wall_ms,pass_at_1,mean_gen_len\n";
    char buf[64];
    const auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        out << r.step << ',' << fmt(r.lr) << ',' << fmt(r.loss) << ',' << fmt(r.rewards_accuracy)
            << ',';
        if (r.wall_ms) {
            out << fmt(*r.wall_ms);
        }
        out << ',';
        if (r.pass_at_1) {
            out << fmt(*r.pass_at_1);
        }
        out << ',';
        if (r.mean_gen_len) {
            out << fmt(*r.mean_gen_len);
        }
        out << '\n';
    }
    if (!out) {
        throw std::runtime_error("metrics: write failed: " + path);
    }
}

CompareReport run_compare(const TrainConfig& cfg_a, const TrainConfig& cfg_b,
                          std::span<const TaskInstance> tasks) {
    if (cfg_a.seed != cfg_b.seed || cfg_a.pairs_path != cfg_b.pairs_path ||
        cfg_a.vocab_size != cfg_b.vocab_size || cfg_a.dim != cfg_b.dim ||
        cfg_a.init_checkpoint != cfg_b.init_checkpoint) {
        throw std::invalid_argument("compare: both runs must share seed, data and model shape");
    }
    validate_train_config(cfg_a);
    validate_train_config(cfg_b);
    if (tasks.empty()) {
        throw std::invalid_argument("compare: no tasks");
    }

    LoadedPairs loaded = load_pairs_filtered(cfg_a.pairs_path, cfg_a.max_seq_len, cfg_a.vocab_size);
    if (loaded.records.empty()) {
        throw std::runtime_error("compare: pairs file has no usable records");
    }

    ModelParams init;
    if (!cfg_a.init_checkpoint.empty()) {
        init = load_checkpoint(cfg_a.init_checkpoint).params;
        if (init.vocab.size != cfg_a.vocab_size || init.dim != cfg_a.dim) {
            throw std::runtime_error("compare: checkpoint dimensions do not match");
        }
    } else {
        const std::uint64_t init_seed = Rng(cfg_a.seed).stream(kInitStream).next_u64();
        init = init_params(init_seed, cfg_a.vocab_size, cfg_a.dim, cfg_a.init_scale);
    }

    DecodeConfig decode;
    decode.greedy = true;
    decode.max_len = cfg_a.eval_max_len;

    const EvalReport base_eval = evaluate_model(init, tasks, decode);
    const TrainResult res_a = train_on_records(cfg_a, loaded.records, init, {});
    const TrainResult res_b = train_on_records(cfg_b, loaded.records, init, {});
    const EvalReport eval_a = evaluate_model(res_a.params, tasks, decode);
    const EvalReport eval_b = evaluate_model(res_b.params, tasks, decode);

    CompareReport report;
    report.baseline = {"baseline", base_eval.pass_at_1, base_eval.mean_generation_length, 0.0, 0.0};
    report.a = {std::string("A:") + to_string(cfg_a.variant), eval_a.pass_at_1,
                eval_a.mean_generation_length, eval_a.pass_at_1 - base_eval.pass_at_1,
                eval_a.mean_generation_length - base_eval.mean_generation_length};
    report.b = {std::string("B:") + to_string(cfg_b.variant), eval_b.pass_at_1,
                eval_b.mean_generation_length, eval_b.pass_at_1 - base_eval.pass_at_1,
                eval_b.mean_generation_length - base_eval.mean_generation_length};
    return report;
}

std::string compare_report_to_text(const CompareReport& report) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %10s %12s %12s %12s\n", "run", "pass@1", "mean_len",
                  "d_pass@1", "d_mean_len");
    out << line;
    for (const CompareRow* r : {&report.baseline, &report.a, &report.b}) {
        std::snprintf(line, sizeof(line), "%-12s %10.4f %12.3f %+12.4f %+12.3f\n", r->name.c_str(),
                      r->pass_at_1, r->mean_generation_length, r->delta_pass_at_1,
                      r->delta_generation_length);
        out << line;
    }
    return out.str();
}

std::string compare_report_to_json(const CompareReport& report) {
    nlohmann::ordered_json j;
    const auto row = [](const CompareRow& r) {
        nlohmann::ordered_json x;
        x["name"] = r.name;
        x["pass_at_1"] = r.pass_at_1;
        x["mean_generation_length"] = r.mean_generation_length;
        x["delta_pass_at_1"] = r.delta_pass_at_1;
        x["delta_generation_length"] = r.delta_generation_length;
        return x;
    };
    j["baseline"] = row(report.baseline);
    j["a"] = row(report.a);
    j["b"] = row(report.b);
    return j.dump(2) + "\n";
}

}  // namespace prefopt
