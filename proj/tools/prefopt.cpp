// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0
//
// prefopt CLI: curate preference pairs, train with DPO or LD-DPO, evaluate
// checkpoints on the synthetic tasks, compare variants, and generate
// synthetic inputs. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 numeric failure.

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prefopt/checkpoint.hpp"
#include "prefopt/curation.hpp"
#include "prefopt/model.hpp"
#include "prefopt/rng.hpp"
#include "prefopt/tasks.hpp"
#include "prefopt/train.hpp"

namespace {

using namespace prefopt;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    out << content;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw std::runtime_error("config: bad boolean for " + key + ": " + v);
}

// Applies a flat key=value file to a train config. Keys mirror the CLI flag
// names without the leading dashes; flags given on the command line win.
// The run seed must always come from the command line.
void apply_config_file(const CLI::App& cmd, const std::string& path, TrainConfig& cfg,
                       std::string* variant) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("config: cannot open: " + path);
    }
    const std::map<std::string, std::function<void(const std::string&)>> setters{
        {"variant", [&](const std::string& v) { if (variant) *variant = v; }},
        {"beta", [&](const std::string& v) { cfg.beta = std::stod(v); }},
        {"alpha", [&](const std::string& v) { cfg.alpha = std::stod(v); }},
        {"damp-reference",
         [&](const std::string& v) { cfg.damp_reference = parse_bool(v, "damp-reference"); }},
        {"peak-lr", [&](const std::string& v) { cfg.peak_lr = std::stod(v); }},
        {"warmup-frac", [&](const std::string& v) { cfg.warmup_frac = std::stod(v); }},
        {"weight-decay", [&](const std::string& v) { cfg.adamw.weight_decay = std::stod(v); }},
        {"adam-beta1", [&](const std::string& v) { cfg.adamw.beta1 = std::stod(v); }},
        {"adam-beta2", [&](const std::string& v) { cfg.adamw.beta2 = std::stod(v); }},
        {"adam-eps", [&](const std::string& v) { cfg.adamw.eps = std::stod(v); }},
        {"batch-size", [&](const std::string& v) { cfg.batch_size = std::stoll(v); }},
        {"epochs", [&](const std::string& v) { cfg.epochs = std::stoll(v); }},
        {"eval-every-frac", [&](const std::string& v) { cfg.eval_every_frac = std::stod(v); }},
        {"max-seq-len", [&](const std::string& v) { cfg.max_seq_len = std::stoll(v); }},
        {"vocab-size", [&](const std::string& v) { cfg.vocab_size = std::stoi(v); }},
        {"dim", [&](const std::string& v) { cfg.dim = std::stoi(v); }},
        {"difficulty", [&](const std::string& v) { cfg.difficulty = std::stoi(v); }},
        {"init-scale", [&](const std::string& v) { cfg.init_scale = std::stod(v); }},
        {"eval-max-len", [&](const std::string& v) { cfg.eval_max_len = std::stoll(v); }},
        {"pairs", [&](const std::string& v) { cfg.pairs_path = v; }},
        {"tasks", [&](const std::string& v) { cfg.tasks_path = v; }},
        {"init-checkpoint", [&](const std::string& v) { cfg.init_checkpoint = v; }},
        {"checkpoint-out", [&](const std::string& v) { cfg.checkpoint_out = v; }},
        {"metrics-out", [&](const std::string& v) { cfg.metrics_out = v; }},
        {"timing", [&](const std::string& v) { cfg.timing = parse_bool(v, "timing"); }},
    };

    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        lineno += 1;
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value");
        }
        std::string key = line.substr(first, eq - first);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) {
            key.pop_back();
        }
        const auto vfirst = value.find_first_not_of(" \t");
        value = vfirst == std::string::npos ? "" : value.substr(vfirst);
        while (!value.empty() && (value.back() == ' ' || value.back() == '\t' ||
                                  value.back() == '\r')) {
            value.pop_back();
        }

        const auto it = setters.find(key);
        if (it == setters.end()) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": unknown config key: " + key);
        }
        const CLI::Option* opt = cmd.get_option_no_throw("--" + key);
        if (opt != nullptr && opt->count() > 0) {
            continue; // the command line overrides the file
        }
        it->second(value);
    }
}

std::set<std::int32_t> parse_rounds(const std::string& csv) {
    std::set<std::int32_t> rounds;
    std::stringstream ss(csv);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (!part.empty()) {
            rounds.insert(std::stoi(part));
        }
    }
    if (rounds.empty()) {
        throw std::runtime_error("--pass-rate-rounds: no rounds given");
    }
    return rounds;
}

struct CurateArgs {
    std::string input;
    std::string arbiter;
    std::string output;
    std::string report_json;
    std::string report_text;
    std::string rounds = "1,2,3,4";
};

int run_curate_cmd(const CurateArgs& args) {
    std::vector<QueryRecord> queries = load_query_records(args.input);
    TableArbiter arbiter = args.arbiter.empty() ? TableArbiter() : TableArbiter::load(args.arbiter);
    CurateConfig cfg;
    cfg.pass_rate_rounds = parse_rounds(args.rounds);

    const CurationOutput out = curate(std::move(queries), arbiter, cfg);
    save_pair_records(args.output, out.pairs);
    if (!args.report_json.empty()) {
        write_text_file(args.report_json, report_to_json(out.report));
    }
    if (!args.report_text.empty()) {
        write_text_file(args.report_text, report_to_text(out.report));
    }
    std::cout << report_to_text(out.report);
    std::cout << "wrote " << out.pairs.size() << " pair(s) to " << args.output << "\n";
    return 0;
}

struct TrainArgs {
    TrainConfig cfg;
    std::string variant = "lddpo";
    std::string config_path;
};

int run_train_cmd(const CLI::App& cmd, TrainArgs& args) {
    if (!args.config_path.empty()) {
        apply_config_file(cmd, args.config_path, args.cfg, &args.variant);
    }
    args.cfg.variant = variant_from_string(args.variant);
    if (args.cfg.pairs_path.empty()) {
        throw UsageError("train: --pairs is required (on the command line or in the config file)");
    }
    const TrainResult result = run_training(args.cfg);
    const MetricsRow& last = result.rows.back();
    std::cout << "trained " << result.total_steps << " step(s); final loss " << last.loss
              << ", rewards accuracy " << last.rewards_accuracy << "\n";
    if (!args.cfg.checkpoint_out.empty()) {
        std::cout << "checkpoint: " << args.cfg.checkpoint_out << "\n";
    }
    if (!args.cfg.metrics_out.empty()) {
        std::cout << "metrics: " << args.cfg.metrics_out << "\n";
    }
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string tasks;
    std::string out;
    std::string decode = "greedy";
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::int64_t max_len = 32;
    std::int32_t difficulty = 2;
    std::string pairs;          // optional: rewards accuracy over a pair file
    std::string ref_checkpoint; // required with --pairs
    std::string variant = "lddpo";
    double beta = 0.1;
    double alpha = 0.3;
    bool damp_reference = true;
};

int run_eval_cmd(const EvalArgs& args) {
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    const TaskFamily family = make_task_family(ck.params.vocab.size, args.difficulty);
    const std::vector<TaskInstance> tasks = load_tasks(args.tasks, family);

    DecodeConfig decode;
    decode.greedy = args.decode == "greedy";
    if (!decode.greedy && args.decode != "sampled") {
        throw std::runtime_error("--decode must be greedy or sampled");
    }
    decode.temperature = args.temperature;
    decode.seed = args.seed;
    decode.max_len = args.max_len;

    const EvalReport report = evaluate_model(ck.params, tasks, decode);
    std::cout << eval_report_summary(report) << "\n";
    if (!args.out.empty()) {
        write_text_file(args.out, eval_report_to_json(report));
    }

    if (!args.pairs.empty()) {
        if (args.ref_checkpoint.empty()) {
            throw std::runtime_error("--pairs needs --ref-checkpoint for the reference model");
        }
        const Checkpoint ref = load_checkpoint(args.ref_checkpoint);
        const LoadedPairs loaded =
            load_pairs_filtered(args.pairs, /*max_seq_len=*/1 << 20, ck.params.vocab.size);
        std::vector<PreferenceItem> items;
        items.reserve(loaded.records.size());
        for (const auto& r : loaded.records) {
            items.push_back(PreferenceItem{
                forward_logprobs(ck.params, r.prompt, r.chosen),
                forward_logprobs(ck.params, r.prompt, r.rejected),
                forward_logprobs(ref.params, r.prompt, r.chosen),
                forward_logprobs(ref.params, r.prompt, r.rejected),
            });
        }
        const LossConfig loss_cfg{args.beta, args.alpha, args.damp_reference};
        const BatchResult batch =
            batch_loss(items, loss_cfg, variant_from_string(args.variant));
        std::cout << "pairs " << items.size() << " | loss " << batch.loss
                  << " | rewards accuracy " << batch.rewards_accuracy << "\n";
    }
    return 0;
}

struct CompareArgs {
    TrainConfig cfg; // shared settings; variant overridden per run
    std::string variant_a = "dpo";
    std::string variant_b = "lddpo";
    std::string out;
    std::string config_path;
};

int run_compare_cmd(const CLI::App& cmd, CompareArgs& args) {
    if (!args.config_path.empty()) {
        apply_config_file(cmd, args.config_path, args.cfg, nullptr);
    }
    if (args.cfg.pairs_path.empty()) {
        throw UsageError("compare: --pairs is required (on the command line or in the config file)");
    }
    if (args.cfg.tasks_path.empty()) {
        throw UsageError("compare: --tasks is required");
    }
    TrainConfig cfg_a = args.cfg;
    TrainConfig cfg_b = args.cfg;
    cfg_a.variant = variant_from_string(args.variant_a);
    cfg_b.variant = variant_from_string(args.variant_b);

    const TaskFamily family = make_task_family(args.cfg.vocab_size, args.cfg.difficulty);
    const std::vector<TaskInstance> tasks = load_tasks(args.cfg.tasks_path, family);

    const CompareReport report = run_compare(cfg_a, cfg_b, tasks);
    std::cout << compare_report_to_text(report);
    if (!args.out.empty()) {
        write_text_file(args.out, compare_report_to_json(report));
    }
    return 0;
}

struct GenArgs {
    std::string what;
    std::uint64_t seed = 0;
    std::int64_t num = 1000;
    std::int32_t vocab_size = 32;
    std::int32_t difficulty = 2;
    std::int32_t dim = 16;
    double noise = 0.02;
    std::string out;
    CandidateGenConfig candidates;
};

int run_gen_cmd(const GenArgs& args) {
    if (args.what == "tasks") {
        const auto tasks = generate_tasks(args.seed, args.num, args.difficulty, args.vocab_size);
        save_tasks(args.out, tasks);
        std::cout << "wrote " << tasks.size() << " task(s) to " << args.out << "\n";
    } else if (args.what == "queries") {
        const TaskFamily family = make_task_family(args.vocab_size, args.difficulty);
        const auto tasks = generate_tasks(args.seed, args.num, args.difficulty, args.vocab_size);
        const auto queries =
            make_query_records(family, tasks, args.candidates, args.seed ^ 0x71756572ULL);
        save_query_records(args.out, queries);
        std::cout << "wrote " << queries.size() << " query record(s) to " << args.out << "\n";
    } else if (args.what == "arbiter") {
        write_text_file(args.out, "");
        std::cout << "wrote empty arbiter table to " << args.out << "\n";
    } else if (args.what == "prior") {
        const TaskFamily family = make_task_family(args.vocab_size, args.difficulty);
        const ModelParams params = structured_prior(family, args.dim, args.seed, args.noise);
        save_checkpoint(args.out, params);
        std::cout << "wrote prior checkpoint to " << args.out << "\n";
    } else {
        throw std::runtime_error("--what must be one of tasks, queries, arbiter, prior");
    }
    return 0;
}

void add_train_options(CLI::App* cmd, TrainConfig& cfg, std::string& config_path,
                       bool seed_required) {
    cmd->add_option("--beta", cfg.beta, "implicit-reward temperature");
    cmd->add_option("--alpha", cfg.alpha, "length-decoupling exponent in [0,1]");
    cmd->add_option("--damp-reference", cfg.damp_reference,
                    "length-decouple the reference likelihood too");
    cmd->add_option("--peak-lr", cfg.peak_lr, "peak learning rate");
    cmd->add_option("--warmup-frac", cfg.warmup_frac, "warmup fraction of total steps");
    cmd->add_option("--weight-decay", cfg.adamw.weight_decay, "decoupled weight decay");
    cmd->add_option("--adam-beta1", cfg.adamw.beta1, "AdamW beta1");
    cmd->add_option("--adam-beta2", cfg.adamw.beta2, "AdamW beta2");
    cmd->add_option("--adam-eps", cfg.adamw.eps, "AdamW epsilon");
    cmd->add_option("--batch-size", cfg.batch_size, "global batch size");
    cmd->add_option("--epochs", cfg.epochs, "training epochs");
    cmd->add_option("--eval-every-frac", cfg.eval_every_frac, "eval cadence as a step fraction");
    auto* seed = cmd->add_option("--seed", cfg.seed, "run seed");
    if (seed_required) {
        seed->required();
    }
    cmd->add_option("--max-seq-len", cfg.max_seq_len, "records longer than this are dropped");
    cmd->add_option("--vocab-size", cfg.vocab_size, "model vocabulary size");
    cmd->add_option("--dim", cfg.dim, "model embedding width");
    cmd->add_option("--difficulty", cfg.difficulty, "task family difficulty");
    cmd->add_option("--init-scale", cfg.init_scale, "uniform init range");
    cmd->add_option("--eval-max-len", cfg.eval_max_len, "generation cap during evals");
    cmd->add_option("--pairs", cfg.pairs_path, "preference pairs JSONL");
    cmd->add_option("--tasks", cfg.tasks_path, "tasks JSONL for in-training evals");
    cmd->add_option("--init-checkpoint", cfg.init_checkpoint, "initial policy checkpoint");
    cmd->add_option("--config", config_path, "flat key=value config file; flags override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"offline preference optimization (DPO / LD-DPO) at desk scale"};
    app.require_subcommand(1);

    CurateArgs curate_args;
    auto* curate_cmd = app.add_subcommand("curate", "filter candidates into preference pairs");
    curate_cmd->add_option("--input", curate_args.input, "query records JSONL")->required();
    curate_cmd->add_option("--arbiter", curate_args.arbiter, "arbiter table JSONL");
    curate_cmd->add_option("--output", curate_args.output, "pairs JSONL out")->required();
    curate_cmd->add_option("--report", curate_args.report_json, "report JSON out");
    curate_cmd->add_option("--report-text", curate_args.report_text, "report text out");
    curate_cmd->add_option("--pass-rate-rounds", curate_args.rounds,
                           "comma-separated source rounds for the pass rate");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a policy on preference pairs");
    train_cmd->add_option("--variant", train_args.variant, "dpo or lddpo");
    add_train_options(train_cmd, train_args.cfg, train_args.config_path,
                      /*seed_required=*/true);
    train_cmd->add_option("--checkpoint-out", train_args.cfg.checkpoint_out, "checkpoint out");
    train_cmd->add_option("--metrics-out", train_args.cfg.metrics_out, "metrics CSV out");
    train_cmd->add_flag("--timing", train_args.cfg.timing,
                        "fill the wall_ms column (makes logs non-reproducible)");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on tasks");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "policy checkpoint")->required();
    eval_cmd->add_option("--tasks", eval_args.tasks, "tasks JSONL")->required();
    eval_cmd->add_option("--out", eval_args.out, "eval report JSON out");
    eval_cmd->add_option("--decode", eval_args.decode, "greedy or sampled");
    eval_cmd->add_option("--temperature", eval_args.temperature, "sampling temperature");
    eval_cmd->add_option("--seed", eval_args.seed, "sampling seed");
    eval_cmd->add_option("--max-len", eval_args.max_len, "generation cap");
    eval_cmd->add_option("--difficulty", eval_args.difficulty, "task family difficulty");
    eval_cmd->add_option("--pairs", eval_args.pairs, "pairs JSONL for rewards accuracy");
    eval_cmd->add_option("--ref-checkpoint", eval_args.ref_checkpoint, "reference checkpoint");
    eval_cmd->add_option("--variant", eval_args.variant, "loss variant for --pairs");
    eval_cmd->add_option("--beta", eval_args.beta, "beta for --pairs");
    eval_cmd->add_option("--alpha", eval_args.alpha, "alpha for --pairs");
    eval_cmd->add_option("--damp-reference", eval_args.damp_reference, "damp reference for --pairs");

    CompareArgs compare_args;
    auto* compare_cmd =
        app.add_subcommand("compare", "train two variants from one init and compare");
    compare_cmd->add_option("--variant-a", compare_args.variant_a, "first variant");
    compare_cmd->add_option("--variant-b", compare_args.variant_b, "second variant");
    add_train_options(compare_cmd, compare_args.cfg, compare_args.config_path,
                      /*seed_required=*/true); // --tasks doubles as the eval set
    compare_cmd->add_option("--out", compare_args.out, "comparison report JSON out");

    GenArgs gen_args;
    auto* gen_cmd = app.add_subcommand("gen", "generate synthetic tasks, queries or checkpoints");
    gen_cmd->add_option("--what", gen_args.what, "tasks | queries | arbiter | prior")->required();
    gen_cmd->add_option("--seed", gen_args.seed, "generator seed")->required();
    gen_cmd->add_option("--num", gen_args.num, "number of tasks/queries");
    gen_cmd->add_option("--vocab-size", gen_args.vocab_size, "vocabulary size");
    gen_cmd->add_option("--difficulty", gen_args.difficulty, "task family difficulty");
    gen_cmd->add_option("--dim", gen_args.dim, "embedding width for --what prior");
    gen_cmd->add_option("--noise", gen_args.noise, "init noise for --what prior");
    gen_cmd->add_option("--out", gen_args.out, "output path")->required();
    gen_cmd->add_option("--correct-chain-min", gen_args.candidates.correct_chain_min,
                        "min filler length of correct candidates");
    gen_cmd->add_option("--correct-chain-max", gen_args.candidates.correct_chain_max,
                        "max filler length of correct candidates");
    gen_cmd->add_option("--wrong-chain-min", gen_args.candidates.wrong_chain_min,
                        "min filler length of wrong candidates");
    gen_cmd->add_option("--wrong-chain-max", gen_args.candidates.wrong_chain_max,
                        "max filler length of wrong candidates");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (curate_cmd->parsed()) return run_curate_cmd(curate_args);
        if (train_cmd->parsed()) return run_train_cmd(*train_cmd, train_args);
        if (eval_cmd->parsed()) return run_eval_cmd(eval_args);
        if (compare_cmd->parsed()) return run_compare_cmd(*compare_cmd, compare_args);
        if (gen_cmd->parsed()) return run_gen_cmd(gen_args);
    } catch (const prefopt::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
