// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic, programmatically verifiable tasks over the symbolic vocabulary:
// modular addition with single-token answers. Prompts look like
// [bos, sym(a), plus, sym(b), go]; a well-formed response is filler tokens,
// then the answer delimiter, the answer symbol and eos. Filler length varies
// independently of correctness, which is what makes generation-length
// effects observable at desk scale.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prefopt/curation.hpp"
#include "prefopt/model.hpp"

namespace prefopt {

// Token layout: 0 pad, 1 bos, 2 eos, 3 answer delimiter, 4 plus, 5 go
// (end-of-prompt), then `modulus` residue symbols, then filler tokens up to
// the end of the vocabulary.
struct TaskFamily {
    Vocab vocab;
    std::int32_t modulus = 0;

    std::int32_t delim_token() const { return 3; }
    std::int32_t plus_token() const { return 4; }
    std::int32_t go_token() const { return 5; }
    std::int32_t residue_token(std::int32_t r) const { return 6 + r; }
    std::int32_t filler_token(std::int32_t j) const { return 6 + modulus + j; }
    std::int32_t filler_count() const { return vocab.size - 6 - modulus; }
};

// modulus = min(4 + 3 * difficulty, vocab_size - 7), at least 2; one filler
// token is always left available.
TaskFamily make_task_family(std::int32_t vocab_size, std::int32_t difficulty);

struct TaskInstance {
    std::string id;
    TokenSeq prompt;
    std::string answer;        // decimal residue label
    TokenSeq canonical_answer; // token rendering searched for by verify()
    std::int32_t answer_delim = 0;
    std::int32_t eos_token = 0;
};

std::vector<TaskInstance> generate_tasks(std::uint64_t seed, std::int64_t n,
                                         std::int32_t difficulty, std::int32_t vocab_size = 32);

// True iff the canonical answer appears, contiguously, in the terminal
// answer span: the tokens after the last delimiter, cut at the first eos.
// Outputs with no delimiter verify false.
bool verify(const TaskInstance& task, const TokenSeq& output);

struct DecodeConfig {
    bool greedy = true;
    double temperature = 1.0; // sampled mode only
    std::uint64_t seed = 0;   // sampled mode only; per-task streams keyed by id
    std::int64_t max_len = 32;
};

struct TaskOutcome {
    std::string id;
    bool passed = false;
    std::int64_t generation_length = 0;
};

struct EvalReport {
    double pass_at_1 = 0.0;
    double mean_generation_length = 0.0; // emitted tokens, eos included
    std::vector<TaskOutcome> outcomes;
};

// One generation per task (pass@1). Greedy decode is deterministic; sampled
// decode derives a per-task stream from the task id, so task order never
// changes results.
EvalReport evaluate_model(const ModelParams& params, std::span<const TaskInstance> tasks,
                          const DecodeConfig& decode);

std::string eval_report_to_json(const EvalReport& report);
std::string eval_report_summary(const EvalReport& report);

// ---- curation-input manufacturing ----

// Candidates are sampled from a scripted noised oracle: an ascending filler
// chain of length k, the delimiter, an answer symbol and eos. Correct
// candidates use longer chains than wrong ones, so curated chosen responses
// are systematically longer than rejected ones. quality is the mean
// per-token log-probability of the candidate under the oracle process
// (continue 0.75 / exit 0.25 per filler slot, correct answer 0.9) plus a tiny
// seeded jitter to break ties.
struct CandidateGenConfig {
    std::vector<std::int32_t> rounds = {0, 1};
    std::int32_t correct_per_round = 2;
    std::int32_t wrong_per_round = 1;
    std::int32_t correct_chain_min = 5;
    std::int32_t correct_chain_max = 10;
    std::int32_t wrong_chain_min = 1;
    std::int32_t wrong_chain_max = 4;
};

std::vector<QueryRecord> make_query_records(const TaskFamily& family,
                                            std::span<const TaskInstance> tasks,
                                            const CandidateGenConfig& cfg, std::uint64_t seed);

// A pretrained-style starting policy for the task grammar (the role an SFT
// model plays at full scale): greedy generation walks the ascending filler
// chain, exits to the delimiter after a few tokens, answers uniformly over
// residues and stops. The first min(filler_count, dim - 4) fillers get
// one-hot embedding coordinates with a per-depth exit margin, so the greedy
// exit depth moves smoothly under preference training. Requires dim >= 8;
// noise perturbs every entry uniformly.
ModelParams structured_prior(const TaskFamily& family, std::int32_t dim, std::uint64_t seed,
                             double noise);

std::vector<TaskInstance> load_tasks(const std::string& path, const TaskFamily& family);
void save_tasks(const std::string& path, std::span<const TaskInstance> tasks);

}  // namespace prefopt
