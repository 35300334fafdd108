// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0
//
// DPO and length-desensitized DPO (LD-DPO) losses over per-token log
// probabilities, with analytic per-token gradients and the rewards-accuracy
// metric. All likelihood arithmetic happens in natural-log space.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace prefopt {

// Numerically stable logistic sigmoid.
double sigmoid(double z);

// log(1 + e^z) without overflow for large |z|.
double softplus(double z);

// Per-token conditional log-probabilities of one response under one model.
// Invariants: nonempty, every entry finite and <= 0.
class TokenLogProbs {
  public:
    explicit TokenLogProbs(std::vector<double> values);

    const std::vector<double>& values() const { return values_; }
    std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }

  private:
    std::vector<double> values_;
};

// One preference pair: policy and reference log-probs for the chosen and
// rejected responses. Policy/reference sequences for the same response must
// have equal length.
struct PreferenceItem {
    TokenLogProbs policy_chosen;
    TokenLogProbs policy_rejected;
    TokenLogProbs ref_chosen;
    TokenLogProbs ref_rejected;
};

struct LossConfig {
    double beta = 0.1;          // implicit-reward temperature, > 0
    double alpha = 0.3;         // length-decoupling exponent, in [0,1]
    bool damp_reference = true; // decouple the reference likelihood as well
};

struct LossResult {
    double loss = 0.0;
    double chosen_reward = 0.0;
    double rejected_reward = 0.0;
    double margin = 0.0;
    bool correct = false; // margin > 0; exact ties count as incorrect
    std::vector<double> grad_chosen;   // d loss / d policy_chosen[i]
    std::vector<double> grad_rejected; // d loss / d policy_rejected[i]
};

enum class LossVariant { dpo, lddpo };

// Token count of the shorter response in a pair; both lengths must be >= 1.
std::int64_t common_length(std::int64_t len_w, std::int64_t len_l);

// Log of the length-decoupled likelihood: full weight for the first
// common_len tokens, weight alpha beyond. With alpha = 1 this equals the
// plain sum bit-for-bit (same accumulation order).
double ld_sequence_logprob(const TokenLogProbs& seq, std::int64_t common_len, double alpha);

LossResult dpo_item_loss(const PreferenceItem& item, double beta);
LossResult lddpo_item_loss(const PreferenceItem& item, const LossConfig& cfg);

struct BatchResult {
    double loss = 0.0;             // arithmetic mean of item losses
    double rewards_accuracy = 0.0; // fraction of items with margin > 0
    std::vector<LossResult> items;
};

BatchResult batch_loss(std::span<const PreferenceItem> items, const LossConfig& cfg,
                       LossVariant variant);

}  // namespace prefopt
