// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefopt/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace prefopt {

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) {
    // Two-branch form: never feeds exp() a large positive argument.
    if (z > 0.0) {
        return z + std::log1p(std::exp(-z));
    }
    return std::log1p(std::exp(z));
}

TokenLogProbs::TokenLogProbs(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) {
        throw std::invalid_argument("TokenLogProbs: sequence must be nonempty");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("TokenLogProbs: non-finite log-probability");
        }
        if (v > 0.0) {
            throw std::invalid_argument("TokenLogProbs: log-probability above zero");
        }
    }
}

std::int64_t common_length(std::int64_t len_w, std::int64_t len_l) {
    if (len_w < 1 || len_l < 1) {
        throw std::invalid_argument("common_length: lengths must be positive");
    }
    return len_w < len_l ? len_w : len_l;
}

double ld_sequence_logprob(const TokenLogProbs& seq, std::int64_t common_len, double alpha) {
    if (common_len < 1 || common_len > seq.size()) {
        throw std::invalid_argument("ld_sequence_logprob: common length out of range");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("ld_sequence_logprob: alpha must be in [0,1]");
    }
    const auto& v = seq.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += (static_cast<std::int64_t>(i) < common_len) ? v[i] : alpha * v[i];
    }
    return acc;
}

namespace {

double plain_sum(const TokenLogProbs& seq) {
    double acc = 0.0;
    for (double v : seq.values()) {
        acc += v;
    }
    return acc;
}

void check_item(const PreferenceItem& item) {
    if (item.policy_chosen.size() != item.ref_chosen.size()) {
        throw std::invalid_argument("preference item: chosen policy/reference length mismatch");
    }
    if (item.policy_rejected.size() != item.ref_rejected.size()) {
        throw std::invalid_argument("preference item: rejected policy/reference length mismatch");
    }
}

// Shared tail: rewards, margin, loss and per-token gradients. Gradients for
// position i carry d margin / d logprob = beta * weight; the tail weight is
// alpha for positions beyond the common length (1 everywhere for plain DPO).
LossResult finalize(const PreferenceItem& item, double beta, double chosen_logratio,
                    double rejected_logratio, std::int64_t lp, double tail_weight) {
    LossResult r;
    r.chosen_reward = beta * chosen_logratio;
    r.rejected_reward = beta * rejected_logratio;
    r.margin = r.chosen_reward - r.rejected_reward;
    r.loss = softplus(-r.margin);
    r.correct = r.margin > 0.0;

    const double base = beta * sigmoid(-r.margin);
    const auto fill = [&](std::int64_t len, double sign, std::vector<double>& g) {
        g.resize(static_cast<std::size_t>(len));
        for (std::int64_t i = 0; i < len; ++i) {
            const double w = (i < lp) ? 1.0 : tail_weight;
            g[static_cast<std::size_t>(i)] = sign * base * w;
        }
    };
    fill(item.policy_chosen.size(), -1.0, r.grad_chosen);
    fill(item.policy_rejected.size(), +1.0, r.grad_rejected);
    return r;
}

}  // namespace

LossResult dpo_item_loss(const PreferenceItem& item, double beta) {
    if (!(beta > 0.0)) {
        throw std::invalid_argument("dpo_item_loss: beta must be positive");
    }
    check_item(item);
    const double dw = plain_sum(item.policy_chosen) - plain_sum(item.ref_chosen);
    const double dl = plain_sum(item.policy_rejected) - plain_sum(item.ref_rejected);
    // lp >= both lengths: every token gets full weight.
    const std::int64_t lp =
        item.policy_chosen.size() > item.policy_rejected.size() ? item.policy_chosen.size()
                                                                : item.policy_rejected.size();
    return finalize(item, beta, dw, dl, lp, 1.0);
}

LossResult lddpo_item_loss(const PreferenceItem& item, const LossConfig& cfg) {
    if (!(cfg.beta > 0.0)) {
        throw std::invalid_argument("lddpo_item_loss: beta must be positive");
    }
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
        throw std::invalid_argument("lddpo_item_loss: alpha must be in [0,1]");
    }
    check_item(item);
    const std::int64_t lp =
        common_length(item.policy_chosen.size(), item.policy_rejected.size());

    const double pc = ld_sequence_logprob(item.policy_chosen, lp, cfg.alpha);
    const double pl = ld_sequence_logprob(item.policy_rejected, lp, cfg.alpha);
    const double rc = cfg.damp_reference ? ld_sequence_logprob(item.ref_chosen, lp, cfg.alpha)
                                         : plain_sum(item.ref_chosen);
    const double rl = cfg.damp_reference ? ld_sequence_logprob(item.ref_rejected, lp, cfg.alpha)
                                         : plain_sum(item.ref_rejected);

    return finalize(item, cfg.beta, pc - rc, pl - rl, lp, cfg.alpha);
}

BatchResult batch_loss(std::span<const PreferenceItem> items, const LossConfig& cfg,
                       LossVariant variant) {
    if (items.empty()) {
        throw std::invalid_argument("batch_loss: empty batch");
    }
    BatchResult out;
    out.items.reserve(items.size());
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (const PreferenceItem& item : items) {
        LossResult r = variant == LossVariant::dpo ? dpo_item_loss(item, cfg.beta)
                                                   : lddpo_item_loss(item, cfg);
        loss_sum += r.loss;
        correct += r.correct ? 1 : 0;
        out.items.push_back(std::move(r));
    }
    out.loss = loss_sum / static_cast<double>(items.size());
    out.rewards_accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
    return out;
}

}  // namespace prefopt
