// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers: generators for random loss items and the
// finite-difference oracles the gradient tests compare against. Everything
// here is independent of the implementation paths it checks.

#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "prefopt/loss.hpp"
#include "prefopt/model.hpp"
#include "prefopt/rng.hpp"

namespace testutil {

inline std::vector<double> random_logprobs(prefopt::Rng& rng, std::int64_t len, double lo = -5.0,
                                           double hi = -0.01) {
    std::vector<double> v(static_cast<std::size_t>(len));
    for (double& x : v) {
        x = rng.uniform(lo, hi);
    }
    return v;
}

inline prefopt::PreferenceItem random_item(prefopt::Rng& rng, std::int64_t len_chosen,
                                           std::int64_t len_rejected) {
    using prefopt::TokenLogProbs;
    return prefopt::PreferenceItem{
        TokenLogProbs(random_logprobs(rng, len_chosen)),
        TokenLogProbs(random_logprobs(rng, len_rejected)),
        TokenLogProbs(random_logprobs(rng, len_chosen)),
        TokenLogProbs(random_logprobs(rng, len_rejected)),
    };
}

// Builds an item whose reward margin is exactly beta * margin_over_beta using
// single-token sequences.
inline prefopt::PreferenceItem item_with_margin(double margin_over_beta) {
    using prefopt::TokenLogProbs;
    const double m = margin_over_beta;
    const double pc = m >= 0.0 ? -1.0 : -1.0 + m;
    const double rc = m >= 0.0 ? -1.0 - m : -1.0;
    return prefopt::PreferenceItem{
        TokenLogProbs({pc}),
        TokenLogProbs({-2.0}),
        TokenLogProbs({rc}),
        TokenLogProbs({-2.0}),
    };
}

enum class Side { chosen, rejected };

// Central finite difference of the item loss w.r.t. one policy log-prob.
inline double fd_loss_grad(const prefopt::PreferenceItem& item,
                           const std::function<double(const prefopt::PreferenceItem&)>& loss_of,
                           Side side, std::size_t index, double h = 1e-5) {
    const auto rebuild = [&](double delta) {
        std::vector<double> pc = item.policy_chosen.values();
        std::vector<double> pr = item.policy_rejected.values();
        if (side == Side::chosen) {
            pc[index] += delta;
        } else {
            pr[index] += delta;
        }
        return prefopt::PreferenceItem{
            prefopt::TokenLogProbs(pc),
            prefopt::TokenLogProbs(pr),
            item.ref_chosen,
            item.ref_rejected,
        };
    };
    return (loss_of(rebuild(+h)) - loss_of(rebuild(-h))) / (2.0 * h);
}

// Central finite differences of f(params) = sum_i upstream[i] * logprob_i
// over every parameter entry.
inline prefopt::ModelGradients fd_model_grad(const prefopt::ModelParams& params,
                                             const prefopt::TokenSeq& prompt,
                                             const prefopt::TokenSeq& response,
                                             const std::vector<double>& upstream,
                                             double h = 1e-5) {
    const auto objective = [&](const prefopt::ModelParams& p) {
        const prefopt::TokenLogProbs lp = prefopt::forward_logprobs(p, prompt, response);
        double total = 0.0;
        for (std::size_t i = 0; i < upstream.size(); ++i) {
            total += upstream[i] * lp.values()[i];
        }
        return total;
    };

    prefopt::ModelParams work = params;
    prefopt::ModelGradients g = prefopt::zero_gradients_like(params);
    const auto run = [&](std::vector<double>& arr, std::vector<double>& out) {
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const double keep = arr[i];
            arr[i] = keep + h;
            const double up = objective(work);
            arr[i] = keep - h;
            const double down = objective(work);
            arr[i] = keep;
            out[i] = (up - down) / (2.0 * h);
        }
    };
    run(work.embedding, g.embedding);
    run(work.output, g.output);
    run(work.bias, g.bias);
    return g;
}

inline double max_rel_error(const std::vector<double>& got, const std::vector<double>& want,
                            double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double scale = std::max({std::fabs(got[i]), std::fabs(want[i]), floor});
        worst = std::max(worst, std::fabs(got[i] - want[i]) / scale);
    }
    return worst;
}

// Bigram params with d = V, identity embeddings and an explicit logit table:
// logits(next | ctx) = table[ctx][next].
inline prefopt::ModelParams table_params(const prefopt::Vocab& vocab,
                                         const std::vector<std::vector<double>>& table) {
    const auto v = static_cast<std::size_t>(vocab.size);
    prefopt::ModelParams p;
    p.vocab = vocab;
    p.dim = vocab.size;
    p.embedding.assign(v * v, 0.0);
    p.output.assign(v * v, 0.0);
    p.bias.assign(v, 0.0);
    for (std::size_t i = 0; i < v; ++i) {
        p.embedding[i * v + i] = 1.0;
        for (std::size_t j = 0; j < v; ++j) {
            p.output[i * v + j] = table[i][j];
        }
    }
    return p;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("prefopt_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
