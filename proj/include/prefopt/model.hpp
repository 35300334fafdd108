// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0
//
// A minimal trainable autoregressive LM: next-token logits at each position
// are E[prev_token] * W + b (a factored bigram), probabilities via softmax.
// Prompt tokens are conditioning context only and are never scored; the first
// response token is conditioned on the last prompt token. The forward/backward
// contract is context-width agnostic so a wider model can replace this one
// without touching the loss code.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prefopt/loss.hpp"

namespace prefopt {

struct Vocab {
    std::int32_t size = 0;
    std::int32_t bos_id = 0;
    std::int32_t eos_id = 0;
    std::int32_t pad_id = 0;
};

// Default layout: pad=0, bos=1, eos=2. Requires size >= 4.
Vocab make_vocab(std::int32_t size);
void validate_vocab(const Vocab& v);

using TokenSeq = std::vector<std::int32_t>;

struct ModelParams {
    Vocab vocab;
    std::int32_t dim = 0;
    std::vector<double> embedding; // vocab.size x dim, row-major
    std::vector<double> output;    // dim x vocab.size, row-major
    std::vector<double> bias;      // vocab.size

    std::size_t param_count() const { return embedding.size() + output.size() + bias.size(); }
};

struct ModelGradients {
    std::vector<double> embedding;
    std::vector<double> output;
    std::vector<double> bias;
};

ModelGradients zero_gradients_like(const ModelParams& p);

// Entries i.i.d. uniform in [-scale, +scale] from the seeded generator;
// identical (seed, V, d, scale) give identical parameters.
ModelParams init_params(std::uint64_t seed, std::int32_t vocab_size, std::int32_t dim,
                        double scale);

// Full next-token log-distribution given one context token.
std::vector<double> next_token_logprobs(const ModelParams& p, std::int32_t context_token);

// Log-prob of each response token given its predecessor; output length equals
// the response length. An empty prompt conditions the first token on bos.
TokenLogProbs forward_logprobs(const ModelParams& p, const TokenSeq& prompt,
                               const TokenSeq& response);

// Accumulates d(sum_i upstream[i] * logprob_i)/d params into acc, visiting
// positions in order so the accumulation is deterministic.
void backward_accumulate(const ModelParams& p, const TokenSeq& prompt, const TokenSeq& response,
                         std::span<const double> upstream, ModelGradients& acc);

ModelGradients backward(const ModelParams& p, const TokenSeq& prompt, const TokenSeq& response,
                        std::span<const double> upstream);

// Autoregressive sampling until eos or max_len tokens (eos is included in the
// output). Temperature 0 is argmax with lowest-token-id tie-break.
TokenSeq sample(const ModelParams& p, const TokenSeq& prompt, std::int64_t max_len,
                double temperature, std::uint64_t seed);

// Stable content hash over dims, vocab ids and all parameter bytes.
std::uint64_t params_hash(const ModelParams& p);

}  // namespace prefopt
