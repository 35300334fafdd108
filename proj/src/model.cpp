// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "prefopt/rng.hpp"

namespace prefopt {

Vocab make_vocab(std::int32_t size) {
    Vocab v{size, /*bos=*/1, /*eos=*/2, /*pad=*/0};
    validate_vocab(v);
    return v;
}

void validate_vocab(const Vocab& v) {
    if (v.size < 4) {
        throw std::invalid_argument("vocab: size must be >= 4");
    }
    const std::int32_t ids[3] = {v.bos_id, v.eos_id, v.pad_id};
    for (std::int32_t id : ids) {
        if (id < 0 || id >= v.size) {
            throw std::invalid_argument("vocab: special token id out of range");
        }
    }
    if (v.bos_id == v.eos_id || v.bos_id == v.pad_id || v.eos_id == v.pad_id) {
        throw std::invalid_argument("vocab: bos/eos/pad must be distinct");
    }
}

ModelGradients zero_gradients_like(const ModelParams& p) {
    ModelGradients g;
    g.embedding.assign(p.embedding.size(), 0.0);
    g.output.assign(p.output.size(), 0.0);
    g.bias.assign(p.bias.size(), 0.0);
    return g;
}

ModelParams init_params(std::uint64_t seed, std::int32_t vocab_size, std::int32_t dim,
                        double scale) {
    if (dim < 1) {
        throw std::invalid_argument("init_params: dim must be >= 1");
    }
    if (scale < 0.0) {
        throw std::invalid_argument("init_params: scale must be nonnegative");
    }
    ModelParams p;
    p.vocab = make_vocab(vocab_size);
    p.dim = dim;
    const std::size_t v = static_cast<std::size_t>(vocab_size);
    const std::size_t d = static_cast<std::size_t>(dim);
    p.embedding.resize(v * d);
    p.output.resize(d * v);
    p.bias.resize(v);

    Rng rng(seed);
    for (double& x : p.embedding) {
        x = rng.uniform(-scale, scale);
    }
    for (double& x : p.output) {
        x = rng.uniform(-scale, scale);
    }
    for (double& x : p.bias) {
        x = rng.uniform(-scale, scale);
    }
    return p;
}

namespace {

void check_token(const ModelParams& p, std::int32_t id, const char* what) {
    if (id < 0 || id >= p.vocab.size) {
        throw std::invalid_argument(std::string(what) + ": token id out of range");
    }
}

// logits[j] = E[ctx] . W[:,j] + b[j]
void fill_logits(const ModelParams& p, std::int32_t ctx, std::vector<double>& logits) {
    const std::size_t v = static_cast<std::size_t>(p.vocab.size);
    const std::size_t d = static_cast<std::size_t>(p.dim);
    logits.assign(p.bias.begin(), p.bias.end());
    const double* e = p.embedding.data() + static_cast<std::size_t>(ctx) * d;
    for (std::size_t k = 0; k < d; ++k) {
        const double ek = e[k];
        const double* wrow = p.output.data() + k * v;
        for (std::size_t j = 0; j < v; ++j) {
            logits[j] += ek * wrow[j];
        }
    }
}

double log_sum_exp(const std::vector<double>& x) {
    double m = -std::numeric_limits<double>::infinity();
    for (double xi : x) {
        m = std::max(m, xi);
    }
    double s = 0.0;
    for (double xi : x) {
        s += std::exp(xi - m);
    }
    return m + std::log(s);
}

std::int32_t context_for(const ModelParams& p, const TokenSeq& prompt, const TokenSeq& response,
                         std::size_t pos) {
    if (pos == 0) {
        return prompt.empty() ? p.vocab.bos_id : prompt.back();
    }
    return response[pos - 1];
}

}  // namespace

std::vector<double> next_token_logprobs(const ModelParams& p, std::int32_t context_token) {
    check_token(p, context_token, "next_token_logprobs");
    std::vector<double> logits;
    fill_logits(p, context_token, logits);
    const double lse = log_sum_exp(logits);
    for (double& x : logits) {
        x -= lse;
    }
    return logits;
}

TokenLogProbs forward_logprobs(const ModelParams& p, const TokenSeq& prompt,
                               const TokenSeq& response) {
    if (response.empty()) {
        throw std::invalid_argument("forward_logprobs: response must be nonempty");
    }
    for (std::int32_t id : prompt) {
        check_token(p, id, "forward_logprobs");
    }
    for (std::int32_t id : response) {
        check_token(p, id, "forward_logprobs");
    }

    std::vector<double> values(response.size());
    std::vector<double> logits;
    for (std::size_t i = 0; i < response.size(); ++i) {
        const std::int32_t ctx = context_for(p, prompt, response, i);
        fill_logits(p, ctx, logits);
        const double lse = log_sum_exp(logits);
        values[i] = logits[static_cast<std::size_t>(response[i])] - lse;
    }
    return TokenLogProbs(std::move(values));
}

void backward_accumulate(const ModelParams& p, const TokenSeq& prompt, const TokenSeq& response,
                         std::span<const double> upstream, ModelGradients& acc) {
    if (upstream.size() != response.size()) {
        throw std::invalid_argument("backward: upstream length must equal response length");
    }
    if (response.empty()) {
        throw std::invalid_argument("backward: response must be nonempty");
    }
    if (acc.embedding.size() != p.embedding.size() || acc.output.size() != p.output.size() ||
        acc.bias.size() != p.bias.size()) {
        throw std::invalid_argument("backward: gradient shape mismatch");
    }
    for (std::int32_t id : prompt) {
        check_token(p, id, "backward");
    }
    for (std::int32_t id : response) {
        check_token(p, id, "backward");
    }

    const std::size_t v = static_cast<std::size_t>(p.vocab.size);
    const std::size_t d = static_cast<std::size_t>(p.dim);
    std::vector<double> logits;
    std::vector<double> glogit(v);

    for (std::size_t i = 0; i < response.size(); ++i) {
        const double u = upstream[i];
        if (u == 0.0) {
            continue;
        }
        const std::int32_t ctx = context_for(p, prompt, response, i);
        fill_logits(p, ctx, logits);
        const double lse = log_sum_exp(logits);

        // d logprob(y) / d logit_j = [j == y] - softmax_j
        const std::size_t y = static_cast<std::size_t>(response[i]);
        for (std::size_t j = 0; j < v; ++j) {
            glogit[j] = -u * std::exp(logits[j] - lse);
        }
        glogit[y] += u;

        const double* e = p.embedding.data() + static_cast<std::size_t>(ctx) * d;
        double* ge = acc.embedding.data() + static_cast<std::size_t>(ctx) * d;
        for (std::size_t j = 0; j < v; ++j) {
            acc.bias[j] += glogit[j];
        }
        for (std::size_t k = 0; k < d; ++k) {
            const double* wrow = p.output.data() + k * v;
            double* gw = acc.output.data() + k * v;
            double dot = 0.0;
            for (std::size_t j = 0; j < v; ++j) {
                gw[j] += e[k] * glogit[j];
                dot += wrow[j] * glogit[j];
            }
            ge[k] += dot;
        }
    }
}

ModelGradients backward(const ModelParams& p, const TokenSeq& prompt, const TokenSeq& response,
                        std::span<const double> upstream) {
    ModelGradients g = zero_gradients_like(p);
    backward_accumulate(p, prompt, response, upstream, g);
    return g;
}

TokenSeq sample(const ModelParams& p, const TokenSeq& prompt, std::int64_t max_len,
                double temperature, std::uint64_t seed) {
    if (max_len < 1) {
        throw std::invalid_argument("sample: max_len must be >= 1");
    }
    if (temperature < 0.0) {
        throw std::invalid_argument("sample: temperature must be nonnegative");
    }
    for (std::int32_t id : prompt) {
        check_token(p, id, "sample");
    }

    Rng rng(seed);
    TokenSeq out;
    out.reserve(static_cast<std::size_t>(max_len));
    std::int32_t ctx = prompt.empty() ? p.vocab.bos_id : prompt.back();
    std::vector<double> logits;

    while (static_cast<std::int64_t>(out.size()) < max_len) {
        fill_logits(p, ctx, logits);
        std::int32_t next = 0;
        if (temperature == 0.0) {
            // argmax, ties to the lowest token id
            std::size_t best = 0;
            for (std::size_t j = 1; j < logits.size(); ++j) {
                if (logits[j] > logits[best]) {
                    best = j;
                }
            }
            next = static_cast<std::int32_t>(best);
        } else {
            double m = -std::numeric_limits<double>::infinity();
            for (double& x : logits) {
                x /= temperature;
                m = std::max(m, x);
            }
            double total = 0.0;
            for (double& x : logits) {
                x = std::exp(x - m);
                total += x;
            }
            const double r = rng.next_unit() * total;
            double cdf = 0.0;
            std::size_t pick = logits.size() - 1;
            for (std::size_t j = 0; j < logits.size(); ++j) {
                cdf += logits[j];
                if (r < cdf) {
                    pick = j;
                    break;
                }
            }
            next = static_cast<std::int32_t>(pick);
        }
        out.push_back(next);
        if (next == p.vocab.eos_id) {
            break;
        }
        ctx = next;
    }
    return out;
}

std::uint64_t params_hash(const ModelParams& p) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    const auto mix_bytes = [&h](const void* data, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001B3ULL;
        }
    };
    const std::int32_t header[5] = {p.vocab.size, p.vocab.bos_id, p.vocab.eos_id, p.vocab.pad_id,
                                    p.dim};
    mix_bytes(header, sizeof(header));
    mix_bytes(p.embedding.data(), p.embedding.size() * sizeof(double));
    mix_bytes(p.output.data(), p.output.size() * sizeof(double));
    mix_bytes(p.bias.data(), p.bias.size() * sizeof(double));
    return h;
}

}  // namespace prefopt
