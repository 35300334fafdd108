// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "prefopt/checkpoint.hpp"
#include "prefopt/model.hpp"
#include "prefopt/rng.hpp"
#include "testutil.hpp"

using namespace prefopt;

TEST_CASE("init_params is deterministic and respects scale") {
    const ModelParams a = init_params(5, 8, 3, 0.5);
    const ModelParams b = init_params(5, 8, 3, 0.5);
    CHECK(a.embedding == b.embedding);
    CHECK(a.output == b.output);
    CHECK(a.bias == b.bias);

    const ModelParams c = init_params(6, 8, 3, 0.5);
    CHECK(params_hash(a) != params_hash(c));

    const ModelParams z = init_params(5, 8, 3, 0.0);
    for (double x : z.embedding) {
        CHECK(x == 0.0);
    }
    for (double x : a.embedding) {
        CHECK(std::fabs(x) <= 0.5);
    }
}

TEST_CASE("zero params give a uniform next-token distribution") {
    const ModelParams p = init_params(1, 32, 4, 0.0);
    const TokenLogProbs lp = forward_logprobs(p, {1, 5}, {3, 4, 5, 6, 7});
    REQUIRE(lp.size() == 5);
    for (double v : lp.values()) {
        CHECK(v == doctest::Approx(-std::log(32.0)).epsilon(1e-12));
    }
}

TEST_CASE("next-token distributions are normalized") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const ModelParams p = init_params(rng.next_u64(), 11, 5, 2.0);
        for (std::int32_t ctx = 0; ctx < 11; ++ctx) {
            const std::vector<double> lp = next_token_logprobs(p, ctx);
            double total = 0.0;
            for (double v : lp) {
                total += std::exp(v);
            }
            CHECK(std::fabs(total - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("two-way softmax closed form") {
    // logit row [0, ln 3, -1000, -1000]: token 1 gets 3/4 of the mass
    const Vocab vocab = make_vocab(4);
    const std::vector<std::vector<double>> table{
        {0.0, std::log(3.0), -1000.0, -1000.0},
        {0.0, std::log(3.0), -1000.0, -1000.0},
        {0.0, std::log(3.0), -1000.0, -1000.0},
        {0.0, std::log(3.0), -1000.0, -1000.0},
    };
    const ModelParams p = testutil::table_params(vocab, table);
    const TokenLogProbs lp = forward_logprobs(p, {0}, {1});
    CHECK(lp.values()[0] == doctest::Approx(std::log(3.0 / 4.0)).epsilon(1e-12));
}

TEST_CASE("only the last prompt token matters") {
    const ModelParams p = init_params(21, 16, 6, 0.7);
    const TokenLogProbs a = forward_logprobs(p, {1, 4, 9}, {5, 6, 7});
    const TokenLogProbs b = forward_logprobs(p, {8, 8, 8, 8, 9}, {5, 6, 7});
    CHECK(a.values() == b.values());
    CHECK(a.size() == 3); // output length tracks the response only

    // empty prompt falls back to bos context
    const TokenLogProbs c = forward_logprobs(p, {}, {5, 6, 7});
    const TokenLogProbs d = forward_logprobs(p, {p.vocab.bos_id}, {5, 6, 7});
    CHECK(c.values() == d.values());
}

TEST_CASE("forward input validation") {
    const ModelParams p = init_params(1, 8, 2, 0.1);
    CHECK_THROWS_AS(forward_logprobs(p, {1}, {}), std::invalid_argument);
    CHECK_THROWS_AS(forward_logprobs(p, {1}, {8}), std::invalid_argument);
    CHECK_THROWS_AS(forward_logprobs(p, {-1}, {2}), std::invalid_argument);
}

TEST_CASE("backward matches finite differences") {
    Rng rng(17);
    const ModelParams p = init_params(rng.next_u64(), 6, 3, 0.8);
    const TokenSeq prompt{1, 4};
    const TokenSeq response{3, 5, 0, 2};
    std::vector<double> upstream;
    for (std::size_t i = 0; i < response.size(); ++i) {
        upstream.push_back(rng.uniform(-1.0, 1.0));
    }

    const ModelGradients got = backward(p, prompt, response, upstream);
    const ModelGradients want = testutil::fd_model_grad(p, prompt, response, upstream);
    CHECK(testutil::max_rel_error(got.embedding, want.embedding) < 1e-6);
    CHECK(testutil::max_rel_error(got.output, want.output) < 1e-6);
    CHECK(testutil::max_rel_error(got.bias, want.bias) < 1e-6);
}

TEST_CASE("backward is linear in the upstream signal") {
    Rng rng(29);
    const ModelParams p = init_params(rng.next_u64(), 7, 4, 0.5);
    const TokenSeq prompt{1};
    const TokenSeq response{4, 6, 3};

    const std::vector<double> zero(response.size(), 0.0);
    const ModelGradients gz = backward(p, prompt, response, zero);
    for (double g : gz.embedding) {
        CHECK(g == 0.0);
    }
    for (double g : gz.bias) {
        CHECK(g == 0.0);
    }

    std::vector<double> u{0.3, -0.9, 0.4};
    std::vector<double> u2{0.6, -1.8, 0.8};
    const ModelGradients g1 = backward(p, prompt, response, u);
    const ModelGradients g2 = backward(p, prompt, response, u2);
    for (std::size_t i = 0; i < g1.output.size(); ++i) {
        CHECK(g2.output[i] == 2.0 * g1.output[i]);
    }
    for (std::size_t i = 0; i < g1.embedding.size(); ++i) {
        CHECK(g2.embedding[i] == 2.0 * g1.embedding[i]);
    }

    CHECK_THROWS_AS(backward(p, prompt, response, std::vector<double>{1.0}),
                    std::invalid_argument);
}

TEST_CASE("sampling is capped, seeded and argmax-deterministic") {
    // Craft a table whose argmax chain immediately emits eos.
    const Vocab vocab = make_vocab(4);
    std::vector<std::vector<double>> table(4, std::vector<double>(4, 0.0));
    for (int ctx = 0; ctx < 4; ++ctx) {
        table[ctx][vocab.eos_id] = 5.0;
    }
    const ModelParams eos_first = testutil::table_params(vocab, table);
    CHECK(sample(eos_first, {1}, 10, 0.0, 0) == TokenSeq{vocab.eos_id});

    // zero params: greedy ties resolve to the lowest token id (pad = 0)
    const ModelParams uniform = init_params(1, 6, 2, 0.0);
    const TokenSeq run = sample(uniform, {1}, 5, 0.0, 0);
    CHECK(run == TokenSeq{0, 0, 0, 0, 0});

    const ModelParams p = init_params(77, 12, 4, 1.0);
    const TokenSeq a = sample(p, {1, 3}, 8, 0.9, 123);
    const TokenSeq b = sample(p, {1, 3}, 8, 0.9, 123);
    CHECK(a == b);
    CHECK(a.size() <= 8);
    const TokenSeq c = sample(p, {1, 3}, 8, 0.9, 124);
    // different seed; almost surely a different path on a 12-token vocab
    CHECK(a != c);

    CHECK_THROWS_AS(sample(p, {1}, 0, 1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(sample(p, {1}, 4, -0.5, 0), std::invalid_argument);
}

TEST_CASE("a frozen reference copy is bit-stable under policy updates") {
    ModelParams policy = init_params(5, 10, 4, 0.3);
    const ModelParams reference = policy;
    const std::uint64_t before = params_hash(reference);
    const TokenLogProbs lp_before = forward_logprobs(reference, {1}, {3, 4});

    for (double& x : policy.embedding) {
        x += 0.25;
    }
    const std::uint64_t after = params_hash(reference);
    const TokenLogProbs lp_after = forward_logprobs(reference, {1}, {3, 4});
    CHECK(before == after);
    CHECK(lp_before.values() == lp_after.values());
}

TEST_CASE("checkpoint round-trips bit-exactly and rejects bad files") {
    const auto dir = testutil::temp_dir("ckpt");
    const std::string path = (dir / "model.ckpt").string();

    const ModelParams p = init_params(9, 12, 5, 0.4);
    AdamWState opt = make_adamw_state(p.param_count());
    opt.step_count = 17;
    opt.m[3] = 0.5;
    opt.v[8] = 0.25;
    save_checkpoint(path, p, &opt);

    const Checkpoint ck = load_checkpoint(path);
    CHECK(params_hash(ck.params) == params_hash(p));
    REQUIRE(ck.optimizer.has_value());
    CHECK(ck.optimizer->step_count == 17);
    CHECK(ck.optimizer->m == opt.m);
    CHECK(ck.optimizer->v == opt.v);

    // identical bytes across saves
    const std::string path2 = (dir / "model2.ckpt").string();
    save_checkpoint(path2, p, &opt);
    CHECK(testutil::read_file(path) == testutil::read_file(path2));

    // version bump must be rejected
    {
        std::string bytes = testutil::read_file(path);
        bytes[8] = 2; // version field follows the magic
        std::ofstream out(path2, std::ios::binary | std::ios::trunc);
        out << bytes;
    }
    CHECK_THROWS(load_checkpoint(path2));

    // magic mismatch must be rejected
    {
        std::string bytes = testutil::read_file(path);
        bytes[0] = 'X';
        std::ofstream out(path2, std::ios::binary | std::ios::trunc);
        out << bytes;
    }
    CHECK_THROWS(load_checkpoint(path2));

    CHECK_THROWS(load_checkpoint((dir / "missing.ckpt").string()));
    std::filesystem::remove_all(dir);
}

TEST_CASE("vocab validation") {
    CHECK_THROWS_AS(make_vocab(3), std::invalid_argument);
    Vocab v = make_vocab(8);
    v.eos_id = v.bos_id;
    CHECK_THROWS_AS(validate_vocab(v), std::invalid_argument);
    v = make_vocab(8);
    v.pad_id = 8;
    CHECK_THROWS_AS(validate_vocab(v), std::invalid_argument);
}
