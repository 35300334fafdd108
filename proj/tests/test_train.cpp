// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "prefopt/checkpoint.hpp"
#include "prefopt/curation.hpp"
#include "prefopt/tasks.hpp"
#include "prefopt/train.hpp"
#include "testutil.hpp"

using namespace prefopt;

namespace {

// Small curated corpus from the synthetic family.
std::vector<PreferencePairRecord> small_corpus(std::uint64_t seed, std::int64_t n) {
    const TaskFamily family = make_task_family(32, 2);
    const auto tasks = generate_tasks(seed, n, 2);
    const auto queries = make_query_records(family, tasks, CandidateGenConfig{}, seed ^ 0xABCDULL);
    TableArbiter arbiter;
    CurationOutput out = curate(queries, arbiter, CurateConfig{{1}});
    return std::move(out.pairs);
}

TrainConfig base_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.batch_size = 8;
    cfg.epochs = 1;
    cfg.peak_lr = 5e-3;
    cfg.vocab_size = 32;
    cfg.dim = 16;
    return cfg;
}

}  // namespace

TEST_CASE("training with zero learning rate is a bit-exact no-op") {
    const auto records = small_corpus(1, 40);
    REQUIRE(records.size() == 40);
    TrainConfig cfg = base_config(5);
    cfg.peak_lr = 0.0;
    const ModelParams init = init_params(123, 32, 16, 0.05);
    const std::uint64_t init_hash = params_hash(init);

    const TrainResult result = train_on_records(cfg, records, init, {});
    CHECK(params_hash(result.params) == init_hash);
    CHECK(result.rows.size() == static_cast<std::size_t>(result.total_steps));
}

TEST_CASE("lddpo with alpha 1 and dpo produce identical runs") {
    const auto records = small_corpus(2, 48);
    const ModelParams init = init_params(55, 32, 16, 0.05);

    TrainConfig a = base_config(9);
    a.variant = LossVariant::dpo;
    TrainConfig b = base_config(9);
    b.variant = LossVariant::lddpo;
    b.alpha = 1.0;

    const TrainResult ra = train_on_records(a, records, init, {});
    const TrainResult rb = train_on_records(b, records, init, {});
    CHECK(params_hash(ra.params) == params_hash(rb.params));
    REQUIRE(ra.rows.size() == rb.rows.size());
    for (std::size_t i = 0; i < ra.rows.size(); ++i) {
        CHECK(ra.rows[i].loss == rb.rows[i].loss);
        CHECK(ra.rows[i].lr == rb.rows[i].lr);
        CHECK(ra.rows[i].rewards_accuracy == rb.rows[i].rewards_accuracy);
    }
}

TEST_CASE("identical runs are bit-identical and the reference stays frozen") {
    const auto records = small_corpus(3, 40);
    const ModelParams init = init_params(77, 32, 16, 0.05);
    TrainConfig cfg = base_config(21);

    const TrainResult r1 = train_on_records(cfg, records, init, {});
    const TrainResult r2 = train_on_records(cfg, records, init, {});
    CHECK(params_hash(r1.params) == params_hash(r2.params));
    CHECK(r1.reference_hash_before == r1.reference_hash_after);
    CHECK(r1.reference_hash_before == params_hash(init));
    REQUIRE(r1.rows.size() == r2.rows.size());
    for (std::size_t i = 0; i < r1.rows.size(); ++i) {
        CHECK(r1.rows[i].loss == r2.rows[i].loss);
    }
    // training actually moved the policy
    CHECK(params_hash(r1.params) != params_hash(init));
}

TEST_CASE("step counting and eval boundaries") {
    // 3000 pairs at batch 32 make 94 steps; the eval period is
    // floor(0.10 * 94) = 9, firing every 9 steps plus the final step.
    CHECK(is_eval_step(9, 94, 0.10));
    CHECK(is_eval_step(18, 94, 0.10));
    CHECK(is_eval_step(90, 94, 0.10));
    CHECK(is_eval_step(94, 94, 0.10));
    CHECK_FALSE(is_eval_step(91, 94, 0.10));
    CHECK_FALSE(is_eval_step(1, 94, 0.10));
    // period floor(1.0 * 3) = 3 on a 3-step run: every step evals
    CHECK(is_eval_step(3, 3, 1.0));

    const auto records = small_corpus(4, 30);
    TrainConfig cfg = base_config(2);
    cfg.batch_size = 8; // 30 pairs -> 4 steps (last batch short)
    const auto tasks = generate_tasks(505, 12, 2);
    const TrainResult result =
        train_on_records(cfg, records, init_params(1, 32, 16, 0.05), tasks);
    CHECK(result.total_steps == 4);
    REQUIRE(result.rows.size() == 4);
    for (const auto& row : result.rows) {
        const bool boundary = is_eval_step(row.step, 4, cfg.eval_every_frac);
        CHECK(row.pass_at_1.has_value() == boundary);
        CHECK(row.mean_gen_len.has_value() == boundary);
    }
    // steps strictly increasing from 1
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        CHECK(result.rows[i].step == static_cast<std::int64_t>(i + 1));
    }
}

TEST_CASE("metrics csv layout") {
    const auto dir = testutil::temp_dir("metrics");
    const std::string path = (dir / "metrics.csv").string();
    std::vector<MetricsRow> rows(2);
    rows[0].step = 1;
    rows[0].lr = 0.5;
    rows[0].loss = 0.6931471805599453;
    rows[0].rewards_accuracy = 0.0;
    rows[1].step = 2;
    rows[1].lr = 0.25;
    rows[1].loss = 0.5;
    rows[1].rewards_accuracy = 1.0;
    rows[1].pass_at_1 = 0.125;
    rows[1].mean_gen_len = 7.5;
    write_metrics_csv(path, rows);

    const std::string text = testutil::read_file(path);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,lr,loss,rewards_accuracy,wall_ms,pass_at_1,mean_gen_len");
    std::getline(in, line);
    CHECK(line == "1,0.5,0.6931471806,0,,,");
    std::getline(in, line);
    CHECK(line == "2,0.25,0.5,1,,0.125,7.5");
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_training writes reproducible artifacts end to end") {
    const auto dir = testutil::temp_dir("run_training");
    const auto pairs = small_corpus(6, 64);
    const std::string pairs_path = (dir / "pairs.jsonl").string();
    save_pair_records(pairs_path, pairs);

    TrainConfig cfg = base_config(31);
    cfg.pairs_path = pairs_path;
    cfg.checkpoint_out = (dir / "a.ckpt").string();
    cfg.metrics_out = (dir / "a.csv").string();
    const TrainResult ra = run_training(cfg);

    cfg.checkpoint_out = (dir / "b.ckpt").string();
    cfg.metrics_out = (dir / "b.csv").string();
    const TrainResult rb = run_training(cfg);

    CHECK(testutil::read_file((dir / "a.ckpt").string()) ==
          testutil::read_file((dir / "b.ckpt").string()));
    CHECK(testutil::read_file((dir / "a.csv").string()) ==
          testutil::read_file((dir / "b.csv").string()));
    CHECK(params_hash(ra.params) == params_hash(rb.params));

    // a fresh run from the written checkpoint picks up the same model
    const Checkpoint ck = load_checkpoint((dir / "a.ckpt").string());
    CHECK(params_hash(ck.params) == params_hash(ra.params));
    std::filesystem::remove_all(dir);
}

TEST_CASE("over-long records are dropped at load with a count") {
    const auto dir = testutil::temp_dir("overlong");
    auto pairs = small_corpus(7, 20);
    REQUIRE(pairs.size() == 20);
    pairs[3].chosen = TokenSeq(300, 7);
    pairs[9].prompt = TokenSeq(300, 7);
    const std::string path = (dir / "pairs.jsonl").string();
    save_pair_records(path, pairs);

    const LoadedPairs loaded = load_pairs_filtered(path, 100, 32);
    CHECK(loaded.dropped_overlong == 2);
    CHECK(loaded.records.size() == 18);

    // token ids outside the vocab are a data error
    pairs[0].chosen = {31, 45};
    save_pair_records(path, pairs);
    CHECK_THROWS(load_pairs_filtered(path, 100, 32));
    std::filesystem::remove_all(dir);
}

TEST_CASE("identical chosen/rejected pairs are counted and warned about") {
    auto records = small_corpus(11, 10);
    records[2].rejected = records[2].chosen;
    records[7].rejected = records[7].chosen;
    TrainConfig cfg = base_config(3);
    const TrainResult result =
        train_on_records(cfg, records, init_params(4, 32, 16, 0.05), {});
    CHECK(result.identical_pair_warnings == 2);
    CHECK(result.rows.size() == static_cast<std::size_t>(result.total_steps));
}

TEST_CASE("final checkpoints carry the optimizer state") {
    const auto dir = testutil::temp_dir("optstate");
    const auto pairs = small_corpus(13, 24);
    const std::string pairs_path = (dir / "pairs.jsonl").string();
    save_pair_records(pairs_path, pairs);

    TrainConfig cfg = base_config(19);
    cfg.pairs_path = pairs_path;
    cfg.checkpoint_out = (dir / "model.ckpt").string();
    const TrainResult result = run_training(cfg);

    const Checkpoint ck = load_checkpoint(cfg.checkpoint_out);
    REQUIRE(ck.optimizer.has_value());
    CHECK(ck.optimizer->step_count == result.total_steps);
    CHECK(ck.optimizer->m == result.optimizer->m);
    std::filesystem::remove_all(dir);
}

TEST_CASE("config validation catches bad fields") {
    TrainConfig cfg = base_config(1);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
    cfg = base_config(1);
    cfg.alpha = 2.0;
    CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
    cfg = base_config(1);
    cfg.eval_every_frac = 0.0;
    CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
    cfg = base_config(1);
    cfg.beta = 0.0;
    CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
}

TEST_CASE("run_compare with identical configs yields identical rows") {
    const auto dir = testutil::temp_dir("compare");
    const auto pairs = small_corpus(8, 48);
    const std::string pairs_path = (dir / "pairs.jsonl").string();
    save_pair_records(pairs_path, pairs);

    TrainConfig cfg = base_config(12);
    cfg.pairs_path = pairs_path;
    cfg.variant = LossVariant::lddpo;
    const auto tasks = generate_tasks(606, 40, 2);

    const CompareReport rep = run_compare(cfg, cfg, tasks);
    CHECK(rep.a.pass_at_1 == rep.b.pass_at_1);
    CHECK(rep.a.mean_generation_length == rep.b.mean_generation_length);
    CHECK(rep.baseline.delta_pass_at_1 == 0.0);

    TrainConfig other = cfg;
    other.seed = 13;
    CHECK_THROWS_AS(run_compare(cfg, other, tasks), std::invalid_argument);
    std::filesystem::remove_all(dir);
}

TEST_CASE("training quickly separates chosen from rejected on the toy corpus") {
    // Smoke-scale version of the full experiment: a few hundred pairs, one
    // epoch, accuracy on fresh pairs should move well above chance.
    const auto train_pairs = small_corpus(40, 300);
    const auto held_out = small_corpus(41, 60);

    TrainConfig cfg = base_config(50);
    cfg.batch_size = 32;
    cfg.peak_lr = 1e-2;
    const ModelParams init = init_params(909, 32, 16, 0.05);
    const TrainResult result = train_on_records(cfg, train_pairs, init, {});

    const auto accuracy_of = [&](const ModelParams& policy) {
        std::vector<PreferenceItem> items;
        for (const auto& r : held_out) {
            items.push_back(PreferenceItem{
                forward_logprobs(policy, r.prompt, r.chosen),
                forward_logprobs(policy, r.prompt, r.rejected),
                forward_logprobs(init, r.prompt, r.chosen),
                forward_logprobs(init, r.prompt, r.rejected),
            });
        }
        return batch_loss(items, LossConfig{cfg.beta, cfg.alpha, cfg.damp_reference},
                          cfg.variant)
            .rewards_accuracy;
    };
    CHECK(accuracy_of(init) == 0.0); // identical policies tie every margin
    CHECK(accuracy_of(result.params) > 0.7);
    CHECK(result.rows.back().loss < result.rows.front().loss);
}
