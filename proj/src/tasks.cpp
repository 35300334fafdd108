// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefopt/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "prefopt/rng.hpp"

namespace prefopt {

TaskFamily make_task_family(std::int32_t vocab_size, std::int32_t difficulty) {
    if (vocab_size < 9) {
        throw std::invalid_argument("task family: vocab must have at least 9 tokens");
    }
    if (difficulty < 0) {
        throw std::invalid_argument("task family: difficulty must be nonnegative");
    }
    TaskFamily f;
    f.vocab = make_vocab(vocab_size);
    f.modulus = std::min<std::int32_t>(4 + 3 * difficulty, vocab_size - 7);
    f.modulus = std::max<std::int32_t>(f.modulus, 2);
    return f;
}

std::vector<TaskInstance> generate_tasks(std::uint64_t seed, std::int64_t n,
                                         std::int32_t difficulty, std::int32_t vocab_size) {
    if (n < 1) {
        throw std::invalid_argument("generate_tasks: n must be >= 1");
    }
    const TaskFamily family = make_task_family(vocab_size, difficulty);
    const std::int32_t m = family.modulus;

    Rng rng = Rng(seed).stream(0x7461736bULL); // "task"
    std::vector<TaskInstance> tasks;
    tasks.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const auto a = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(m)));
        const auto b = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(m)));
        const std::int32_t r = (a + b) % m;

        TaskInstance t;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "t%06lld", static_cast<long long>(i));
        t.id = buf;
        t.prompt = {family.vocab.bos_id, family.residue_token(a), family.plus_token(),
                    family.residue_token(b), family.go_token()};
        t.answer = std::to_string(r);
        t.canonical_answer = {family.residue_token(r)};
        t.answer_delim = family.delim_token();
        t.eos_token = family.vocab.eos_id;
        tasks.push_back(std::move(t));
    }
    return tasks;
}

bool verify(const TaskInstance& task, const TokenSeq& output) {
    if (output.empty() || task.canonical_answer.empty()) {
        return false;
    }
    // Terminal answer span: after the last delimiter, cut at the first eos.
    std::size_t span_begin = output.size();
    for (std::size_t i = output.size(); i-- > 0;) {
        if (output[i] == task.answer_delim) {
            span_begin = i + 1;
            break;
        }
    }
    if (span_begin == output.size()) {
        return false;
    }
    std::size_t span_end = output.size();
    for (std::size_t i = span_begin; i < output.size(); ++i) {
        if (output[i] == task.eos_token) {
            span_end = i;
            break;
        }
    }
    const auto& needle = task.canonical_answer;
    if (span_end - span_begin < needle.size()) {
        return false;
    }
    for (std::size_t i = span_begin; i + needle.size() <= span_end; ++i) {
        if (std::equal(needle.begin(), needle.end(), output.begin() + static_cast<std::ptrdiff_t>(i))) {
            return true;
        }
    }
    return false;
}

EvalReport evaluate_model(const ModelParams& params, std::span<const TaskInstance> tasks,
                          const DecodeConfig& decode) {
    if (tasks.empty()) {
        throw std::invalid_argument("evaluate_model: no tasks");
    }
    EvalReport report;
    report.outcomes.reserve(tasks.size());
    std::int64_t passed = 0;
    std::int64_t total_len = 0;
    for (const TaskInstance& t : tasks) {
        TokenSeq out;
        if (decode.greedy) {
            out = sample(params, t.prompt, decode.max_len, 0.0, 0);
        } else {
            out = sample(params, t.prompt, decode.max_len, decode.temperature,
                         decode.seed ^ fnv1a64(t.id));
        }
        TaskOutcome o;
        o.id = t.id;
        o.passed = verify(t, out);
        o.generation_length = static_cast<std::int64_t>(out.size());
        passed += o.passed ? 1 : 0;
        total_len += o.generation_length;
        report.outcomes.push_back(std::move(o));
    }
    report.pass_at_1 = static_cast<double>(passed) / static_cast<double>(tasks.size());
    report.mean_generation_length =
        static_cast<double>(total_len) / static_cast<double>(tasks.size());
    return report;
}

std::string eval_report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["pass_at_1"] = report.pass_at_1;
    j["mean_generation_length"] = report.mean_generation_length;
    j["task_count"] = report.outcomes.size();
    auto& arr = j["outcomes"] = nlohmann::ordered_json::array();
    for (const auto& o : report.outcomes) {
        nlohmann::ordered_json oj;
        oj["id"] = o.id;
        oj["passed"] = o.passed;
        oj["generation_length"] = o.generation_length;
        arr.push_back(std::move(oj));
    }
    return j.dump(2) + "\n";
}

std::string eval_report_summary(const EvalReport& report) {
    std::ostringstream out;
    out << "pass@1 " << report.pass_at_1 << " | mean generation length "
        << report.mean_generation_length << " | tasks " << report.outcomes.size();
    return out.str();
}

namespace {

// Oracle process probabilities behind candidate quality scores.
constexpr double kContinueProb = 0.75;
constexpr double kCorrectAnswerProb = 0.9;

CandidateAnswer make_candidate(const TaskFamily& family, const TaskInstance& task, bool correct,
                               std::int32_t chain_len, std::int32_t round, Rng& rng) {
    const std::int32_t m = family.modulus;
    const std::int32_t r = std::stoi(task.answer);

    std::int32_t x = r;
    if (!correct) {
        // uniform over the wrong residues
        x = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(m - 1)));
        if (x >= r) {
            x += 1;
        }
    }

    CandidateAnswer c;
    for (std::int32_t j = 0; j < chain_len; ++j) {
        c.tokens.push_back(family.filler_token(j));
    }
    c.tokens.push_back(family.delim_token());
    c.tokens.push_back(family.residue_token(x));
    c.tokens.push_back(family.vocab.eos_id);

    c.final_answer = std::to_string(x);
    c.verified = verify(task, c.tokens);
    c.source_round = round;

    const double answer_logprob =
        correct ? std::log(kCorrectAnswerProb)
                : std::log((1.0 - kCorrectAnswerProb) / static_cast<double>(m - 1));
    const double total = chain_len * std::log(kContinueProb) + std::log(1.0 - kContinueProb) +
                         answer_logprob; // eos contributes log 1 = 0
    c.quality = total / static_cast<double>(c.tokens.size()) + rng.uniform(0.0, 1e-3);
    return c;
}

}  // namespace

std::vector<QueryRecord> make_query_records(const TaskFamily& family,
                                            std::span<const TaskInstance> tasks,
                                            const CandidateGenConfig& cfg, std::uint64_t seed) {
    if (cfg.correct_per_round < 1 || cfg.wrong_per_round < 1 || cfg.rounds.empty()) {
        throw std::invalid_argument("make_query_records: each round needs correct and wrong candidates");
    }
    if (cfg.correct_chain_min < 1 || cfg.correct_chain_min > cfg.correct_chain_max ||
        cfg.wrong_chain_min < 1 || cfg.wrong_chain_min > cfg.wrong_chain_max) {
        throw std::invalid_argument("make_query_records: bad chain length ranges");
    }
    if (cfg.correct_chain_max > family.filler_count() ||
        cfg.wrong_chain_max > family.filler_count()) {
        throw std::invalid_argument("make_query_records: chain longer than the filler alphabet");
    }
    if (family.modulus < 2) {
        throw std::invalid_argument("make_query_records: need at least two residues");
    }

    const Rng base(seed);
    std::vector<QueryRecord> queries;
    queries.reserve(tasks.size());
    for (const TaskInstance& t : tasks) {
        Rng rng = base.stream(fnv1a64(t.id));
        QueryRecord q;
        q.id = t.id;
        q.category = Category::math;
        q.prompt = t.prompt;
        q.ground_truth = t.answer;

        for (std::int32_t round : cfg.rounds) {
            for (std::int32_t i = 0; i < cfg.correct_per_round; ++i) {
                const auto span = static_cast<std::uint64_t>(cfg.correct_chain_max -
                                                             cfg.correct_chain_min + 1);
                const auto k = cfg.correct_chain_min + static_cast<std::int32_t>(rng.below(span));
                q.candidates.push_back(make_candidate(family, t, true, k, round, rng));
            }
            for (std::int32_t i = 0; i < cfg.wrong_per_round; ++i) {
                const auto span = static_cast<std::uint64_t>(cfg.wrong_chain_max -
                                                             cfg.wrong_chain_min + 1);
                const auto k = cfg.wrong_chain_min + static_cast<std::int32_t>(rng.below(span));
                q.candidates.push_back(make_candidate(family, t, false, k, round, rng));
            }
        }
        queries.push_back(std::move(q));
    }
    return queries;
}

ModelParams structured_prior(const TaskFamily& family, std::int32_t dim, std::uint64_t seed,
                             double noise) {
    if (dim < 8) {
        throw std::invalid_argument("structured_prior: dim must be >= 8");
    }
    const std::int32_t V = family.vocab.size;
    // Filler tokens on the modeled chain get one-hot embedding coordinates,
    // so the chain transitions stay sharp under training updates. Four more
    // coordinates carry the response-start, delimiter, answer and terminal
    // roles.
    const std::int32_t n_chain = std::min<std::int32_t>(family.filler_count(), dim - 4);
    if (n_chain < 4) {
        throw std::invalid_argument("structured_prior: not enough filler tokens or dims");
    }
    const std::int32_t go_dim = n_chain;
    const std::int32_t delim_dim = n_chain + 1;
    const std::int32_t sym_dim = n_chain + 2;
    const std::int32_t term_dim = n_chain + 3;

    ModelParams p;
    p.vocab = family.vocab;
    p.dim = dim;
    p.embedding.assign(static_cast<std::size_t>(V) * dim, 0.0);
    p.output.assign(static_cast<std::size_t>(dim) * V, 0.0);
    p.bias.assign(static_cast<std::size_t>(V), 0.0);

    const auto E = [&](std::int32_t token, std::int32_t k) -> double& {
        return p.embedding[static_cast<std::size_t>(token) * dim + k];
    };
    const auto W = [&](std::int32_t k, std::int32_t token) -> double& {
        return p.output[static_cast<std::size_t>(k) * V + token];
    };

    for (std::int32_t j = 0; j < n_chain; ++j) {
        E(family.filler_token(j), j) = 1.0;
    }
    E(family.go_token(), go_dim) = 1.0;
    E(family.vocab.bos_id, go_dim) = 1.0;
    E(family.plus_token(), go_dim) = 1.0;
    E(family.delim_token(), delim_dim) = 1.0;
    for (std::int32_t r = 0; r < family.modulus; ++r) {
        E(family.residue_token(r), sym_dim) = 1.0;
    }
    E(family.vocab.eos_id, term_dim) = 1.0;
    E(family.vocab.pad_id, term_dim) = 1.0;

    // At filler depth k the choice is continue (logit 3) versus the
    // delimiter. The exit margin crosses zero after three fillers, with a
    // steeper ramp at the start and a gentle 0.06-per-depth ramp beyond, so
    // preference training shifts the greedy exit depth smoothly over a wide
    // range.
    const double continue_strength = 3.0;
    const double exit_base = 2.75;
    const double start_strength = 4.0;
    const double answer_strength = 2.0;
    const double stop_strength = 6.0;

    for (std::int32_t k = 0; k < n_chain; ++k) {
        if (k + 1 < n_chain) {
            W(k, family.filler_token(k + 1)) = continue_strength;
            W(k, family.delim_token()) =
                exit_base + 0.15 * std::min<std::int32_t>(k, 2) + 0.06 * std::max<std::int32_t>(0, k - 2);
        } else {
            W(k, family.delim_token()) = stop_strength; // end of the alphabet
        }
    }
    W(go_dim, family.filler_token(0)) = start_strength;
    for (std::int32_t r = 0; r < family.modulus; ++r) {
        W(delim_dim, family.residue_token(r)) = answer_strength;
    }
    // Edges the task grammar never takes start suppressed, so slow embedding
    // drift during training cannot flip them into greedy self-loops.
    W(delim_dim, family.delim_token()) = -stop_strength;
    W(sym_dim, family.delim_token()) = -stop_strength;
    W(sym_dim, family.vocab.eos_id) = stop_strength;
    W(term_dim, family.vocab.eos_id) = stop_strength;

    if (noise > 0.0) {
        Rng rng = Rng(seed).stream(0x7072696fULL); // "prio"
        for (double& x : p.embedding) {
            x += rng.uniform(-noise, noise);
        }
        for (double& x : p.output) {
            x += rng.uniform(-noise, noise);
        }
        for (double& x : p.bias) {
            x += rng.uniform(-noise, noise);
        }
    }
    return p;
}

std::vector<TaskInstance> load_tasks(const std::string& path, const TaskFamily& family) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open: " + path);
    }
    std::vector<TaskInstance> tasks;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        lineno += 1;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            TaskInstance t;
            t.id = j.at("id").get<std::string>();
            for (const auto& x : j.at("prompt")) {
                t.prompt.push_back(x.get<std::int32_t>());
            }
            t.answer = j.at("answer").get<std::string>();
            const std::int32_t r = std::stoi(t.answer);
            if (r < 0 || r >= family.modulus) {
                throw std::runtime_error("answer outside the residue alphabet");
            }
            t.canonical_answer = {family.residue_token(r)};
            t.answer_delim = family.delim_token();
            t.eos_token = family.vocab.eos_id;
            tasks.push_back(std::move(t));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return tasks;
}

void save_tasks(const std::string& path, std::span<const TaskInstance> tasks) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    for (const auto& t : tasks) {
        nlohmann::ordered_json j;
        j["id"] = t.id;
        j["prompt"] = t.prompt;
        j["answer"] = t.answer;
        out << j.dump() << "\n";
    }
}

}  // namespace prefopt
