// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefopt/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace prefopt {

using ordered_json = nlohmann::ordered_json;

const char* to_string(Category c) {
    switch (c) {
        case Category::math: return "math";
        case Category::code: return "code";
        case Category::science: return "science";
        case Category::instruction_follow: return "instruction_follow";
        case Category::other: return "other";
    }
    return "other";
}

Category category_from_string(const std::string& s) {
    if (s == "math") return Category::math;
    if (s == "code") return Category::code;
    if (s == "science") return Category::science;
    if (s == "instruction_follow") return Category::instruction_follow;
    if (s == "other") return Category::other;
    throw std::runtime_error("unknown category: " + s);
}

double compute_verify_score(const QueryRecord& q) {
    if (q.candidates.empty()) {
        throw std::invalid_argument("compute_verify_score: query has no candidates");
    }
    std::int64_t passed = 0;
    for (const auto& c : q.candidates) {
        passed += c.verified ? 1 : 0;
    }
    return static_cast<double>(passed) / static_cast<double>(q.candidates.size());
}

std::vector<QueryRecord> filter_by_verify_score(std::vector<QueryRecord> queries) {
    std::vector<QueryRecord> kept;
    kept.reserve(queries.size());
    for (auto& q : queries) {
        const double s = compute_verify_score(q);
        if (s > 0.0 && s < 1.0) {
            kept.push_back(std::move(q));
        }
    }
    return kept;
}

namespace {

// true when a beats b for the chosen slot
bool better_chosen(const CandidateAnswer& a, std::size_t ia, const CandidateAnswer& b,
                   std::size_t ib) {
    if (a.quality != b.quality) return a.quality > b.quality;
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    return ia < ib;
}

// true when a beats b for the rejected slot
bool better_rejected(const CandidateAnswer& a, std::size_t ia, const CandidateAnswer& b,
                     std::size_t ib) {
    if (a.quality != b.quality) return a.quality < b.quality;
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() > b.tokens.size();
    return ia < ib;
}

}  // namespace

std::optional<SelectedPair> select_chosen_rejected(const QueryRecord& q) {
    std::optional<std::size_t> chosen;
    std::optional<std::size_t> rejected;
    for (std::size_t i = 0; i < q.candidates.size(); ++i) {
        const auto& c = q.candidates[i];
        if (c.verified) {
            if (!chosen || better_chosen(c, i, q.candidates[*chosen], *chosen)) {
                chosen = i;
            }
        } else {
            if (!rejected || better_rejected(c, i, q.candidates[*rejected], *rejected)) {
                rejected = i;
            }
        }
    }
    if (!chosen || !rejected) {
        return std::nullopt;
    }
    return SelectedPair{*chosen, *rejected};
}

double compute_pass_rate(const QueryRecord& q, const std::set<std::int32_t>& rounds) {
    std::int64_t total = 0;
    std::int64_t passed = 0;
    for (const auto& c : q.candidates) {
        if (rounds.count(c.source_round) == 0) {
            continue;
        }
        total += 1;
        passed += c.verified ? 1 : 0;
    }
    if (total == 0) {
        throw std::invalid_argument("compute_pass_rate: no candidates in the selected rounds");
    }
    return static_cast<double>(passed) / static_cast<double>(total);
}

std::optional<std::string> answer_mode(std::span<const CandidateAnswer> candidates) {
    if (candidates.empty()) {
        throw std::invalid_argument("answer_mode: no candidates");
    }
    std::map<std::string, std::int64_t> counts;
    for (const auto& c : candidates) {
        counts[c.final_answer] += 1;
    }
    std::int64_t best = 0;
    for (const auto& [label, n] : counts) {
        best = std::max(best, n);
    }
    std::optional<std::string> mode;
    for (const auto& [label, n] : counts) {
        if (n == best) {
            if (mode) {
                return std::nullopt; // tied plurality
            }
            mode = label;
        }
    }
    return mode;
}

TableArbiter TableArbiter::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("arbiter table: cannot open: " + path);
    }
    std::map<std::string, std::string> table;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        lineno += 1;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            table[j.at("id").get<std::string>()] = j.at("alt_answer").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return TableArbiter(std::move(table));
}

std::optional<std::string> TableArbiter::alt_answer(const QueryRecord& q) {
    const auto it = table_.find(q.id);
    if (it == table_.end()) {
        return std::nullopt;
    }
    return it->second;
}

GtDecision correct_ground_truth(const QueryRecord& q, Arbiter& arbiter) {
    const auto mode = answer_mode(q.candidates);
    if (mode && *mode == q.ground_truth) {
        return GtDecision{GtAction::keep, "", ""};
    }
    const auto alt = arbiter.alt_answer(q);
    if (!alt) {
        return GtDecision{GtAction::discard, "", "arbiter gave no answer"};
    }
    // A tied mode counts as distinct from every label.
    const bool mode_distinct = !mode || (*mode != q.ground_truth && *mode != *alt);
    if (*alt != q.ground_truth && mode_distinct) {
        return GtDecision{GtAction::discard, "", "mode, ground truth and arbiter all disagree"};
    }
    return GtDecision{GtAction::corrected, *alt, ""};
}

namespace {

StageCounts& category_counts(CurationReport& report, Category c) {
    return report.by_category[c];
}

}  // namespace

CurationOutput curate(std::vector<QueryRecord> queries, Arbiter& arbiter,
                      const CurateConfig& cfg) {
    std::unordered_set<std::string> seen;
    for (const auto& q : queries) {
        if (!seen.insert(q.id).second) {
            throw std::invalid_argument("curate: duplicate query id: " + q.id);
        }
    }
    std::sort(queries.begin(), queries.end(),
              [](const QueryRecord& a, const QueryRecord& b) { return a.id < b.id; });

    CurationOutput out;
    for (auto& q : queries) {
        StageCounts& cat = category_counts(out.report, q.category);
        out.report.total.input += 1;
        cat.input += 1;

        double verify_score = compute_verify_score(q);
        if (!(verify_score > 0.0 && verify_score < 1.0)) {
            out.report.total.removed_verify_score += 1;
            cat.removed_verify_score += 1;
            continue;
        }

        auto selected = select_chosen_rejected(q);
        if (!selected) {
            out.report.total.skipped_no_pair += 1;
            cat.skipped_no_pair += 1;
            continue;
        }

        const GtDecision decision = correct_ground_truth(q, arbiter);
        bool gt_corrected = false;
        if (decision.action == GtAction::discard) {
            out.report.total.discarded_arbitration += 1;
            cat.discarded_arbitration += 1;
            continue;
        }
        if (decision.action == GtAction::corrected && decision.new_gt != q.ground_truth) {
            out.report.total.corrected += 1;
            cat.corrected += 1;
            gt_corrected = true;
            q.ground_truth = decision.new_gt;
            // Re-verify against the corrected label, then re-run selection so
            // the emitted pair reflects the final flags. An arbiter answer
            // that merely confirms the existing label changes nothing.
            for (auto& c : q.candidates) {
                c.verified = c.final_answer == q.ground_truth;
            }
            verify_score = compute_verify_score(q);
            selected = select_chosen_rejected(q);
            if (!selected) {
                out.report.total.skipped_reselect += 1;
                cat.skipped_reselect += 1;
                continue;
            }
        }

        std::int64_t in_rounds = 0;
        for (const auto& c : q.candidates) {
            in_rounds += cfg.pass_rate_rounds.count(c.source_round) ? 1 : 0;
        }
        if (in_rounds == 0) {
            out.report.total.removed_pass_rate_undefined += 1;
            cat.removed_pass_rate_undefined += 1;
            continue;
        }
        const double pass_rate = compute_pass_rate(q, cfg.pass_rate_rounds);
        if (!(pass_rate > 0.0 && pass_rate < 1.0)) {
            out.report.total.removed_pass_rate += 1;
            cat.removed_pass_rate += 1;
            continue;
        }

        PreferencePairRecord rec;
        rec.query_id = q.id;
        rec.category = q.category;
        rec.prompt = q.prompt;
        rec.chosen = q.candidates[selected->chosen_index].tokens;
        rec.rejected = q.candidates[selected->rejected_index].tokens;
        rec.verify_score = verify_score;
        rec.pass_rate = pass_rate;
        rec.gt_corrected = gt_corrected;
        if (rec.chosen == rec.rejected) {
            // A verified and an unverified candidate can never share tokens
            // under a deterministic verifier, but guard against odd inputs.
            out.report.total.skipped_no_pair += 1;
            cat.skipped_no_pair += 1;
            continue;
        }
        out.pairs.push_back(std::move(rec));
        out.report.total.emitted += 1;
        cat.emitted += 1;
    }
    return out;
}

std::int64_t char_length(const TokenSeq& tokens) {
    std::int64_t chars = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        chars += static_cast<std::int64_t>(std::to_string(tokens[i]).size());
        if (i + 1 < tokens.size()) {
            chars += 1; // separator
        }
    }
    return chars;
}

namespace {

std::vector<std::int64_t> side_lengths(std::span<const PreferencePairRecord> records,
                                       PairSide side, LengthUnit unit) {
    std::vector<std::int64_t> lengths;
    lengths.reserve(records.size());
    for (const auto& r : records) {
        const TokenSeq& t = side == PairSide::chosen ? r.chosen : r.rejected;
        lengths.push_back(unit == LengthUnit::tokens ? static_cast<std::int64_t>(t.size())
                                                     : char_length(t));
    }
    return lengths;
}

}  // namespace

LengthStats length_statistics(std::span<const PreferencePairRecord> records, PairSide side,
                              LengthUnit unit) {
    if (records.empty()) {
        throw std::invalid_argument("length_statistics: no records");
    }
    std::vector<std::int64_t> lengths = side_lengths(records, side, unit);
    std::sort(lengths.begin(), lengths.end());

    LengthStats stats;
    stats.unit = unit;
    stats.count = static_cast<std::int64_t>(lengths.size());

    double sum = 0.0;
    for (std::int64_t l : lengths) {
        sum += static_cast<double>(l);
    }
    stats.mean = sum / static_cast<double>(lengths.size());
    // Lower middle value for even counts.
    stats.median = static_cast<double>(lengths[(lengths.size() - 1) / 2]);

    std::int64_t best_count = 0;
    std::int64_t best_value = lengths.front();
    std::size_t i = 0;
    while (i < lengths.size()) {
        std::size_t j = i;
        while (j < lengths.size() && lengths[j] == lengths[i]) {
            ++j;
        }
        const std::int64_t run = static_cast<std::int64_t>(j - i);
        if (run > best_count) { // strictly greater keeps the smallest value on ties
            best_count = run;
            best_value = lengths[i];
        }
        i = j;
    }
    stats.mode = static_cast<double>(best_value);
    return stats;
}

std::vector<std::pair<std::int64_t, std::int64_t>> length_histogram(
    std::span<const PreferencePairRecord> records, PairSide side, LengthUnit unit,
    std::int64_t bucket_width) {
    if (bucket_width < 1) {
        throw std::invalid_argument("length_histogram: bucket width must be >= 1");
    }
    std::map<std::int64_t, std::int64_t> buckets;
    for (std::int64_t l : side_lengths(records, side, unit)) {
        buckets[(l / bucket_width) * bucket_width] += 1;
    }
    return {buckets.begin(), buckets.end()};
}

// ---- JSON Lines I/O ----

namespace {

TokenSeq tokens_from_json(const nlohmann::json& j) {
    TokenSeq t;
    t.reserve(j.size());
    for (const auto& x : j) {
        t.push_back(x.get<std::int32_t>());
    }
    return t;
}

template <class Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open: " + path);
    }
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        lineno += 1;
        if (line.empty()) {
            continue;
        }
        try {
            fn(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    return out;
}

}  // namespace

std::vector<QueryRecord> load_query_records(const std::string& path) {
    std::vector<QueryRecord> records;
    for_each_jsonl(path, [&](const nlohmann::json& j) {
        QueryRecord q;
        q.id = j.at("id").get<std::string>();
        q.category = category_from_string(j.at("category").get<std::string>());
        q.prompt = tokens_from_json(j.at("prompt"));
        q.ground_truth = j.at("ground_truth").get<std::string>();
        for (const auto& cj : j.at("candidates")) {
            CandidateAnswer c;
            c.tokens = tokens_from_json(cj.at("tokens"));
            if (c.tokens.empty()) {
                throw std::runtime_error("candidate has no tokens");
            }
            c.final_answer = cj.at("final_answer").get<std::string>();
            c.verified = cj.at("verified").get<bool>();
            c.quality = cj.at("quality").get<double>();
            c.source_round = cj.at("source_round").get<std::int32_t>();
            q.candidates.push_back(std::move(c));
        }
        if (q.candidates.empty()) {
            throw std::runtime_error("query has no candidates");
        }
        records.push_back(std::move(q));
    });
    return records;
}

void save_query_records(const std::string& path, std::span<const QueryRecord> records) {
    auto out = open_for_write(path);
    for (const auto& q : records) {
        ordered_json j;
        j["id"] = q.id;
        j["category"] = to_string(q.category);
        j["prompt"] = q.prompt;
        j["ground_truth"] = q.ground_truth;
        auto& cands = j["candidates"] = ordered_json::array();
        for (const auto& c : q.candidates) {
            ordered_json cj;
            cj["tokens"] = c.tokens;
            cj["final_answer"] = c.final_answer;
            cj["verified"] = c.verified;
            cj["quality"] = c.quality;
            cj["source_round"] = c.source_round;
            cands.push_back(std::move(cj));
        }
        out << j.dump() << "\n";
    }
}

std::vector<PreferencePairRecord> load_pair_records(const std::string& path) {
    std::vector<PreferencePairRecord> records;
    for_each_jsonl(path, [&](const nlohmann::json& j) {
        PreferencePairRecord r;
        r.query_id = j.at("query_id").get<std::string>();
        r.category = category_from_string(j.at("category").get<std::string>());
        r.prompt = tokens_from_json(j.at("prompt"));
        r.chosen = tokens_from_json(j.at("chosen"));
        r.rejected = tokens_from_json(j.at("rejected"));
        r.verify_score = j.at("verify_score").get<double>();
        r.pass_rate = j.at("pass_rate").get<double>();
        r.gt_corrected = j.at("gt_corrected").get<bool>();
        if (r.chosen.empty() || r.rejected.empty()) {
            throw std::runtime_error("pair record has an empty response");
        }
        records.push_back(std::move(r));
    });
    return records;
}

void save_pair_records(const std::string& path, std::span<const PreferencePairRecord> records) {
    auto out = open_for_write(path);
    for (const auto& r : records) {
        ordered_json j;
        j["query_id"] = r.query_id;
        j["category"] = to_string(r.category);
        j["prompt"] = r.prompt;
        j["chosen"] = r.chosen;
        j["rejected"] = r.rejected;
        j["verify_score"] = r.verify_score;
        j["pass_rate"] = r.pass_rate;
        j["gt_corrected"] = r.gt_corrected;
        out << j.dump() << "\n";
    }
}

namespace {

ordered_json counts_to_json(const StageCounts& c) {
    ordered_json j;
    j["input"] = c.input;
    j["removed_verify_score"] = c.removed_verify_score;
    j["skipped_no_pair"] = c.skipped_no_pair;
    j["discarded_arbitration"] = c.discarded_arbitration;
    j["corrected"] = c.corrected;
    j["skipped_reselect"] = c.skipped_reselect;
    j["removed_pass_rate"] = c.removed_pass_rate;
    j["removed_pass_rate_undefined"] = c.removed_pass_rate_undefined;
    j["emitted"] = c.emitted;
    return j;
}

}  // namespace

std::string report_to_json(const CurationReport& report) {
    ordered_json j;
    j["total"] = counts_to_json(report.total);
    auto& cats = j["by_category"] = ordered_json::object();
    for (const auto& [cat, counts] : report.by_category) {
        cats[to_string(cat)] = counts_to_json(counts);
    }
    return j.dump(2) + "\n";
}

std::string report_to_text(const CurationReport& report) {
    std::ostringstream out;
    const auto line = [&out](const char* label, std::int64_t n) {
        out << "  " << label << ": " << n << "\n";
    };
    const auto block = [&](const std::string& title, const StageCounts& c) {
        out << title << "\n";
        line("input", c.input);
        line("removed by verify-score filter", c.removed_verify_score);
        line("skipped, no chosen/rejected pair", c.skipped_no_pair);
        line("discarded by arbitration", c.discarded_arbitration);
        line("corrected ground truth", c.corrected);
        line("skipped after correction, no pair", c.skipped_reselect);
        line("removed by pass-rate filter", c.removed_pass_rate);
        line("removed, pass rate undefined", c.removed_pass_rate_undefined);
        line("emitted", c.emitted);
    };
    block("total", report.total);
    for (const auto& [cat, counts] : report.by_category) {
        block(to_string(cat), counts);
    }
    return out.str();
}

}  // namespace prefopt
