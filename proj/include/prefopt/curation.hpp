// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Preference-pair curation: from per-query candidate answers with
// verification outcomes to filtered preference-pair records. Stages run in
// order: verify-score filter, chosen/rejected selection, ground-truth
// arbitration (with flag/pass-rate recomputation and re-selection after a
// correction), pass-rate exclusion, record emission sorted by query id.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prefopt/model.hpp"

namespace prefopt {

enum class Category { math, code, science, instruction_follow, other };

const char* to_string(Category c);
Category category_from_string(const std::string& s);

struct CandidateAnswer {
    TokenSeq tokens;
    std::string final_answer;
    bool verified = false; // passed the task verifier against the ground truth
    double quality = 0.0;  // externally supplied ranking score
    std::int32_t source_round = 0;
};

struct QueryRecord {
    std::string id;
    Category category = Category::other;
    TokenSeq prompt;
    std::string ground_truth;
    std::vector<CandidateAnswer> candidates;
};

struct PreferencePairRecord {
    std::string query_id;
    Category category = Category::other;
    TokenSeq prompt;
    TokenSeq chosen;
    TokenSeq rejected;
    double verify_score = 0.0; // strictly in (0,1) for emitted records
    double pass_rate = 0.0;    // strictly in (0,1) for emitted records
    bool gt_corrected = false; // arbitration changed the ground-truth label
};

enum class LengthUnit { tokens, characters };
enum class PairSide { chosen, rejected };

struct LengthStats {
    double mean = 0.0;
    double median = 0.0; // lower of the two middle values for even counts
    double mode = 0.0;   // ties broken toward the smallest value
    std::int64_t count = 0;
    LengthUnit unit = LengthUnit::tokens;
};

// Fraction of all candidates passing verification.
double compute_verify_score(const QueryRecord& q);

// Keeps exactly the queries with verify score strictly inside (0,1).
std::vector<QueryRecord> filter_by_verify_score(std::vector<QueryRecord> queries);

// chosen = highest-quality verified candidate; rejected = lowest-quality
// unverified candidate. Quality ties break toward shorter token length for
// chosen and longer for rejected, then toward the lowest candidate index.
// Empty-pool queries yield nullopt (a skip, not an error).
struct SelectedPair {
    std::size_t chosen_index = 0;
    std::size_t rejected_index = 0;
};
std::optional<SelectedPair> select_chosen_rejected(const QueryRecord& q);

// Fraction verified among candidates whose source_round is in rounds; at
// least one candidate must match.
double compute_pass_rate(const QueryRecord& q, const std::set<std::int32_t>& rounds);

// Strict-plurality final answer, or nullopt on a tie.
std::optional<std::string> answer_mode(std::span<const CandidateAnswer> candidates);

// Third-party answer source consulted when the candidate mode disagrees with
// the recorded ground truth. Must be safe for concurrent calls.
struct Arbiter {
    virtual ~Arbiter() = default;
    virtual std::optional<std::string> alt_answer(const QueryRecord& q) = 0;
};

// File-backed arbiter: JSON Lines of {"id": ..., "alt_answer": ...}.
class TableArbiter : public Arbiter {
  public:
    TableArbiter() = default;
    explicit TableArbiter(std::map<std::string, std::string> table) : table_(std::move(table)) {}
    static TableArbiter load(const std::string& path);

    std::optional<std::string> alt_answer(const QueryRecord& q) override;

  private:
    std::map<std::string, std::string> table_;
};

enum class GtAction { keep, corrected, discard };

struct GtDecision {
    GtAction action = GtAction::keep;
    std::string new_gt;  // set when action == corrected
    std::string reason;  // set when action == discard
};

// mode == gt: keep without consulting the arbiter. Otherwise (including a
// mode tie, treated as a mismatch) ask the arbiter; if its answer, the ground
// truth and the mode are pairwise distinct the query is discarded, else the
// ground truth is corrected to the arbiter's answer. Arbiter failure
// discards with a reason.
GtDecision correct_ground_truth(const QueryRecord& q, Arbiter& arbiter);

struct CurateConfig {
    // Rounds whose candidates define the pass rate (the later distillation
    // rounds); verify score always uses all candidates.
    std::set<std::int32_t> pass_rate_rounds = {1, 2, 3, 4};
};

struct StageCounts {
    std::int64_t input = 0;
    std::int64_t removed_verify_score = 0;
    std::int64_t skipped_no_pair = 0;
    std::int64_t discarded_arbitration = 0;
    std::int64_t corrected = 0; // informational; corrected queries continue
    std::int64_t skipped_reselect = 0;
    std::int64_t removed_pass_rate = 0;
    std::int64_t removed_pass_rate_undefined = 0;
    std::int64_t emitted = 0;
};

struct CurationReport {
    StageCounts total;
    std::map<Category, StageCounts> by_category;
};

struct CurationOutput {
    std::vector<PreferencePairRecord> pairs; // sorted by query id
    CurationReport report;
};

CurationOutput curate(std::vector<QueryRecord> queries, Arbiter& arbiter,
                      const CurateConfig& cfg = {});

// Character length of the canonical text rendering of a token sequence
// (space-separated decimal ids).
std::int64_t char_length(const TokenSeq& tokens);

LengthStats length_statistics(std::span<const PreferencePairRecord> records, PairSide side,
                              LengthUnit unit);

// Counts per half-open bucket [k*w, (k+1)*w); zero-count buckets omitted,
// ascending bucket order.
std::vector<std::pair<std::int64_t, std::int64_t>> length_histogram(
    std::span<const PreferencePairRecord> records, PairSide side, LengthUnit unit,
    std::int64_t bucket_width);

// ---- JSON Lines I/O ----

std::vector<QueryRecord> load_query_records(const std::string& path);
void save_query_records(const std::string& path, std::span<const QueryRecord> records);

std::vector<PreferencePairRecord> load_pair_records(const std::string& path);
void save_pair_records(const std::string& path, std::span<const PreferencePairRecord> records);

std::string report_to_json(const CurationReport& report);
std::string report_to_text(const CurationReport& report);

}  // namespace prefopt
