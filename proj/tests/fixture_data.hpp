// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0
//
// The six-query curation fixture shared by the unit, CLI and acceptance
// suites. Hand trace (pass-rate rounds = {1}):
//   q1 verify score 0                    -> removed by the first filter
//   q2 verify score 1                    -> removed by the first filter
//   q3 mode == gt                        -> kept; chosen [20,21], rejected
//                                           [20,25,26], scores 0.6 / 0.5
//   q4 corrected to "B"; every candidate then verifies -> no rejected pool,
//                                           skipped after re-selection
//   q5 mode "B", gt "A", arbiter "C"     -> discarded (all three disagree)
//   q6 corrected to "B"; round-1 pass rate becomes 1  -> removed at the
//                                           last stage
// Survivors: exactly q3.

#pragma once

#include <string>
#include <vector>

#include "prefopt/curation.hpp"

namespace fixture {

inline prefopt::CandidateAnswer cand(prefopt::TokenSeq tokens, std::string answer, bool verified,
                                     double quality, std::int32_t round) {
    return prefopt::CandidateAnswer{std::move(tokens), std::move(answer), verified, quality,
                                    round};
}

inline std::vector<prefopt::QueryRecord> six_query_fixture() {
    using prefopt::Category;
    using prefopt::QueryRecord;
    std::vector<QueryRecord> qs;

    qs.push_back({"q1",
                  Category::math,
                  {1, 6, 4, 7, 5},
                  "A",
                  {cand({10, 11}, "B", false, 0.5, 0), cand({10, 12}, "C", false, 0.4, 0),
                   cand({10, 13}, "B", false, 0.3, 1)}});

    qs.push_back({"q2",
                  Category::code,
                  {1, 7, 4, 8, 5},
                  "A",
                  {cand({11}, "A", true, 0.9, 0), cand({12}, "A", true, 0.8, 1)}});

    qs.push_back({"q3",
                  Category::science,
                  {1, 8, 4, 9, 5},
                  "A",
                  {cand({20, 21}, "A", true, 0.9, 0), cand({20, 22}, "B", false, 0.2, 0),
                   cand({20, 23}, "A", true, 0.5, 0), cand({20, 24}, "A", true, 0.8, 1),
                   cand({20, 25, 26}, "B", false, 0.1, 1)}});

    // The external verifier passed one "B" against gt "A"; once the arbiter
    // corrects the label to "B", all four candidates verify.
    qs.push_back({"q4",
                  Category::code,
                  {1, 9, 4, 10, 5},
                  "A",
                  {cand({30, 31}, "B", true, 0.9, 0), cand({30, 32}, "B", false, 0.5, 0),
                   cand({30, 33}, "B", false, 0.7, 1), cand({30, 34}, "B", false, 0.3, 1)}});

    qs.push_back({"q5",
                  Category::instruction_follow,
                  {1, 10, 4, 11, 5},
                  "A",
                  {cand({40, 41}, "B", false, 0.9, 0), cand({40, 42}, "B", false, 0.8, 0),
                   cand({40, 43}, "A", true, 0.5, 1), cand({40, 44}, "B", false, 0.2, 1)}});

    qs.push_back({"q6",
                  Category::other,
                  {1, 11, 4, 12, 5},
                  "A",
                  {cand({50, 51}, "B", false, 0.9, 0), cand({50, 52}, "A", true, 0.6, 0),
                   cand({50, 53}, "C", false, 0.2, 0), cand({50, 54}, "B", false, 0.8, 1),
                   cand({50, 55}, "B", false, 0.7, 1)}});
    return qs;
}

inline prefopt::TableArbiter six_query_arbiter() {
    return prefopt::TableArbiter({{"q4", "B"}, {"q5", "C"}, {"q6", "B"}});
}

inline prefopt::CurateConfig six_query_config() {
    prefopt::CurateConfig cfg;
    cfg.pass_rate_rounds = {1};
    return cfg;
}

}  // namespace fixture
