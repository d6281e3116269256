#pragma once

#include <string>
#include <utility>
#include <vector>

#include "icai/generation.hpp"
#include "icai/providers.hpp"
#include "icai/types.hpp"

namespace icai {

// One order-tagged judgment of a pair under a constitution. forward presents
// (chosen, rejected) as (first, second); flipped swaps them. Unparseable
// replies get one reprompt, then count as an abstention (score 0.5).
JudgeDecision regenerate_preference(const PreferencePair& pair,
                                    const Constitution& constitution,
                                    CompletionProvider& judge,
                                    const TemplateStore& templates,
                                    PresentationOrder order);

struct RegenReport {
    double accuracy = 0.0;
    // (forward, flipped) per pair, in input order.
    std::vector<std::pair<JudgeDecision, JudgeDecision>> decisions;
    std::vector<std::string> notes;  // per-pair error notes, empty when clean
};

// Judges every pair in both presentation orders and averages the two scores,
// cancelling any slot bias of the judge. A judge failure on a pair records
// 0.5 with a note; the run continues.
RegenReport debiased_accuracy(const std::vector<PreferencePair>& test,
                              const Constitution& constitution,
                              CompletionProvider& judge, const TemplateStore& templates,
                              int max_inflight = 4);

// One judge call per (candidate, ground truth) cell requesting an integer in
// [1, 10]. Unparseable replies get one reprompt, then the cell is 1 with a
// warning; transport failures propagate with the cell coordinates.
SimilarityMatrix similarity_matrix(const std::vector<std::string>& candidates,
                                   const std::vector<std::string>& ground_truth,
                                   CompletionProvider& judge,
                                   const TemplateStore& templates,
                                   int max_inflight = 4);

struct OptimalMatch {
    std::vector<std::pair<int, int>> matching;  // (row, col), rows ascending
    double total_score = 0.0;                   // over real matched cells
    double mean_score = 0.0;
};

// Maximum-total-similarity assignment (Hungarian algorithm). Rectangular
// matrices are padded with score-0 dummy rows/cols; dummy cells are excluded
// from total and mean. Among equal-total assignments the lexicographically
// smallest one (by column of row 0, then row 1, ...) is returned.
OptimalMatch optimal_match(const SimilarityMatrix& matrix);

struct WinRateInstructionDetail {
    std::string instruction;
    std::string base_response;
    std::string con_response;
    JudgeChoice forward = JudgeChoice::none;   // slots: (con, base)
    JudgeChoice flipped = JudgeChoice::none;   // slots: (base, con)
    bool excluded = false;
    std::string exclusion_reason;
    bool con_wins = false;
    int token_diff = 0;  // tokens(con) - tokens(base), whitespace tokenization
};

struct WinRateResult {
    WinRateReport report;
    std::vector<WinRateInstructionDetail> details;
};

// Binomial standard error sqrt(p(1-p)/n).
double binomial_std_error(double p, int n);

int whitespace_token_count(const std::string& text);

// Head-to-head harness: for each instruction generate a base response and a
// constitution-prepended response, judge in both orders, and exclude
// instructions where the orders disagree on the winner or both abstain.
WinRateResult win_rate_eval(const std::vector<std::string>& instructions,
                            CompletionProvider& base_gen, CompletionProvider& con_gen,
                            CompletionProvider& judge, const Constitution& constitution,
                            const TemplateStore& templates, int max_inflight = 4);

}  // namespace icai
