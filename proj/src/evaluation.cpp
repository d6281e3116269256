#include "icai/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "icai/error.hpp"

namespace icai {

namespace {

std::string numbered_list(const std::vector<std::string>& items) {
    std::ostringstream os;
    for (std::size_t i = 0; i < items.size(); ++i)
        os << (i + 1) << ". " << items[i] << "\n";
    std::string s = os.str();
    if (!s.empty()) s.pop_back();
    return s;
}

JudgeChoice parse_slot_choice(const std::string& reply) {
    std::string u;
    for (char c : reply)
        u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    bool first = u.find("FIRST") != std::string::npos;
    bool second = u.find("SECOND") != std::string::npos;
    bool none = u.find("NONE") != std::string::npos;
    if (first && !second && !none) return JudgeChoice::first;
    if (second && !first && !none) return JudgeChoice::second;
    if (none && !first && !second) return JudgeChoice::none;
    throw ParseError("ambiguous judge reply: " + reply.substr(0, 60));
}

JudgeChoice judge_slots(CompletionProvider& judge, const std::string& prompt) {
    CompletionRequest req;
    req.provider_id = judge.provider_id();
    req.model = judge.model();
    req.prompt = prompt;
    req.temperature = 0.0;
    req.max_tokens = 8;
    try {
        return parse_slot_choice(judge.complete(req));
    } catch (const ParseError&) {
        req.seed = 1;
        try {
            return parse_slot_choice(judge.complete(req));
        } catch (const ParseError&) {
            std::cerr << "warning: unparseable judge reply twice, recording abstention\n";
            return JudgeChoice::none;
        }
    }
}

double slot_score(JudgeChoice choice, PresentationOrder order) {
    if (choice == JudgeChoice::none) return 0.5;
    const bool picked_first = choice == JudgeChoice::first;
    const bool chosen_is_first = order == PresentationOrder::forward;
    return picked_first == chosen_is_first ? 1.0 : 0.0;
}

}  // namespace

JudgeDecision regenerate_preference(const PreferencePair& pair,
                                    const Constitution& constitution,
                                    CompletionProvider& judge,
                                    const TemplateStore& templates,
                                    PresentationOrder order) {
    if (constitution.principles.empty())
        throw ValidationError("regenerate_preference: empty constitution");
    const bool forward = order == PresentationOrder::forward;
    std::map<std::string, std::string> bindings{
        {"principles", numbered_list(constitution.principles)},
        {"instruction", pair.instruction},
        {"first", forward ? pair.chosen : pair.rejected},
        {"second", forward ? pair.rejected : pair.chosen},
    };
    std::string prompt = render_prompt(templates.get("regen_judge"), bindings);
    JudgeDecision d;
    d.pair_id = pair.id;
    d.order = order;
    d.choice = judge_slots(judge, prompt);
    d.score = slot_score(d.choice, order);
    return d;
}

RegenReport debiased_accuracy(const std::vector<PreferencePair>& test,
                              const Constitution& constitution,
                              CompletionProvider& judge, const TemplateStore& templates,
                              int max_inflight) {
    if (test.empty()) throw ValidationError("debiased_accuracy: empty test set");
    RegenReport report;
    report.decisions.resize(test.size());
    report.notes.resize(test.size());
    bounded_parallel_for(test.size(), max_inflight, [&](std::size_t i) {
        const auto& pair = test[i];
        try {
            auto fwd = regenerate_preference(pair, constitution, judge, templates,
                                             PresentationOrder::forward);
            auto flp = regenerate_preference(pair, constitution, judge, templates,
                                             PresentationOrder::flipped);
            report.decisions[i] = {fwd, flp};
        } catch (const Error& e) {
            JudgeDecision abstain;
            abstain.pair_id = pair.id;
            abstain.choice = JudgeChoice::none;
            abstain.score = 0.5;
            JudgeDecision flipped = abstain;
            flipped.order = PresentationOrder::flipped;
            report.decisions[i] = {abstain, flipped};
            report.notes[i] = e.what();
        }
    });
    double sum = 0.0;
    for (const auto& [fwd, flp] : report.decisions) sum += 0.5 * (fwd.score + flp.score);
    report.accuracy = sum / static_cast<double>(test.size());
    return report;
}

namespace {

std::optional<int> parse_score_1_10(const std::string& reply) {
    for (std::size_t i = 0; i < reply.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
        std::size_t j = i;
        while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
        int v = std::stoi(reply.substr(i, j - i));
        if (v >= 1 && v <= 10) return v;
        return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace

SimilarityMatrix similarity_matrix(const std::vector<std::string>& candidates,
                                   const std::vector<std::string>& ground_truth,
                                   CompletionProvider& judge,
                                   const TemplateStore& templates, int max_inflight) {
    if (candidates.empty() || ground_truth.empty())
        throw ValidationError("similarity_matrix: both principle lists must be nonempty");
    SimilarityMatrix m;
    m.cells.resize(static_cast<Eigen::Index>(candidates.size()),
                   static_cast<Eigen::Index>(ground_truth.size()));
    for (std::size_t r = 0; r < candidates.size(); ++r)
        m.row_ids.push_back("candidate-" + std::to_string(r));
    for (std::size_t c = 0; c < ground_truth.size(); ++c)
        m.col_ids.push_back("truth-" + std::to_string(c));

    const std::size_t n_cells = candidates.size() * ground_truth.size();
    bounded_parallel_for(n_cells, max_inflight, [&](std::size_t cell) {
        const std::size_t r = cell / ground_truth.size();
        const std::size_t c = cell % ground_truth.size();
        std::map<std::string, std::string> bindings{
            {"candidate", candidates[r]},
            {"reference", ground_truth[c]},
        };
        std::string prompt = render_prompt(templates.get("similarity"), bindings);
        CompletionRequest req;
        req.provider_id = judge.provider_id();
        req.model = judge.model();
        req.prompt = prompt;
        req.temperature = 0.0;
        req.max_tokens = 8;
        try {
            auto score = parse_score_1_10(judge.complete(req));
            if (!score) {
                req.seed = 1;
                score = parse_score_1_10(judge.complete(req));
            }
            if (!score) {
                std::cerr << "warning: unparseable similarity score at (" << r << ", " << c
                          << "), recording 1\n";
                score = 1;
            }
            m.cells(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *score;
        } catch (const Error& e) {
            throw ProviderError("similarity cell (" + std::to_string(r) + ", " +
                                std::to_string(c) + ") failed: " + e.what());
        }
    });
    return m;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// O(n^3) Hungarian algorithm, minimization, square cost matrix.
// Returns row -> col and the optimal total cost.
std::pair<std::vector<int>, double> hungarian_min(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            int i0 = p[static_cast<std::size_t>(j0)], j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                             v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assignment(static_cast<std::size_t>(n), -1);
    double total = 0.0;
    for (int j = 1; j <= n; ++j) {
        if (p[static_cast<std::size_t>(j)] == 0) continue;
        assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
        total += cost(p[static_cast<std::size_t>(j)] - 1, j - 1);
    }
    return {assignment, total};
}

// Optimal total for the subproblem over free rows x free cols.
double optimal_subtotal(const Eigen::MatrixXd& cost, const std::vector<int>& rows,
                        const std::vector<int>& cols) {
    if (rows.empty()) return 0.0;
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c)
            sub(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                cost(rows[r], cols[c]);
    return hungarian_min(sub).second;
}

}  // namespace

OptimalMatch optimal_match(const SimilarityMatrix& matrix) {
    const int real_rows = static_cast<int>(matrix.cells.rows());
    const int real_cols = static_cast<int>(matrix.cells.cols());
    if (real_rows == 0 || real_cols == 0)
        throw ValidationError("optimal_match: empty matrix");
    if (!matrix.cells.allFinite())
        throw ValidationError("optimal_match: non-finite cell");
    const int n = std::max(real_rows, real_cols);
    // Maximize similarity by minimizing negated scores; dummy cells are 0.
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n, n);
    cost.topLeftCorner(real_rows, real_cols) = -matrix.cells;

    const double optimal_total = hungarian_min(cost).second;

    // Lexicographically smallest assignment among optima: fix rows in order,
    // choosing the smallest column that still permits the optimal total.
    constexpr double kTol = 1e-9;
    std::vector<int> free_cols(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) free_cols[static_cast<std::size_t>(c)] = c;
    std::vector<int> assignment(static_cast<std::size_t>(n), -1);
    double fixed_total = 0.0;
    for (int r = 0; r < n; ++r) {
        std::vector<int> rest_rows;
        for (int rr = r + 1; rr < n; ++rr) rest_rows.push_back(rr);
        for (std::size_t ci = 0; ci < free_cols.size(); ++ci) {
            int c = free_cols[ci];
            std::vector<int> rest_cols;
            for (std::size_t cj = 0; cj < free_cols.size(); ++cj)
                if (cj != ci) rest_cols.push_back(free_cols[cj]);
            double attempt = fixed_total + cost(r, c) +
                             optimal_subtotal(cost, rest_rows, rest_cols);
            if (attempt <= optimal_total + kTol) {
                assignment[static_cast<std::size_t>(r)] = c;
                fixed_total += cost(r, c);
                free_cols.erase(free_cols.begin() + static_cast<std::ptrdiff_t>(ci));
                break;
            }
        }
    }

    OptimalMatch out;
    int real_matches = 0;
    for (int r = 0; r < real_rows; ++r) {
        int c = assignment[static_cast<std::size_t>(r)];
        if (c < 0 || c >= real_cols) continue;  // matched to a dummy column
        out.matching.emplace_back(r, c);
        out.total_score += matrix.cells(r, c);
        ++real_matches;
    }
    out.mean_score = real_matches > 0 ? out.total_score / real_matches : 0.0;
    return out;
}

double binomial_std_error(double p, int n) {
    if (n <= 0) throw ValidationError("binomial_std_error: n must be positive");
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

int whitespace_token_count(const std::string& text) {
    std::istringstream in(text);
    std::string tok;
    int n = 0;
    while (in >> tok) ++n;
    return n;
}

WinRateResult win_rate_eval(const std::vector<std::string>& instructions,
                            CompletionProvider& base_gen, CompletionProvider& con_gen,
                            CompletionProvider& judge, const Constitution& constitution,
                            const TemplateStore& templates, int max_inflight) {
    if (instructions.empty()) throw ValidationError("win_rate_eval: no instructions");
    if (constitution.principles.empty())
        throw ValidationError("win_rate_eval: empty constitution");

    const std::string preamble =
        "Consider that your reply will be evaluated using the following rules:\n" +
        numbered_list(constitution.principles) + "\n\nInstruction:\n";

    WinRateResult result;
    result.details.resize(instructions.size());
    bounded_parallel_for(instructions.size(), max_inflight, [&](std::size_t i) {
        auto& d = result.details[i];
        d.instruction = instructions[i];
        try {
            d.base_response = base_gen.complete_prompt(instructions[i], 0.7, 1024);
            d.con_response = con_gen.complete_prompt(preamble + instructions[i], 0.7, 1024);
        } catch (const Error& e) {
            d.excluded = true;
            d.exclusion_reason = std::string("generation failed: ") + e.what();
            return;
        }
        d.token_diff = whitespace_token_count(d.con_response) -
                       whitespace_token_count(d.base_response);
        try {
            // forward: (con, base); flipped: (base, con)
            d.forward = judge_slots(
                judge, render_prompt(templates.get("winrate_judge"),
                                     {{"instruction", instructions[i]},
                                      {"first", d.con_response},
                                      {"second", d.base_response}}));
            d.flipped = judge_slots(
                judge, render_prompt(templates.get("winrate_judge"),
                                     {{"instruction", instructions[i]},
                                      {"first", d.base_response},
                                      {"second", d.con_response}}));
        } catch (const Error& e) {
            d.excluded = true;
            d.exclusion_reason = std::string("judging failed: ") + e.what();
            return;
        }
        auto verdict = [](JudgeChoice c, bool con_is_first) {
            if (c == JudgeChoice::none) return 0;  // abstain
            bool con = (c == JudgeChoice::first) == con_is_first;
            return con ? 1 : -1;
        };
        int vf = verdict(d.forward, true);
        int vr = verdict(d.flipped, false);
        if (vf == 0 && vr == 0) {
            d.excluded = true;
            d.exclusion_reason = "no clear preference: both orders abstained";
        } else if (vf != 0 && vr != 0 && vf != vr) {
            d.excluded = true;
            d.exclusion_reason = "no clear preference: orders disagree";
        } else {
            d.con_wins = (vf + vr) > 0;
        }
    });

    int wins = 0, excluded = 0;
    std::vector<int> diffs;
    for (const auto& d : result.details) {
        if (!d.base_response.empty() || !d.con_response.empty())
            if (d.exclusion_reason.rfind("generation failed", 0) != 0)
                diffs.push_back(d.token_diff);
        if (d.excluded) {
            ++excluded;
            continue;
        }
        if (d.con_wins) ++wins;
    }
    const int n_total = static_cast<int>(instructions.size());
    const int n_eff = n_total - excluded;
    if (n_eff <= 0)
        throw ValidationError("win_rate_eval: every instruction was excluded");
    auto& r = result.report;
    r.n_total = n_total;
    r.n_excluded = excluded;
    r.win_rate = static_cast<double>(wins) / n_eff;
    r.std_error = binomial_std_error(r.win_rate, n_eff);
    std::sort(diffs.begin(), diffs.end());
    if (diffs.empty()) {
        r.token_diff_median = 0.0;
    } else if (diffs.size() % 2 == 1) {
        r.token_diff_median = diffs[diffs.size() / 2];
    } else {
        r.token_diff_median =
            0.5 * (diffs[diffs.size() / 2 - 1] + diffs[diffs.size() / 2]);
    }
    return result;
}

}  // namespace icai
