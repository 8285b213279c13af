// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "linguaforge/common.hpp"
#include "linguaforge/model.hpp"
#include "linguaforge/tensor.hpp"
#include "linguaforge/tokenizer.hpp"

#include "json.hpp"

namespace lf {

struct McqaItem {
    std::optional<std::string> context;
    std::string question;
    std::vector<std::string> candidates;
    std::size_t gold_index = 0;
    std::string category;
};

struct StsPair {
    std::string sentence_a;
    std::string sentence_b;
    double gold_score = 0.0;
};

struct EvalReport {
    std::string metric;
    std::string dataset;
    double scalar = 0.0;
    std::map<std::string, double> breakdown;
    nlohmann::ordered_json per_item = nlohmann::ordered_json::array();
    std::string config_hash;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["metric"] = metric;
        j["dataset"] = dataset;
        j["scalar"] = scalar;
        j["breakdown"] = breakdown;
        j["per_item"] = per_item;
        j["config_hash"] = config_hash;
        return j;
    }
};

// exp of the mean per-token negative log-likelihood over non-overlapping
// context_len windows; the first token of each window is unpredicted. A
// trailing window shorter than two tokens contributes nothing.
template <typename S>
inline double perplexity(const ModelState<S>& m, const TokenizerModel& t, std::string_view corpus) {
    const std::vector<TokenId> ids = encode(t, corpus);
    if (ids.size() < 2) raise(ErrorCode::CorpusTooShort, "corpus tokenizes to fewer than 2 tokens");
    const std::size_t window = static_cast<std::size_t>(m.config.context_len);
    // extended-precision accumulation keeps the uniform-model identity
    // (perplexity == vocab size) exact to double rounding
    long double nll_sum = 0.0L;
    std::size_t predicted = 0;
    for (std::size_t start = 0; start < ids.size(); start += window) {
        const std::size_t len = std::min(window, ids.size() - start);
        if (len < 2) break;
        const std::vector<TokenId> chunk(ids.begin() + static_cast<std::ptrdiff_t>(start),
                                         ids.begin() + static_cast<std::ptrdiff_t>(start + len));
        const Mat<S> logits = forward(m, chunk);
        for (std::size_t pos = 0; pos + 1 < len; ++pos) {
            nll_sum -= log_softmax_at<S>(logits.row(static_cast<Eigen::Index>(pos)), chunk[pos + 1]);
            ++predicted;
        }
    }
    return std::exp(static_cast<double>(nll_sum / static_cast<long double>(predicted)));
}

// u.v / (|u||v|)
template <typename S>
inline double cosine(const Vec<S>& u, const Vec<S>& v) {
    if (u.size() != v.size()) raise(ErrorCode::PairMismatch, "vectors differ in dimension");
    const double nu = std::sqrt(static_cast<double>(u.template cast<double>().squaredNorm()));
    const double nv = std::sqrt(static_cast<double>(v.template cast<double>().squaredNorm()));
    if (nu == 0.0 || nv == 0.0) raise(ErrorCode::ZeroVector, "cosine of a zero vector is undefined");
    return static_cast<double>(u.template cast<double>().dot(v.template cast<double>())) / (nu * nv);
}

namespace detail {

// Average ranks, ties sharing the mean of their positions (1-based).
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        raise(ErrorCode::UndefinedCorrelation, "correlation of a constant sequence is undefined");
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

// Spearman's rho: Pearson correlation of average ranks.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) raise(ErrorCode::PairMismatch, "sequences differ in length");
    if (xs.size() < 2) raise(ErrorCode::InvalidInput, "spearman needs at least 2 points");
    return detail::pearson(detail::average_ranks(xs), detail::average_ranks(ys));
}

// --- BLEU ---------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> whitespace_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

inline std::map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
    std::map<std::string, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t k = 0; k < n; ++k) {
            if (k) key += '\x1F';
            key += tokens[i + k];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace detail

// Corpus-level BLEU in [0, 100]: geometric mean of modified n-gram
// precisions (n = 1..4) times the brevity penalty, whitespace tokenization.
// Zero counts for n >= 2 get add-1 smoothing; a zero unigram precision
// yields 0 outright.
inline double bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
    if (hypotheses.size() != references.size()) {
        raise(ErrorCode::PairMismatch, "hypothesis and reference counts differ");
    }
    if (hypotheses.empty()) raise(ErrorCode::InvalidInput, "bleu needs at least one pair");

    std::size_t hyp_len = 0, ref_len = 0;
    std::size_t matched[5] = {0}, total[5] = {0};
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const auto hyp = detail::whitespace_tokens(hypotheses[i]);
        const auto ref = detail::whitespace_tokens(references[i]);
        hyp_len += hyp.size();
        ref_len += ref.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto hyp_counts = detail::ngram_counts(hyp, n);
            const auto ref_counts = detail::ngram_counts(ref, n);
            for (const auto& [gram, count] : hyp_counts) {
                total[n] += count;
                const auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) matched[n] += std::min(count, it->second);
            }
        }
    }
    if (hyp_len == 0) return 0.0;

    double log_precision_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        double p;
        if (n == 1) {
            if (matched[1] == 0) return 0.0;
            p = static_cast<double>(matched[1]) / static_cast<double>(total[1]);
        } else if (matched[n] == 0) {
            p = 1.0 / static_cast<double>(total[n] + 1);  // add-1 smoothing
        } else {
            p = static_cast<double>(matched[n]) / static_cast<double>(total[n]);
        }
        log_precision_sum += std::log(p);
    }
    const double brevity =
        std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
    return 100.0 * brevity * std::exp(log_precision_sum / 4.0);
}

// --- sentence embeddings --------------------------------------------------------

// Final hidden state at an appended pad token under a fixed summarization
// prompt; the model is run in eval mode.
template <typename S>
inline Vec<S> sentence_embedding(const ModelState<S>& m, const TokenizerModel& t, std::string_view text) {
    if (t.special_tokens.pad_id < 0) raise(ErrorCode::ConfigError, "tokenizer lacks a pad token");
    const std::string rendered = "Summarize sentence \"" + std::string(text) + "\" in one word:";
    std::vector<TokenId> ids;
    if (t.special_tokens.bos_id >= 0) ids.push_back(t.special_tokens.bos_id);
    const auto text_ids = encode(t, rendered);
    ids.insert(ids.end(), text_ids.begin(), text_ids.end());
    ids.push_back(t.special_tokens.pad_id);

    ForwardTrace<S> trace;
    run_forward(m, ids, /*train_mode=*/false, nullptr, trace);
    return trace.final_normed.row(trace.final_normed.rows() - 1).transpose();
}

// --- report-producing evaluations ------------------------------------------------

// Prompt layout for likelihood-scored multiple choice.
struct McqaTemplate {
    std::string context_prefix = "";
    std::string question_prefix = "Question: ";
    std::string answer_prefix = "\nAnswer:";
    std::string candidate_prefix = " ";

    std::string render(const McqaItem& item) const {
        std::string prompt;
        if (item.context && !item.context->empty()) {
            prompt += context_prefix + *item.context + "\n";
        }
        prompt += question_prefix + item.question + answer_prefix;
        return prompt;
    }
};

// Each candidate is scored by the length-normalized log-likelihood of its
// tokens as a continuation of the rendered prompt; argmax predicts, ties
// break to the lowest candidate index. Items whose scoring fails (e.g. a
// candidate tokenizes to nothing) are recorded and excluded.
template <typename S>
inline EvalReport mcqa_accuracy(const ModelState<S>& m, const TokenizerModel& t,
                                const std::vector<McqaItem>& items, const McqaTemplate& tmpl = {}) {
    if (items.empty()) raise(ErrorCode::InvalidInput, "no items to evaluate");

    struct ItemResult {
        std::vector<double> scores;
        std::size_t predicted = 0;
        bool ok = false;
        std::string error;
    };
    std::vector<ItemResult> results(items.size());

    parallel_for(items.size(), [&](std::size_t idx) {
        const McqaItem& item = items[idx];
        ItemResult& res = results[idx];
        try {
            if (item.candidates.size() < 2) raise(ErrorCode::ValidationError, "fewer than 2 candidates");
            if (item.gold_index >= item.candidates.size()) {
                raise(ErrorCode::ValidationError, "gold_index out of range");
            }
            std::vector<TokenId> prompt_ids;
            if (t.special_tokens.bos_id >= 0) prompt_ids.push_back(t.special_tokens.bos_id);
            const auto rendered = encode(t, tmpl.render(item));
            prompt_ids.insert(prompt_ids.end(), rendered.begin(), rendered.end());
            if (prompt_ids.empty()) raise(ErrorCode::ValidationError, "empty rendered prompt");

            for (const std::string& candidate : item.candidates) {
                if (encode(t, candidate).empty()) {
                    raise(ErrorCode::ValidationError, "candidate tokenizes to nothing");
                }
                const std::vector<TokenId> cand_ids = encode(t, tmpl.candidate_prefix + candidate);
                std::vector<TokenId> full = prompt_ids;
                full.insert(full.end(), cand_ids.begin(), cand_ids.end());
                const Mat<S> logits = forward(m, full);
                double loglik = 0.0;
                for (std::size_t k = 0; k < cand_ids.size(); ++k) {
                    const Eigen::Index pos = static_cast<Eigen::Index>(prompt_ids.size() + k - 1);
                    loglik += log_softmax_at<S>(logits.row(pos), cand_ids[k]);
                }
                res.scores.push_back(loglik / static_cast<double>(cand_ids.size()));
            }
            res.predicted = static_cast<std::size_t>(std::distance(
                res.scores.begin(), std::max_element(res.scores.begin(), res.scores.end())));
            res.ok = true;
        } catch (const Error& e) {
            res.error = e.what();
        }
    });

    EvalReport report;
    report.metric = "mcqa_accuracy";
    std::size_t evaluated = 0, correct = 0, excluded = 0;
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_category;  // correct, total
    for (std::size_t idx = 0; idx < items.size(); ++idx) {
        const ItemResult& res = results[idx];
        nlohmann::ordered_json record;
        record["index"] = idx;
        if (!res.ok) {
            record["error"] = res.error;
            report.per_item.push_back(std::move(record));
            ++excluded;
            continue;
        }
        const bool is_correct = res.predicted == items[idx].gold_index;
        record["predicted"] = res.predicted;
        record["gold"] = items[idx].gold_index;
        record["correct"] = is_correct;
        record["scores"] = res.scores;
        if (!items[idx].category.empty()) record["category"] = items[idx].category;
        report.per_item.push_back(std::move(record));
        ++evaluated;
        correct += is_correct;
        auto& cat = per_category[items[idx].category.empty() ? "uncategorized" : items[idx].category];
        cat.first += is_correct;
        cat.second += 1;
    }
    if (evaluated == 0) raise(ErrorCode::InvalidInput, "every item failed scoring");
    report.scalar = static_cast<double>(correct) / static_cast<double>(evaluated);
    for (const auto& [category, counts] : per_category) {
        report.breakdown[category] = static_cast<double>(counts.first) / static_cast<double>(counts.second);
    }
    report.breakdown["excluded_items"] = static_cast<double>(excluded);
    return report;
}

// Spearman correlation between per-pair embedding cosines and gold scores.
template <typename S>
inline EvalReport sts_eval(const ModelState<S>& m, const TokenizerModel& t, const std::vector<StsPair>& pairs) {
    if (pairs.size() < 2) raise(ErrorCode::InvalidInput, "sts needs at least 2 pairs");
    std::vector<double> cosines(pairs.size()), golds(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
        const Vec<S> a = sentence_embedding(m, t, pairs[i].sentence_a);
        const Vec<S> b = sentence_embedding(m, t, pairs[i].sentence_b);
        cosines[i] = cosine(a, b);
        golds[i] = pairs[i].gold_score;
    });
    EvalReport report;
    report.metric = "sts_spearman";
    report.scalar = spearman(cosines, golds);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        report.per_item.push_back({{"index", i}, {"cosine", cosines[i]}, {"gold", golds[i]}});
    }
    return report;
}

// Mean cosine similarity between embeddings of parallel sentences.
template <typename S>
inline EvalReport crosslingual_similarity(const ModelState<S>& m, const TokenizerModel& t,
                                          const std::vector<std::pair<std::string, std::string>>& parallel) {
    if (parallel.empty()) raise(ErrorCode::InvalidInput, "no parallel pairs");
    std::vector<double> cosines(parallel.size());
    parallel_for(parallel.size(), [&](std::size_t i) {
        const Vec<S> a = sentence_embedding(m, t, parallel[i].first);
        const Vec<S> b = sentence_embedding(m, t, parallel[i].second);
        cosines[i] = cosine(a, b);
    });
    EvalReport report;
    report.metric = "crosslingual_avg_cosine";
    report.scalar = std::accumulate(cosines.begin(), cosines.end(), 0.0) / static_cast<double>(cosines.size());
    for (std::size_t i = 0; i < parallel.size(); ++i) {
        report.per_item.push_back({{"index", i}, {"cosine", cosines[i]}});
    }
    return report;
}

// --- dataset loaders -------------------------------------------------------------

namespace detail {

template <typename Fn>
inline void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::DatasetNotFound, "cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            raise(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": not a JSON object");
        }
        fn(j, line_no);
    }
}

}  // namespace detail

// {"context"?, "question", "candidates": [...], "gold_index", "category"?}
inline std::vector<McqaItem> load_mcqa_jsonl(const std::filesystem::path& path) {
    std::vector<McqaItem> items;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        McqaItem item;
        try {
            if (j.contains("context") && !j["context"].is_null()) item.context = j["context"].get<std::string>();
            item.question = j.at("question").get<std::string>();
            item.candidates = j.at("candidates").get<std::vector<std::string>>();
            item.gold_index = j.at("gold_index").get<std::size_t>();
            item.category = j.value("category", std::string{});
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorCode::ValidationError, "line " + std::to_string(line_no) + ": " + e.what());
        }
        if (item.candidates.size() < 2) {
            raise(ErrorCode::ValidationError, "line " + std::to_string(line_no) + ": fewer than 2 candidates");
        }
        if (item.gold_index >= item.candidates.size()) {
            raise(ErrorCode::ValidationError, "line " + std::to_string(line_no) + ": gold_index out of range");
        }
        items.push_back(std::move(item));
    });
    return items;
}

// {"a", "b", "score"}
inline std::vector<StsPair> load_sts_jsonl(const std::filesystem::path& path) {
    std::vector<StsPair> pairs;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        try {
            pairs.push_back({j.at("a").get<std::string>(), j.at("b").get<std::string>(),
                             j.at("score").get<double>()});
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorCode::ValidationError, "line " + std::to_string(line_no) + ": " + e.what());
        }
    });
    return pairs;
}

// {"src", "tgt"}
inline std::vector<std::pair<std::string, std::string>> load_parallel_jsonl(const std::filesystem::path& path) {
    std::vector<std::pair<std::string, std::string>> pairs;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        try {
            pairs.emplace_back(j.at("src").get<std::string>(), j.at("tgt").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorCode::ValidationError, "line " + std::to_string(line_no) + ": " + e.what());
        }
    });
    return pairs;
}

// Greedy decoding until EOS or max_new_tokens; used by the few-shot
// translation evaluation.
template <typename S>
inline std::vector<TokenId> greedy_generate(const ModelState<S>& m, std::vector<TokenId> ids, TokenId eos_id,
                                            std::size_t max_new_tokens) {
    const std::size_t prompt_len = ids.size();
    while (ids.size() - prompt_len < max_new_tokens &&
           ids.size() < static_cast<std::size_t>(m.config.context_len)) {
        const Mat<S> logits = forward(m, ids);
        const auto row = logits.row(logits.rows() - 1);
        TokenId best = 0;
        for (Eigen::Index i = 1; i < row.size(); ++i) {
            if (row[i] > row[best]) best = static_cast<TokenId>(i);
        }
        if (best == eos_id) break;
        ids.push_back(best);
    }
    return std::vector<TokenId>(ids.begin() + static_cast<std::ptrdiff_t>(prompt_len), ids.end());
}

}  // namespace lf
