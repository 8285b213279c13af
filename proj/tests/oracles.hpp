// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations the tests check the library
// against. Each one recomputes its answer from first principles and stays
// clear of the code paths it validates.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "linguaforge/common.hpp"
#include "linguaforge/model.hpp"
#include "linguaforge/tokenizer.hpp"
#include "linguaforge/training.hpp"

namespace lforacle {

// --- brute-force BPE trainer -------------------------------------------------
//
// Keeps one symbol vector per word INSTANCE (no frequency table) and, after
// every merge, recounts all pair frequencies by a full scan. Tie-breaking:
// lexicographically smallest (left, right).

inline std::vector<std::pair<std::string, std::string>> naive_bpe_merges(std::string_view corpus,
                                                                         std::size_t max_merges) {
    // whitespace kept attached to the following word, as in the library
    std::vector<std::vector<std::string>> words;
    {
        std::size_t i = 0;
        const auto is_space = [](unsigned char b) {
            return b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\v' || b == '\f';
        };
        while (i < corpus.size()) {
            const std::size_t start = i;
            while (i < corpus.size() && is_space(static_cast<unsigned char>(corpus[i]))) ++i;
            while (i < corpus.size() && !is_space(static_cast<unsigned char>(corpus[i]))) ++i;
            std::vector<std::string> symbols;
            for (std::size_t k = start; k < i; ++k) symbols.emplace_back(1, corpus[k]);
            words.push_back(std::move(symbols));
        }
    }

    std::vector<std::pair<std::string, std::string>> merges;
    for (std::size_t step = 0; step < max_merges; ++step) {
        std::map<std::pair<std::string, std::string>, std::int64_t> counts;
        for (const auto& w : words) {
            for (std::size_t i = 0; i + 1 < w.size(); ++i) counts[{w[i], w[i + 1]}] += 1;
        }
        std::pair<std::string, std::string> best;
        std::int64_t best_count = 0;
        for (const auto& [pair, count] : counts) {
            if (count > best_count) {
                best_count = count;
                best = pair;
            }
        }
        if (best_count == 0) break;
        merges.push_back(best);
        for (auto& w : words) {
            std::vector<std::string> out;
            std::size_t i = 0;
            while (i < w.size()) {
                if (i + 1 < w.size() && w[i] == best.first && w[i + 1] == best.second) {
                    out.push_back(best.first + best.second);
                    i += 2;
                } else {
                    out.push_back(w[i]);
                    ++i;
                }
            }
            w = std::move(out);
        }
    }
    return merges;
}

// --- scalar softmax / NLL ------------------------------------------------------

inline double scalar_nll(const std::vector<double>& logits, std::size_t target) {
    double max = logits[0];
    for (const double v : logits) max = std::max(max, v);
    double denom = 0.0;
    for (const double v : logits) denom += std::exp(v - max);
    return -(logits[target] - max - std::log(denom));
}

// --- BLEU by brute-force n-gram scanning ----------------------------------------

inline std::vector<std::string> split_ws(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char c : text) {
        if (c == ' ' || c == '\t' || c == '\n') {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current += c;
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// Clipped n-gram matches counted by direct position-by-position comparison.
inline double bleu_oracle(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
    std::size_t hyp_len = 0, ref_len = 0;
    double log_sum = 0.0;
    std::int64_t matched[5] = {0}, total[5] = {0};
    for (std::size_t p = 0; p < hyps.size(); ++p) {
        const auto hyp = split_ws(hyps[p]);
        const auto ref = split_ws(refs[p]);
        hyp_len += hyp.size();
        ref_len += ref.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            if (hyp.size() < n) continue;
            std::vector<bool> ref_used(ref.size(), false);
            for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
                ++total[n];
                for (std::size_t j = 0; j + n <= ref.size(); ++j) {
                    if (ref_used[j]) continue;
                    bool same = true;
                    for (std::size_t k = 0; k < n; ++k) same = same && hyp[i + k] == ref[j + k];
                    if (same) {
                        ref_used[j] = true;
                        ++matched[n];
                        break;
                    }
                }
            }
        }
    }
    if (hyp_len == 0 || matched[1] == 0) return 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        double precision;
        if (n >= 2 && matched[n] == 0) {
            precision = 1.0 / static_cast<double>(total[n] + 1);
        } else {
            precision = static_cast<double>(matched[n]) / static_cast<double>(total[n]);
        }
        log_sum += std::log(precision);
    }
    const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
    return 100.0 * bp * std::exp(log_sum / 4.0);
}

// --- rank-then-Pearson Spearman -------------------------------------------------

// O(n^2) average ranks: rank(i) = 1 + #less + (#equal - 1) / 2.
inline std::vector<double> naive_ranks(const std::vector<double>& xs) {
    std::vector<double> ranks(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::size_t less = 0, equal = 0;
        for (std::size_t j = 0; j < xs.size(); ++j) {
            less += xs[j] < xs[i];
            equal += xs[j] == xs[i];
        }
        ranks[i] = 1.0 + static_cast<double>(less) + (static_cast<double>(equal) - 1.0) / 2.0;
    }
    return ranks;
}

inline double spearman_oracle(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto rx = naive_ranks(xs);
    const auto ry = naive_ranks(ys);
    const double n = static_cast<double>(rx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// --- finite differences -----------------------------------------------------------

// Loss of one batch via forward passes only, replaying dropout from the
// given seed. Used as the function value for central differences.
template <typename S>
inline double batch_loss(const lf::ModelState<S>& m, const lf::Batch& batch, std::uint64_t dropout_seed) {
    lf::Rng rng(dropout_seed);
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        lf::ForwardTrace<S> trace;
        lf::run_forward(m, batch.input_ids[r], /*train_mode=*/true, &rng, trace);
        for (std::size_t t = 0; t < batch.target_ids[r].size(); ++t) {
            if (batch.loss_mask[r][t] == 0) continue;
            std::vector<double> row(static_cast<std::size_t>(trace.logits.cols()));
            for (Eigen::Index c = 0; c < trace.logits.cols(); ++c) {
                row[static_cast<std::size_t>(c)] = static_cast<double>(trace.logits(static_cast<Eigen::Index>(t), c));
            }
            sum += scalar_nll(row, static_cast<std::size_t>(batch.target_ids[r][t]));
            ++counted;
        }
    }
    return sum / static_cast<double>(counted);
}

template <typename S>
inline double fd_gradient(lf::ModelState<S>& m, const lf::Batch& batch, lf::Mat<S>& param, Eigen::Index r,
                          Eigen::Index c, double h, std::uint64_t dropout_seed) {
    const S original = param(r, c);
    param(r, c) = original + static_cast<S>(h);
    const double plus = batch_loss(m, batch, dropout_seed);
    param(r, c) = original - static_cast<S>(h);
    const double minus = batch_loss(m, batch, dropout_seed);
    param(r, c) = original;
    return (plus - minus) / (2.0 * h);
}

}  // namespace lforacle
