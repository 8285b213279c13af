// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "linguaforge/eval.hpp"
#include "linguaforge/training.hpp"

#include "oracles.hpp"
#include "testutil.hpp"

namespace {

struct EvalFixture {
    lf::TokenizerModel tok;
    lf::ModelState<float> model;

    EvalFixture() {
        tok = lf::train_bpe(lftest::english_corpus(61, 100) + lftest::persian_corpus(62, 100), 150);
        lf::TransformerConfig cfg;
        cfg.vocab_size = static_cast<std::int64_t>(tok.size());
        cfg.d_model = 32;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.d_ff = 64;
        cfg.context_len = 64;
        cfg.seed = 15;
        model = lf::init_transformer<float>(cfg);
    }
};

}  // namespace

TEST(PerplexityTest, UniformModelGivesVocabSize) {
    EvalFixture fx;
    fx.model.output_embeddings.setZero();  // logits identically zero
    const double ppl = lf::perplexity(fx.model, fx.tok, "some evaluation text here");
    EXPECT_DOUBLE_EQ(ppl, static_cast<double>(fx.tok.size()));
}

TEST(PerplexityTest, CertainModelGivesOne) {
    // Two-token corpus; align the unembedding row of the second token with
    // the model's final hidden state so its probability saturates to 1.
    EvalFixture fx;
    const auto ids = lf::encode(fx.tok, "ab");
    ASSERT_GE(ids.size(), 2u);
    lf::ForwardTrace<float> trace;
    lf::run_forward(fx.model, ids, false, nullptr, trace);
    fx.model.output_embeddings.setZero();
    fx.model.output_embeddings.row(ids[1]) = trace.final_normed.row(0) * 1e6f;
    const double ppl = lf::perplexity(fx.model, fx.tok, "ab");
    EXPECT_DOUBLE_EQ(ppl, 1.0);
}

TEST(PerplexityTest, MatchesScalarOracleOnTinyCorpus) {
    EvalFixture fx;
    const std::string corpus = "the house water";
    const auto ids = lf::encode(fx.tok, corpus);
    const auto logits = lf::forward(fx.model, ids);
    double nll = 0.0;
    for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
        std::vector<double> row(static_cast<std::size_t>(logits.cols()));
        for (Eigen::Index c = 0; c < logits.cols(); ++c) row[static_cast<std::size_t>(c)] = logits(t, c);
        nll += lforacle::scalar_nll(row, static_cast<std::size_t>(ids[t + 1]));
    }
    const double expected = std::exp(nll / static_cast<double>(ids.size() - 1));
    EXPECT_NEAR(lf::perplexity(fx.model, fx.tok, corpus), expected, 1e-6 * expected);
}

TEST(PerplexityTest, EqualsExpOfClmLossOnSharedWindows) {
    EvalFixture fx;
    fx.model.config.context_len = 8;  // force several windows
    const std::string corpus = lftest::english_corpus(77, 8);
    const auto ids = lf::encode(fx.tok, corpus);
    double nll_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < ids.size(); start += 8) {
        const std::size_t len = std::min<std::size_t>(8, ids.size() - start);
        if (len < 2) break;
        std::vector<lf::TokenId> window(ids.begin() + start, ids.begin() + start + len);
        const auto logits = lf::forward(fx.model, window);
        std::vector<lf::TokenId> targets(window.begin() + 1, window.end());
        targets.push_back(0);
        std::vector<std::uint8_t> mask(len, 1);
        mask[len - 1] = 0;
        const auto [loss, per_token] = lf::clm_loss(logits, targets, mask);
        nll_sum += loss * static_cast<double>(len - 1);
        count += len - 1;
    }
    const double via_loss = std::exp(nll_sum / static_cast<double>(count));
    const double direct = lf::perplexity(fx.model, fx.tok, corpus);
    EXPECT_NEAR(direct, via_loss, 1e-6 * via_loss);
}

TEST(PerplexityTest, TooShortCorpusRaises) {
    EvalFixture fx;
    try {
        lf::perplexity(fx.model, fx.tok, "a");
        FAIL() << "expected CorpusTooShort";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::CorpusTooShort);
    }
}

TEST(BleuTest, IdentityIsHundred) {
    EXPECT_DOUBLE_EQ(lf::bleu({"the cat sat on the mat"}, {"the cat sat on the mat"}), 100.0);
    EXPECT_DOUBLE_EQ(lf::bleu({"one"}, {"one"}), 100.0);  // shorter than 4-gram order
}

TEST(BleuTest, DisjointIsZero) {
    EXPECT_DOUBLE_EQ(lf::bleu({"alpha beta gamma"}, {"delta epsilon zeta"}), 0.0);
}

TEST(BleuTest, ShortHypothesisCaseMatchesHandOracle) {
    const std::vector<std::string> hyp = {"the cat sat"};
    const std::vector<std::string> ref = {"the cat sat down"};
    const double got = lf::bleu(hyp, ref);
    // p1..p3 are 1; the empty 4-gram count smooths to 1; BP = exp(1 - 4/3)
    const double expected = 100.0 * std::exp(1.0 - 4.0 / 3.0);
    EXPECT_NEAR(got, expected, 1e-6);
    EXPECT_NEAR(got, lforacle::bleu_oracle(hyp, ref), 1e-9);
}

TEST(BleuTest, AgreesWithOracleOnRandomPairs) {
    lf::Rng rng(505);
    const auto& words = lftest::english_words();
    for (int round = 0; round < 50; ++round) {
        std::vector<std::string> hyps, refs;
        const std::size_t pairs = 1 + rng.below(4);
        for (std::size_t p = 0; p < pairs; ++p) {
            std::string h, r;
            const std::size_t hn = 1 + rng.below(10), rn = 1 + rng.below(10);
            for (std::size_t i = 0; i < hn; ++i) h += words[rng.below(8)] + " ";
            for (std::size_t i = 0; i < rn; ++i) r += words[rng.below(8)] + " ";
            hyps.push_back(h);
            refs.push_back(r);
        }
        const double got = lf::bleu(hyps, refs);
        ASSERT_GE(got, 0.0);
        ASSERT_LE(got, 100.0);
        ASSERT_NEAR(got, lforacle::bleu_oracle(hyps, refs), 1e-9);
    }
}

TEST(BleuTest, LengthMismatchRaises) {
    try {
        lf::bleu({"a"}, {"a", "b"});
        FAIL() << "expected PairMismatch";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::PairMismatch);
    }
}

TEST(CosineTest, BasicIdentities) {
    lf::Vec<float> u(3), v(3), w(2), z(2);
    u << 1, 2, 3;
    v << 4, 5, 6;
    w << 1, 0;
    z << 0, 1;
    EXPECT_NEAR(lf::cosine(u, u), 1.0, 1e-6);
    EXPECT_NEAR(lf::cosine(w, z), 0.0, 1e-6);
    EXPECT_NEAR(lf::cosine(u, v), 32.0 / std::sqrt(14.0 * 77.0), 1e-9);
    EXPECT_NEAR(lf::cosine(u, v), 0.97463, 1e-5);
}

TEST(CosineTest, ZeroVectorRaises) {
    lf::Vec<float> u = lf::Vec<float>::Zero(3), v = lf::Vec<float>::Ones(3);
    try {
        lf::cosine(u, v);
        FAIL() << "expected ZeroVector";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::ZeroVector);
    }
}

TEST(SpearmanTest, IdentityAndReversal) {
    const std::vector<double> xs = {1, 2, 3, 4, 5};
    EXPECT_DOUBLE_EQ(lf::spearman(xs, xs), 1.0);
    EXPECT_DOUBLE_EQ(lf::spearman(xs, {5, 4, 3, 2, 1}), -1.0);
}

TEST(SpearmanTest, TieCaseMatchesAverageRankOracle) {
    const std::vector<double> xs = {1, 2, 2, 3};
    const std::vector<double> ys = {1, 2, 3, 4};
    const double got = lf::spearman(xs, ys);
    EXPECT_NEAR(got, lforacle::spearman_oracle(xs, ys), 1e-12);
    EXPECT_NEAR(got, 4.5 / std::sqrt(4.5 * 5.0), 1e-12);  // hand-computed ranks
}

TEST(SpearmanTest, InvariantUnderMonotoneTransforms) {
    lf::Rng rng(606);
    for (int round = 0; round < 50; ++round) {
        std::vector<double> xs(8), ys(8);
        for (auto& x : xs) x = rng.uniform();
        for (auto& y : ys) y = rng.uniform();
        const double base = lf::spearman(xs, ys);
        std::vector<double> transformed = ys;
        for (auto& y : transformed) y = 2.0 * y + 1.0;
        ASSERT_NEAR(lf::spearman(xs, transformed), base, 1e-12);
        for (auto& y : transformed) y = std::exp(y);
        ASSERT_NEAR(lf::spearman(xs, transformed), base, 1e-12);
    }
}

TEST(SpearmanTest, ConstantInputRaises) {
    try {
        lf::spearman({1, 1, 1}, {1, 2, 3});
        FAIL() << "expected UndefinedCorrelation";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::UndefinedCorrelation);
    }
}

TEST(SentenceEmbeddingTest, DimensionAndDeterminism) {
    EvalFixture fx;
    const auto a = lf::sentence_embedding(fx.model, fx.tok, "water under the bridge");
    EXPECT_EQ(a.size(), fx.model.config.d_model);
    const auto b = lf::sentence_embedding(fx.model, fx.tok, "water under the bridge");
    EXPECT_TRUE(a == b);
    const auto c = lf::sentence_embedding(fx.model, fx.tok, "کتاب روی میز");
    EXPECT_TRUE(a != c);  // distinct inputs give distinct vectors
}

TEST(SentenceEmbeddingTest, PadTokenRequired) {
    EvalFixture fx;
    lf::TokenizerModel no_pad = fx.tok;
    no_pad.special_tokens.pad_id = -1;
    EXPECT_THROW(lf::sentence_embedding(fx.model, no_pad, "text"), lf::Error);
}

TEST(StsEvalTest, ConstantCosinesSurfaceUndefinedCorrelation) {
    EvalFixture fx;
    std::vector<lf::StsPair> pairs;
    for (int i = 0; i < 3; ++i) pairs.push_back({"same sentence", "same sentence", 5.0});
    try {
        lf::sts_eval(fx.model, fx.tok, pairs);
        FAIL() << "expected UndefinedCorrelation";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::UndefinedCorrelation);
    }
}

TEST(StsEvalTest, PermutationInvariantScalar) {
    EvalFixture fx;
    std::vector<lf::StsPair> pairs = {
        {"the house is big", "the house is large", 4.5},
        {"water flows", "music plays", 1.5},
        {"the sun is bright", "the sun shines", 4.0},
        {"books teach", "rivers flow", 1.0},
    };
    const auto a = lf::sts_eval(fx.model, fx.tok, pairs);
    std::reverse(pairs.begin(), pairs.end());
    const auto b = lf::sts_eval(fx.model, fx.tok, pairs);
    EXPECT_NEAR(a.scalar, b.scalar, 1e-12);
    // scalar is recomputable from the per-item records
    std::vector<double> cosines, golds;
    for (const auto& item : a.per_item) {
        cosines.push_back(item.at("cosine").get<double>());
        golds.push_back(item.at("gold").get<double>());
    }
    EXPECT_NEAR(lf::spearman(cosines, golds), a.scalar, 1e-12);
}

TEST(CrosslingualTest, IdenticalPairsGiveOne) {
    EvalFixture fx;
    const auto report = lf::crosslingual_similarity(
        fx.model, fx.tok, {{"hello world", "hello world"}, {"آب و نان", "آب و نان"}});
    EXPECT_NEAR(report.scalar, 1.0, 1e-6);
}

TEST(CrosslingualTest, SinglePairEqualsItsCosine) {
    EvalFixture fx;
    const auto a = lf::sentence_embedding(fx.model, fx.tok, "the river");
    const auto b = lf::sentence_embedding(fx.model, fx.tok, "رود");
    const auto report = lf::crosslingual_similarity(fx.model, fx.tok, {{"the river", "رود"}});
    EXPECT_NEAR(report.scalar, lf::cosine(a, b), 1e-9);
}

TEST(CrosslingualTest, ScalarIsMeanOfPerItemDiagnostics) {
    EvalFixture fx;
    const auto report = lf::crosslingual_similarity(
        fx.model, fx.tok,
        {{"water", "آب"}, {"bread", "نان"}, {"book", "کتاب"}});
    double mean = 0.0;
    for (const auto& item : report.per_item) mean += item.at("cosine").get<double>();
    mean /= static_cast<double>(report.per_item.size());
    EXPECT_NEAR(report.scalar, mean, 1e-12);
}

TEST(McqaTest, TieBreaksToLowestIndex) {
    EvalFixture fx;
    // identical candidates score identically, so the argmax tie is real
    lf::McqaItem item;
    item.question = "pick one";
    item.candidates = {"same answer", "same answer", "same answer"};
    item.gold_index = 0;
    const auto report = lf::mcqa_accuracy(fx.model, fx.tok, {item});
    EXPECT_DOUBLE_EQ(report.scalar, 1.0);  // tie resolves to index 0
    EXPECT_EQ(report.per_item[0].at("predicted").get<std::size_t>(), 0u);
    lf::McqaItem wrong_gold = item;
    wrong_gold.gold_index = 2;
    EXPECT_DOUBLE_EQ(lf::mcqa_accuracy(fx.model, fx.tok, {wrong_gold}).scalar, 0.0);
}

TEST(McqaTest, EmptyCandidateRecordedAndExcluded) {
    EvalFixture fx;
    lf::McqaItem good;
    good.question = "q";
    good.candidates = {"left", "left", "left"};
    good.gold_index = 0;
    lf::McqaItem bad = good;
    bad.candidates[1] = "";
    const auto report = lf::mcqa_accuracy(fx.model, fx.tok, {good, bad});
    EXPECT_DOUBLE_EQ(report.breakdown.at("excluded_items"), 1.0);
    EXPECT_TRUE(report.per_item[1].contains("error"));
    EXPECT_DOUBLE_EQ(report.scalar, 1.0);  // only the good item counts
}

TEST(McqaTest, CategoryBreakdownAveragesToOverall) {
    EvalFixture fx;
    std::vector<lf::McqaItem> items;
    const char* categories[] = {"lit", "ck", "math"};
    for (int i = 0; i < 9; ++i) {
        lf::McqaItem item;
        item.question = "question " + std::to_string(i);
        item.candidates = {"alpha", "beta", "gamma", "delta"};
        item.gold_index = static_cast<std::size_t>(i) % 4;
        item.category = categories[i % 3];
        items.push_back(std::move(item));
    }
    const auto report = lf::mcqa_accuracy(fx.model, fx.tok, items);
    double weighted = 0.0;
    std::size_t total = 0;
    std::map<std::string, std::size_t> counts;
    for (const auto& item : items) counts[item.category]++;
    for (const auto& [category, accuracy] : report.breakdown) {
        if (category == "excluded_items") continue;
        weighted += accuracy * static_cast<double>(counts.at(category));
        total += counts.at(category);
    }
    EXPECT_NEAR(report.scalar, weighted / static_cast<double>(total), 1e-12);
}

TEST(McqaTest, DeterministicAcrossWorkerCounts) {
    EvalFixture fx;
    std::vector<lf::McqaItem> items;
    for (int i = 0; i < 6; ++i) {
        lf::McqaItem item;
        item.question = "q" + std::to_string(i);
        item.candidates = {"water", "bread", "book"};
        item.gold_index = 1;
        items.push_back(std::move(item));
    }
    setenv("LINGUAFORGE_THREADS", "1", 1);
    const auto a = lf::mcqa_accuracy(fx.model, fx.tok, items);
    setenv("LINGUAFORGE_THREADS", "4", 1);
    const auto b = lf::mcqa_accuracy(fx.model, fx.tok, items);
    unsetenv("LINGUAFORGE_THREADS");
    EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(GenerateTest, GreedyIsDeterministicAndStopsAtEos) {
    EvalFixture fx;
    const auto prompt = lf::encode(fx.tok, "the");
    const auto a = lf::greedy_generate(fx.model, prompt, fx.tok.special_tokens.eos_id, 12);
    const auto b = lf::greedy_generate(fx.model, prompt, fx.tok.special_tokens.eos_id, 12);
    EXPECT_EQ(a, b);
    EXPECT_LE(a.size(), 12u);
    for (const auto id : a) EXPECT_NE(id, fx.tok.special_tokens.eos_id);
}
