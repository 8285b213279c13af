// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "linguaforge/checkpoint.hpp"
#include "linguaforge/training.hpp"

#include "oracles.hpp"
#include "testutil.hpp"

namespace {

lf::TransformerConfig tiny_config(std::uint64_t seed = 13) {
    lf::TransformerConfig cfg;
    cfg.vocab_size = 261;
    cfg.d_model = 32;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 64;
    cfg.context_len = 32;
    cfg.seed = seed;
    return cfg;
}

lf::Batch one_block_batch(std::vector<lf::TokenId> block, lf::TokenId pad = 258) {
    lf::Batch batch;
    lf::append_block_row(batch, std::move(block), pad);
    return batch;
}

}  // namespace

TEST(ClmLossTest, UniformLogitsGiveLogVocab) {
    lf::Mat<float> logits = lf::Mat<float>::Zero(3, 4);
    const auto [loss, per_token] = lf::clm_loss(logits, {1, 2, 3}, {1, 1, 1});
    EXPECT_NEAR(loss, std::log(4.0), 1e-12);
    for (const double nll : per_token) EXPECT_NEAR(nll, std::log(4.0), 1e-12);
}

TEST(ClmLossTest, ConfidentLogitGivesNearZeroLoss) {
    lf::Mat<float> logits = lf::Mat<float>::Zero(1, 8);
    logits(0, 5) = 1e9f;
    const auto [loss, per_token] = lf::clm_loss(logits, {5}, {1});
    EXPECT_NEAR(loss, 0.0, 1e-9);
}

TEST(ClmLossTest, MatchesScalarSoftmaxOracle) {
    lf::Mat<float> logits(1, 4);
    logits << 2.0f, 0.0f, 0.0f, 0.0f;
    const auto [loss, per_token] = lf::clm_loss(logits, {0}, {1});
    EXPECT_NEAR(loss, lforacle::scalar_nll({2.0, 0.0, 0.0, 0.0}, 0), 1e-7);
    // hand value: -ln(e^2 / (e^2 + 3))
    EXPECT_NEAR(loss, -std::log(std::exp(2.0) / (std::exp(2.0) + 3.0)), 1e-6);
}

TEST(ClmLossTest, MaskedPositionsIgnored) {
    lf::Mat<float> logits = lf::Mat<float>::Random(4, 6);
    const std::vector<lf::TokenId> targets = {1, 2, 3, 4};
    const auto [loss_a, pt_a] = lf::clm_loss(logits, targets, {1, 0, 1, 0});
    std::vector<lf::TokenId> perturbed = targets;
    perturbed[1] = 5;
    perturbed[3] = 0;
    const auto [loss_b, pt_b] = lf::clm_loss(logits, perturbed, {1, 0, 1, 0});
    EXPECT_DOUBLE_EQ(loss_a, loss_b);
    EXPECT_EQ(pt_a[1], 0.0);
}

TEST(ClmLossTest, AllZeroMaskRaises) {
    lf::Mat<float> logits = lf::Mat<float>::Zero(2, 4);
    try {
        lf::clm_loss(logits, {1, 2}, {0, 0});
        FAIL() << "expected EmptyMask";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::EmptyMask);
    }
}

TEST(BackwardTest, OnlyTrainableParametersReceiveGradients) {
    auto m = lf::attach_lora(lf::init_transformer<double>(tiny_config()), 4, 8.0, 0.0);
    const auto grads = lf::backward(m, one_block_batch({5, 6, 7, 8}));
    for (const auto& [name, g] : grads.by_name) {
        EXPECT_TRUE(name.rfind("embeddings.", 0) == 0 || name.rfind("adapters.", 0) == 0) << name;
    }
    EXPECT_TRUE(grads.by_name.count("embeddings.input"));
    EXPECT_TRUE(grads.by_name.count("embeddings.output"));
    EXPECT_TRUE(grads.by_name.count("adapters.layers.0.attn.wq.A"));
}

TEST(BackwardTest, BothLoraFactorsGetGradientsAtInit) {
    // B == 0 at attach time; dA is then zero (dA ~ B) but dB is not.
    auto m = lf::attach_lora(lf::init_transformer<double>(tiny_config(3)), 4, 8.0, 0.0);
    const auto grads = lf::backward(m, one_block_batch({9, 10, 11, 12}));
    const auto& db = grads.by_name.at("adapters.layers.1.ffn.w2.B");
    EXPECT_GT(db.cwiseAbs().maxCoeff(), 0.0);
    // finite differences agree with the analytic B gradient
    auto& adapter = m.adapters.at("layers.1.ffn.w2");
    const lf::Batch batch = one_block_batch({9, 10, 11, 12});
    for (const auto& [r, c] : {std::pair<int, int>{0, 0}, {3, 1}, {17, 3}}) {
        const double fd = lforacle::fd_gradient(m, batch, adapter.B, r, c, 1e-3, 0);
        ASSERT_NEAR(db(r, c), fd, 1e-6 + 1e-3 * std::abs(fd));
    }
}

TEST(BackwardTest, TwoTokenBatchMatchesFiniteDifferences) {
    auto m = lf::attach_lora(lf::init_transformer<double>(tiny_config(29)), 4, 8.0, 0.05);
    lf::Batch batch;
    batch.input_ids.push_back({21, 22});
    batch.target_ids.push_back({22, 23});
    batch.loss_mask.push_back({1, 1});

    const std::uint64_t seed = 99;
    lf::Rng rng(seed);
    const auto grads = lf::backward(m, batch, &rng);
    EXPECT_EQ(grads.masked_tokens, 2u);

    auto& wq_a = m.adapters.at("layers.0.attn.wq").A;
    const auto& ga = grads.by_name.at("adapters.layers.0.attn.wq.A");
    for (const auto& [r, c] : {std::pair<int, int>{0, 0}, {1, 7}, {3, 31}}) {
        const double fd = lforacle::fd_gradient(m, batch, wq_a, r, c, 1e-3, seed);
        ASSERT_NEAR(ga(r, c), fd, 1e-6 + 1e-3 * std::abs(fd));
    }
    // embedding row of an input token
    const auto& ge = grads.by_name.at("embeddings.input");
    for (const auto& [r, c] : {std::pair<int, int>{21, 0}, {22, 13}}) {
        const double fd = lforacle::fd_gradient(m, batch, m.input_embeddings, r, c, 1e-3, seed);
        ASSERT_NEAR(ge(r, c), fd, 1e-6 + 1e-3 * std::abs(fd));
    }
}

TEST(BackwardTest, WiderMaskChangesMeanButKeepsPerTokenContributions) {
    auto m = lf::init_transformer<double>(tiny_config(5));
    lf::Batch narrow;
    narrow.input_ids.push_back({31, 32, 33});
    narrow.target_ids.push_back({32, 33, 34});
    narrow.loss_mask.push_back({1, 0, 0});
    lf::Batch wide = narrow;
    wide.loss_mask[0] = {1, 1, 0};

    const auto g_narrow = lf::backward(m, narrow);
    const auto g_wide = lf::backward(m, wide);
    EXPECT_NE(g_narrow.loss, g_wide.loss);
    // each is its own mean; finite differences confirm both
    for (const lf::Batch* batch : {&narrow, &wide}) {
        const auto grads = lf::backward(m, *batch);
        const auto& ge = grads.by_name.at("embeddings.output");
        const double fd = lforacle::fd_gradient(m, *batch, m.output_embeddings, 32, 3, 1e-3, 0);
        ASSERT_NEAR(ge(32, 3), fd, 1e-6 + 1e-3 * std::abs(fd));
    }
}

TEST(TrainStepTest, ZeroLearningRateLeavesParametersUnchanged) {
    auto m = lf::attach_lora(lf::init_transformer<float>(tiny_config()), 4, 8.0, 0.0);
    const std::string before = lf::checkpoint_to_bytes(m);
    lf::OptimizerState<float> opt;
    opt.learning_rate = 0.0;
    const auto metrics = lf::train_step(m, opt, one_block_batch({1, 2, 3, 4}));
    EXPECT_GT(metrics.loss, 0.0);
    EXPECT_EQ(lf::checkpoint_to_bytes(m), before);
    EXPECT_EQ(opt.step, 1);
}

TEST(TrainStepTest, OverfitsATinyBatch) {
    auto m = lf::attach_lora(lf::init_transformer<float>(tiny_config(41)), 8, 16.0, 0.0);
    lf::OptimizerState<float> opt;
    opt.learning_rate = 1e-2;
    const lf::Batch batch = one_block_batch({40, 41, 42, 43, 44, 45, 46, 47});
    double initial = 0.0, final_loss = 0.0;
    std::vector<double> losses;
    for (int step = 0; step < 200; ++step) {
        const auto metrics = lf::train_step(m, opt, batch);
        if (step == 0) initial = metrics.loss;
        final_loss = metrics.loss;
        losses.push_back(metrics.loss);
    }
    EXPECT_LT(final_loss, 0.1 * initial);
    // 10-step moving average is eventually monotone non-increasing
    const auto avg = [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t k = i; k < i + 10; ++k) s += losses[k];
        return s / 10.0;
    };
    std::size_t last_violation = 0;
    for (std::size_t i = 0; i + 11 < losses.size(); ++i) {
        if (avg(i + 1) > avg(i) + 1e-9) last_violation = i + 1;
    }
    EXPECT_LT(last_violation, losses.size() / 2) << "moving average still rising late in the run";
}

TEST(TrainStepTest, FrozenBaseBitIdenticalAfterSteps) {
    auto m = lf::attach_lora(lf::init_transformer<float>(tiny_config(43)), 8, 16.0, 0.05);
    std::vector<lf::Mat<float>> frozen;
    for (const auto& target : lf::default_lora_targets<float>(m.config)) frozen.push_back(m.base_weight(target));
    const auto gains = m.final_norm_gain;

    lf::OptimizerState<float> opt;
    opt.learning_rate = 1e-2;
    lf::Rng rng(4);
    for (int step = 0; step < 25; ++step) {
        lf::train_step(m, opt, one_block_batch({1, 2, 3, 4, 5, 6, 7, 8}), &rng);
    }
    const auto targets = lf::default_lora_targets<float>(m.config);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        ASSERT_TRUE(m.base_weight(targets[i]) == frozen[i]) << targets[i];
    }
    EXPECT_TRUE(m.final_norm_gain == gains);
    // while the trainable set moved
    EXPECT_GT(m.adapters.at("layers.0.attn.wq").B.cwiseAbs().maxCoeff(), 0.0f);
}

TEST(TrainStepTest, OptimizerStateOnlyForTrainables) {
    auto m = lf::attach_lora(lf::init_transformer<float>(tiny_config()), 4, 8.0, 0.0);
    lf::OptimizerState<float> opt;
    lf::train_step(m, opt, one_block_batch({1, 2, 3, 4}));
    const auto params = lf::trainable_parameters(m);
    for (const auto& [name, acc] : opt.first_moment) {
        const bool known = std::any_of(params.begin(), params.end(),
                                       [&](const auto& p) { return p.name == name; });
        EXPECT_TRUE(known) << name;
    }
}

TEST(TrainStepTest, NonFiniteLossLeavesStateUntouched) {
    auto m = lf::init_transformer<float>(tiny_config());
    m.input_embeddings(5, 0) = std::numeric_limits<float>::quiet_NaN();
    const std::string before = lf::checkpoint_to_bytes(m);
    lf::OptimizerState<float> opt;
    try {
        lf::train_step(m, opt, one_block_batch({5, 6, 7, 8}));
        FAIL() << "expected NonFiniteLoss";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::NonFiniteLoss);
    }
    EXPECT_EQ(lf::checkpoint_to_bytes(m), before);
    EXPECT_EQ(opt.step, 0);
}

TEST(SftFormatTest, MaskCoversResponsePlusEos) {
    const auto tok = lf::train_bpe(lftest::english_corpus(1, 40), 30);
    lf::InstructionExample ex;
    ex.prompt = "name a fruit";
    ex.response = "apple";
    const auto row = lf::format_sft_example(ex, tok, {}, 128);
    const std::size_t response_tokens = lf::encode(tok, "apple").size();
    std::size_t ones = 0;
    for (const auto v : row.loss_mask) ones += v;
    EXPECT_EQ(ones, response_tokens + 1);
    EXPECT_FALSE(row.truncated);
    // masked-1 targets decode back to the response (EOS is invisible)
    std::vector<lf::TokenId> masked;
    for (std::size_t t = 0; t < row.loss_mask.size(); ++t) {
        if (row.loss_mask[t]) masked.push_back(row.target_ids[t]);
    }
    EXPECT_EQ(lf::decode(tok, masked), "apple");
}

TEST(SftFormatTest, NoSystemPromptMasksExactlyPromptTokens) {
    const auto tok = lf::train_bpe(lftest::english_corpus(2, 40), 30);
    lf::InstructionExample ex;
    ex.prompt = "say hi";
    ex.response = "hi";
    const auto row = lf::format_sft_example(ex, tok, {}, 128);
    // zeros cover bos + user turn + assistant marker, i.e. everything
    // before the first response target
    const std::size_t zeros = row.loss_mask.size() -
                              static_cast<std::size_t>(std::count(row.loss_mask.begin(), row.loss_mask.end(), 1));
    const lf::ChatTemplate tmpl;
    const std::size_t prompt_tokens = 1 + lf::encode(tok, tmpl.user_marker + ex.prompt).size() + 1 +
                                      lf::encode(tok, tmpl.assistant_marker).size();
    EXPECT_EQ(zeros, prompt_tokens - 1);  // each target position shifts by one
}

TEST(SftFormatTest, SystemTurnIncludedWhenPresent) {
    const auto tok = lf::train_bpe(lftest::english_corpus(2, 40), 30);
    lf::InstructionExample with_sys;
    with_sys.system = "be brief";
    with_sys.prompt = "say hi";
    with_sys.response = "hi";
    lf::InstructionExample without = with_sys;
    without.system.reset();
    const auto row_a = lf::format_sft_example(with_sys, tok, {}, 128);
    const auto row_b = lf::format_sft_example(without, tok, {}, 128);
    EXPECT_GT(row_a.input_ids.size(), row_b.input_ids.size());
}

TEST(SftFormatTest, OverlongPromptTailTruncatedNeverResponse) {
    const auto tok = lf::train_bpe(lftest::english_corpus(2, 40), 30);
    lf::InstructionExample ex;
    for (int i = 0; i < 60; ++i) ex.prompt += "word ";
    ex.response = "final answer";
    const auto row = lf::format_sft_example(ex, tok, {}, 48);
    EXPECT_TRUE(row.truncated);
    EXPECT_EQ(row.input_ids.size(), 48u);
    std::vector<lf::TokenId> masked;
    for (std::size_t t = 0; t < row.loss_mask.size(); ++t) {
        if (row.loss_mask[t]) masked.push_back(row.target_ids[t]);
    }
    EXPECT_EQ(lf::decode(tok, masked), "final answer");
}

TEST(SftFormatTest, EmptyResponseRaises) {
    const auto tok = lf::train_bpe("abc", 0);
    lf::InstructionExample ex;
    ex.prompt = "p";
    try {
        lf::format_sft_example(ex, tok, {}, 64);
        FAIL() << "expected ValidationError";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::ValidationError);
    }
}

namespace {

struct CurriculumFixture {
    lftest::TempDir dir{"curriculum"};
    lf::TokenizerModel tok;
    lf::CurriculumPlan plan;
    std::map<std::string, std::string> evalsets;

    explicit CurriculumFixture(int steps) {
        tok = lf::train_bpe(lftest::english_corpus(51, 150) + lftest::persian_corpus(52, 150), 200);
        for (int s = 0; s < steps; ++s) {
            lf::CurriculumStep step;
            const std::string corpus = s == 0 ? lftest::persian_corpus(60 + s, 120)
                                              : lftest::persian_corpus(60 + s, 80) + lftest::english_corpus(70 + s, 40);
            step.plaintext_corpus = dir.write("corpus" + std::to_string(s) + ".txt", corpus);
            step.token_budget = 4000;
            step.epochs = 1;
            if (s > 0) {
                std::string jsonl;
                for (int i = 0; i < 6; ++i) {
                    const auto& en = lftest::english_words()[static_cast<std::size_t>(i)];
                    const auto& fa = lftest::persian_words()[static_cast<std::size_t>(i)];
                    jsonl += lf::instruction_to_json(lf::translation_instruction(en, fa)).dump() + "\n";
                }
                step.instruction_sets.emplace_back(dir.write("instr" + std::to_string(s) + ".jsonl", jsonl), 0);
            }
            plan.steps.push_back(std::move(step));
        }
        evalsets["fa"] = lftest::persian_corpus(90, 30);
        evalsets["en"] = lftest::english_corpus(91, 30);
    }

    lf::ModelState<float> fresh_model() const {
        lf::TransformerConfig cfg;
        cfg.vocab_size = static_cast<std::int64_t>(tok.size());
        cfg.d_model = 32;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.d_ff = 64;
        cfg.context_len = 32;
        cfg.seed = 8;
        return lf::attach_lora(lf::init_transformer<float>(cfg), 4, 8.0, 0.05);
    }
};

}  // namespace

TEST(CurriculumTest, SingleStepWithoutInstructionsHasNoSftRow) {
    CurriculumFixture fx(1);
    auto m = fx.fresh_model();
    lf::TrainOptions options;
    options.learning_rate = 5e-3;
    options.seed = 3;
    const auto log = lf::run_curriculum(fx.plan, m, fx.tok, fx.evalsets, options);
    ASSERT_EQ(log.steps.size(), 1u);
    EXPECT_FALSE(log.steps[0].has_sft_phase);
    EXPECT_EQ(log.steps[0].ppl_after_ft.size(), 2u);
    EXPECT_TRUE(log.steps[0].ppl_after_sft.empty());
    EXPECT_GT(log.steps[0].tokens_seen, 0);
}

TEST(CurriculumTest, ThreeStepGridHasFivePopulatedCells) {
    CurriculumFixture fx(3);
    auto m = fx.fresh_model();
    lf::TrainOptions options;
    options.learning_rate = 5e-3;
    options.seed = 4;
    const auto log = lf::run_curriculum(fx.plan, m, fx.tok, fx.evalsets, options);
    ASSERT_EQ(log.steps.size(), 3u);
    std::size_t populated = 0;
    for (const auto& step : log.steps) {
        populated += !step.ppl_after_ft.empty();
        populated += step.has_sft_phase && !step.ppl_after_sft.empty();
    }
    EXPECT_EQ(populated, 5u);  // 3x2 minus the absent step-1 SFT cell
    const auto j = lf::trainlog_to_json(log);
    EXPECT_TRUE(j["perplexity_grid"][0]["after_sft"].is_null());
    EXPECT_FALSE(j["perplexity_grid"][1]["after_sft"].is_null());
}

TEST(CurriculumTest, DeterministicForFixedSeed) {
    CurriculumFixture fx(2);
    lf::TrainOptions options;
    options.learning_rate = 5e-3;
    options.seed = 11;
    auto m1 = fx.fresh_model();
    auto m2 = fx.fresh_model();
    const auto log1 = lf::run_curriculum(fx.plan, m1, fx.tok, fx.evalsets, options);
    const auto log2 = lf::run_curriculum(fx.plan, m2, fx.tok, fx.evalsets, options);
    EXPECT_EQ(lf::checkpoint_to_bytes(m1), lf::checkpoint_to_bytes(m2));
    // logs agree except wall-clock measurements
    auto a = lf::trainlog_to_json(log1);
    auto b = lf::trainlog_to_json(log2);
    a.erase("total_wall_clock_seconds");
    b.erase("total_wall_clock_seconds");
    for (auto& s : a["steps"]) s.erase("wall_clock_seconds");
    for (auto& s : b["steps"]) s.erase("wall_clock_seconds");
    EXPECT_EQ(a.dump(), b.dump());
}

TEST(CurriculumTest, MissingDatasetFailsBeforeTraining) {
    CurriculumFixture fx(2);
    fx.plan.steps[1].plaintext_corpus = "/nonexistent/corpus.txt";
    auto m = fx.fresh_model();
    const std::string before = lf::checkpoint_to_bytes(m);
    try {
        lf::run_curriculum(fx.plan, m, fx.tok, fx.evalsets, {});
        FAIL() << "expected DatasetNotFound";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::DatasetNotFound);
    }
    EXPECT_EQ(lf::checkpoint_to_bytes(m), before);  // nothing trained
}
