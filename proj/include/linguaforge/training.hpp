// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "linguaforge/common.hpp"
#include "linguaforge/data.hpp"
#include "linguaforge/eval.hpp"
#include "linguaforge/model.hpp"
#include "linguaforge/tensor.hpp"
#include "linguaforge/tokenizer.hpp"

#include "json.hpp"

namespace lf {

// One training batch. target_ids are the inputs shifted left by one; the
// loss ignores positions whose mask is 0. Rows may differ in length but the
// three fields always agree per row.
struct Batch {
    std::vector<std::vector<TokenId>> input_ids;
    std::vector<std::vector<TokenId>> target_ids;
    std::vector<std::vector<std::uint8_t>> loss_mask;

    std::size_t rows() const { return input_ids.size(); }

    void validate() const {
        if (input_ids.size() != target_ids.size() || input_ids.size() != loss_mask.size()) {
            raise(ErrorCode::ValidationError, "batch fields disagree on row count");
        }
        for (std::size_t r = 0; r < input_ids.size(); ++r) {
            if (input_ids[r].size() != target_ids[r].size() || input_ids[r].size() != loss_mask[r].size()) {
                raise(ErrorCode::ValidationError, "batch row " + std::to_string(r) + " shapes disagree");
            }
            bool any = false;
            for (const auto m : loss_mask[r]) any = any || m != 0;
            if (!any) raise(ErrorCode::EmptyMask, "batch row " + std::to_string(r) + " has an all-zero mask");
        }
    }
};

// Builds a next-token batch row from one fixed-length block: every position
// but the last is predicted.
inline void append_block_row(Batch& batch, const std::vector<TokenId>& block, TokenId pad_id) {
    std::vector<TokenId> targets(block.size());
    std::vector<std::uint8_t> mask(block.size(), 1);
    for (std::size_t t = 0; t + 1 < block.size(); ++t) targets[t] = block[t + 1];
    targets[block.size() - 1] = pad_id;
    mask[block.size() - 1] = 0;
    batch.input_ids.push_back(block);
    batch.target_ids.push_back(std::move(targets));
    batch.loss_mask.push_back(std::move(mask));
}

// Mean over masked positions of -log softmax(logits)[target], natural log.
// Also returns the per-position losses (0 where masked out).
template <typename S>
inline std::pair<double, std::vector<double>> clm_loss(const Mat<S>& logits,
                                                       const std::vector<TokenId>& targets,
                                                       const std::vector<std::uint8_t>& mask) {
    if (static_cast<std::size_t>(logits.rows()) != targets.size() || targets.size() != mask.size()) {
        raise(ErrorCode::ValidationError, "clm_loss shapes disagree");
    }
    double total = 0.0;
    std::size_t counted = 0;
    std::vector<double> per_token(targets.size(), 0.0);
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (mask[t] == 0) continue;
        const TokenId target = targets[t];
        if (target < 0 || target >= logits.cols()) {
            raise(ErrorCode::UnknownTokenId, "target id " + std::to_string(target) + " outside vocab");
        }
        const double nll = -log_softmax_at<S>(logits.row(static_cast<Eigen::Index>(t)), target);
        per_token[t] = nll;
        total += nll;
        ++counted;
    }
    if (counted == 0) raise(ErrorCode::EmptyMask, "loss mask selects no positions");
    return {total / static_cast<double>(counted), std::move(per_token)};
}

template <typename S>
struct Gradients {
    std::map<std::string, Mat<S>> by_name;  // keys match trainable_parameters
    double loss = 0.0;
    std::size_t masked_tokens = 0;

    Mat<S>& at(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        auto it = by_name.find(name);
        if (it == by_name.end()) it = by_name.emplace(name, Mat<S>::Zero(rows, cols)).first;
        return it->second;
    }

    double norm() const {
        double sq = 0.0;
        for (const auto& [name, g] : by_name) sq += static_cast<double>(g.template cast<double>().squaredNorm());
        return std::sqrt(sq);
    }
};

namespace detail {

// dL/dx for y = gain .* x / rms(x), with gain frozen.
template <typename S>
inline Mat<S> rmsnorm_backward(const Mat<S>& dy, const Mat<S>& x, const Vec<S>& gain, const Vec<S>& rms_inv) {
    const Eigen::Index d = x.cols();
    Mat<S> dx(x.rows(), d);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const S inv = rms_inv[r];
        const S dot = (dy.row(r).array() * gain.transpose().array() * x.row(r).array()).sum();
        dx.row(r) = (dy.row(r).array() * gain.transpose().array() * inv -
                     x.row(r).array() * (dot * inv * inv * inv / static_cast<S>(d)))
                        .matrix();
    }
    return dx;
}

// Backward of adapted_matmul. Accumulates dA/dB when an adapter is attached
// (the frozen base weight receives nothing) and returns dL/dx.
template <typename S>
inline Mat<S> adapted_matmul_backward(const ModelState<S>& m, const std::string& site, const Mat<S>& w,
                                      const Mat<S>& x, const Mat<S>& dy, const ForwardTrace<S>& trace,
                                      Gradients<S>& grads) {
    Mat<S> dx = dy * w;
    const auto it = m.adapters.find(site);
    if (it == m.adapters.end()) return dx;
    const LoraAdapter<S>& adapter = it->second;
    const S scale = static_cast<S>(adapter.scale());

    const auto mask_it = trace.dropout_masks.find(site);
    const bool has_mask = mask_it != trace.dropout_masks.end();
    const Mat<S> xd = has_mask ? x.cwiseProduct(mask_it->second).eval() : x;

    const Mat<S> u = xd * adapter.A.transpose();        // T x r
    const Mat<S> du = scale * (dy * adapter.B);         // T x r
    grads.at(adapter_param_name(site, 'B'), adapter.B.rows(), adapter.B.cols()).noalias() +=
        scale * dy.transpose() * u;
    grads.at(adapter_param_name(site, 'A'), adapter.A.rows(), adapter.A.cols()).noalias() +=
        du.transpose() * xd;
    Mat<S> dxd = du * adapter.A;                        // T x d_in
    if (has_mask) dxd = dxd.cwiseProduct(mask_it->second);
    dx += dxd;
    return dx;
}

// Backpropagates one sequence given dL/dlogits, accumulating into grads.
template <typename S>
inline void backward_sequence(const ModelState<S>& m, const ForwardTrace<S>& trace, const Mat<S>& dlogits,
                              Gradients<S>& grads) {
    const auto& cfg = m.config;
    const Eigen::Index heads = cfg.n_heads;
    const Eigen::Index hd = cfg.head_dim();
    const S att_scale = S(1) / std::sqrt(static_cast<S>(hd));

    // logits = final_normed * E_unembed^T
    const std::string unembed_name = cfg.tie_embeddings ? "embeddings.input" : "embeddings.output";
    grads.at(unembed_name, m.unembedding().rows(), m.unembedding().cols()).noalias() +=
        dlogits.transpose() * trace.final_normed;
    Mat<S> dh = rmsnorm_backward<S>(dlogits * m.unembedding(), trace.final_in, m.final_norm_gain,
                                    trace.final_rms_inv);

    for (std::int64_t l = cfg.n_layers - 1; l >= 0; --l) {
        const LayerWeights<S>& lw = m.layers[static_cast<std::size_t>(l)];
        const LayerTrace<S>& tr = trace.layers[static_cast<std::size_t>(l)];

        // feed-forward block (residual: dh flows to both branches)
        Mat<S> dff_act =
            adapted_matmul_backward(m, weight_id(l, "ffn.w2"), lw.w2, tr.ff_act, dh, trace, grads);
        Mat<S> dff_pre = dff_act.cwiseProduct(tr.ff_pre.unaryExpr([](S v) { return gelu_derivative(v); }));
        Mat<S> dffn_normed =
            adapted_matmul_backward(m, weight_id(l, "ffn.w1"), lw.w1, tr.ffn_normed, dff_pre, trace, grads);
        dh += rmsnorm_backward<S>(dffn_normed, tr.ffn_in, lw.ffn_norm_gain, tr.ffn_rms_inv);

        // attention block
        Mat<S> dctx = adapted_matmul_backward(m, weight_id(l, "attn.wo"), lw.wo, tr.ctx, dh, trace, grads);
        Mat<S> dq(dctx.rows(), cfg.d_model), dk(dctx.rows(), cfg.d_model), dv(dctx.rows(), cfg.d_model);
        for (Eigen::Index head = 0; head < heads; ++head) {
            const auto vh = tr.v.middleCols(head * hd, hd);
            const auto qh = tr.q.middleCols(head * hd, hd);
            const auto kh = tr.k.middleCols(head * hd, hd);
            const Mat<S>& att = tr.att[static_cast<std::size_t>(head)];
            const auto dctx_h = dctx.middleCols(head * hd, hd);

            Mat<S> datt = dctx_h * vh.transpose();
            dv.middleCols(head * hd, hd).noalias() = att.transpose() * dctx_h;
            // softmax backward, rowwise: ds = att .* (datt - rowsum(datt .* att))
            Mat<S> dscores(att.rows(), att.cols());
            for (Eigen::Index r = 0; r < att.rows(); ++r) {
                const S dot = datt.row(r).dot(att.row(r));
                dscores.row(r) = (att.row(r).array() * (datt.row(r).array() - dot)).matrix();
            }
            dq.middleCols(head * hd, hd).noalias() = dscores * kh * att_scale;
            dk.middleCols(head * hd, hd).noalias() = dscores.transpose() * qh * att_scale;
        }
        Mat<S> da = adapted_matmul_backward(m, weight_id(l, "attn.wq"), lw.wq, tr.attn_normed, dq, trace, grads);
        da += adapted_matmul_backward(m, weight_id(l, "attn.wk"), lw.wk, tr.attn_normed, dk, trace, grads);
        da += adapted_matmul_backward(m, weight_id(l, "attn.wv"), lw.wv, tr.attn_normed, dv, trace, grads);
        dh += rmsnorm_backward<S>(da, tr.attn_in, lw.attn_norm_gain, tr.attn_rms_inv);
    }

    Mat<S>& de_in = grads.at("embeddings.input", m.input_embeddings.rows(), m.input_embeddings.cols());
    for (std::size_t t = 0; t < trace.ids.size(); ++t) {
        de_in.row(trace.ids[t]) += dh.row(static_cast<Eigen::Index>(t));
    }
}

}  // namespace detail

// Reverse-mode gradients of the causal-LM objective for the trainable set
// only. rng seeds the adapter dropout masks, so results are deterministic
// for a fixed seed.
template <typename S>
inline Gradients<S> backward(const ModelState<S>& m, const Batch& batch, Rng* rng = nullptr) {
    batch.validate();
    std::size_t total_masked = 0;
    for (const auto& mask : batch.loss_mask) {
        for (const auto v : mask) total_masked += v != 0;
    }

    Gradients<S> grads;
    grads.masked_tokens = total_masked;
    double loss_sum = 0.0;
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        ForwardTrace<S> trace;
        run_forward(m, batch.input_ids[r], /*train_mode=*/true, rng, trace);

        const auto& targets = batch.target_ids[r];
        const auto& mask = batch.loss_mask[r];
        Mat<S> dlogits = Mat<S>::Zero(trace.logits.rows(), trace.logits.cols());
        for (std::size_t t = 0; t < targets.size(); ++t) {
            if (mask[t] == 0) continue;
            const Eigen::Index row = static_cast<Eigen::Index>(t);
            loss_sum += -log_softmax_at<S>(trace.logits.row(row), targets[t]);
            // d/dlogits of mean masked NLL: (softmax - onehot) / total_masked
            Eigen::Matrix<S, 1, Eigen::Dynamic> p = trace.logits.row(row);
            const S row_max = p.maxCoeff();
            p = (p.array() - row_max).exp();
            p /= p.sum();
            dlogits.row(row) = p / static_cast<S>(total_masked);
            dlogits(row, targets[t]) -= S(1) / static_cast<S>(total_masked);
        }
        detail::backward_sequence(m, trace, dlogits, grads);
    }
    grads.loss = loss_sum / static_cast<double>(total_masked);
    return grads;
}

// Adam accumulators, present only for trainable parameters.
template <typename S>
struct OptimizerState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    std::map<std::string, Mat<S>> first_moment;
    std::map<std::string, Mat<S>> second_moment;
};

struct StepMetrics {
    double loss = 0.0;
    double grad_norm = 0.0;
};

// One Adam update over the trainable set. Raises NonFiniteLoss, leaving
// model and optimizer untouched, if the loss diverged.
template <typename S>
inline StepMetrics train_step(ModelState<S>& m, OptimizerState<S>& opt, const Batch& batch, Rng* rng = nullptr) {
    Gradients<S> grads = backward(m, batch, rng);
    if (!std::isfinite(grads.loss)) {
        raise(ErrorCode::NonFiniteLoss, "loss is not finite; state left unchanged");
    }

    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (const ParamRef<S>& param : trainable_parameters(m)) {
        const auto git = grads.by_name.find(param.name);
        if (git == grads.by_name.end()) continue;  // parameter unused by this batch
        const Mat<S>& g = git->second;
        auto m1 = opt.first_moment.find(param.name);
        if (m1 == opt.first_moment.end()) {
            m1 = opt.first_moment.emplace(param.name, Mat<S>::Zero(g.rows(), g.cols())).first;
        }
        auto m2 = opt.second_moment.find(param.name);
        if (m2 == opt.second_moment.end()) {
            m2 = opt.second_moment.emplace(param.name, Mat<S>::Zero(g.rows(), g.cols())).first;
        }
        m1->second = static_cast<S>(opt.beta1) * m1->second + static_cast<S>(1.0 - opt.beta1) * g;
        m2->second = static_cast<S>(opt.beta2) * m2->second +
                     static_cast<S>(1.0 - opt.beta2) * g.cwiseProduct(g);
        const Mat<S> m_hat = m1->second / static_cast<S>(bc1);
        const Mat<S> v_hat = m2->second / static_cast<S>(bc2);
        param.matrix->noalias() -=
            (static_cast<S>(opt.learning_rate) * m_hat.array() /
             (v_hat.array().sqrt() + static_cast<S>(opt.epsilon)))
                .matrix();
    }
    return {grads.loss, grads.norm()};
}

// --- SFT formatting ----------------------------------------------------------

// Fixed chat markers; each rendered turn ends with the tokenizer's EOS.
struct ChatTemplate {
    std::string system_marker = "<|sys|>";
    std::string user_marker = "<|usr|>";
    std::string assistant_marker = "<|asst|>";
};

struct SftRow {
    std::vector<TokenId> input_ids;
    std::vector<TokenId> target_ids;
    std::vector<std::uint8_t> loss_mask;
    bool truncated = false;
};

// Renders an instruction example into a training row. The loss mask is 0
// over prompt tokens and 1 over the response tokens plus the terminal EOS.
// Oversized prompts are tail-truncated; the response never is.
inline SftRow format_sft_example(const InstructionExample& ex, const TokenizerModel& t,
                                 const ChatTemplate& tmpl, std::size_t context_len) {
    if (ex.response.empty()) raise(ErrorCode::ValidationError, "instruction example has an empty response");
    const TokenId bos = t.special_tokens.bos_id;
    const TokenId eos = t.special_tokens.eos_id;
    if (bos < 0 || eos < 0) raise(ErrorCode::ConfigError, "tokenizer lacks bos/eos specials");

    std::vector<TokenId> prefix;  // prompt up to (not including) the assistant marker
    prefix.push_back(bos);
    if (ex.system && !ex.system->empty()) {
        const auto ids = encode(t, tmpl.system_marker + *ex.system);
        prefix.insert(prefix.end(), ids.begin(), ids.end());
        prefix.push_back(eos);
    }
    {
        const auto ids = encode(t, tmpl.user_marker + ex.prompt);
        prefix.insert(prefix.end(), ids.begin(), ids.end());
        prefix.push_back(eos);
    }
    const std::vector<TokenId> marker = encode(t, tmpl.assistant_marker);
    std::vector<TokenId> response_ids = encode(t, ex.response);
    response_ids.push_back(eos);

    // Row length is |full| - 1; the full sequence must fit context_len + 1.
    const std::size_t fixed = marker.size() + response_ids.size();
    bool truncated = false;
    if (prefix.size() + fixed > context_len + 1) {
        const std::size_t keep = context_len + 1 > fixed ? context_len + 1 - fixed : 0;
        if (keep == 0) {
            raise(ErrorCode::ContextOverflow,
                  "response alone exceeds context_len " + std::to_string(context_len));
        }
        prefix.resize(keep);
        truncated = true;
    }

    std::vector<TokenId> full = prefix;
    full.insert(full.end(), marker.begin(), marker.end());
    const std::size_t prompt_len = full.size();
    full.insert(full.end(), response_ids.begin(), response_ids.end());

    SftRow row;
    row.truncated = truncated;
    const std::size_t seq = full.size() - 1;
    row.input_ids.assign(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(seq));
    row.target_ids.assign(full.begin() + 1, full.end());
    row.loss_mask.assign(seq, 0);
    for (std::size_t p = prompt_len - 1; p < seq; ++p) row.loss_mask[p] = 1;
    return row;
}

// --- curriculum ---------------------------------------------------------------

struct CurriculumStep {
    std::filesystem::path plaintext_corpus;
    std::vector<std::pair<std::filesystem::path, std::size_t>> instruction_sets;  // (path, example count; 0 = all)
    std::int64_t token_budget = 0;
    std::int64_t epochs = 1;
};

struct CurriculumPlan {
    std::vector<CurriculumStep> steps;

    void validate() const {
        if (steps.empty()) raise(ErrorCode::ValidationError, "curriculum plan needs at least one step");
        for (const auto& step : steps) {
            if (step.token_budget <= 0) raise(ErrorCode::ValidationError, "token budgets must be positive");
            if (step.epochs <= 0) raise(ErrorCode::ValidationError, "epochs must be positive");
        }
    }
};

inline CurriculumPlan plan_from_json(const nlohmann::json& j) {
    CurriculumPlan plan;
    try {
        for (const auto& js : j.at("steps")) {
            CurriculumStep step;
            step.plaintext_corpus = js.at("plaintext_corpus").get<std::string>();
            if (js.contains("instruction_sets")) {
                for (const auto& set : js["instruction_sets"]) {
                    step.instruction_sets.emplace_back(set.at("path").get<std::string>(),
                                                       set.value("count", std::size_t{0}));
                }
            }
            step.token_budget = js.at("token_budget").get<std::int64_t>();
            step.epochs = js.value("epochs", std::int64_t{1});
            plan.steps.push_back(std::move(step));
        }
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ParseError, std::string("bad curriculum plan: ") + e.what());
    }
    plan.validate();
    return plan;
}

struct CurriculumStepLog {
    std::vector<double> ft_losses;
    std::vector<double> sft_losses;
    std::map<std::string, double> ppl_after_ft;   // language -> perplexity
    std::map<std::string, double> ppl_after_sft;  // empty when the step has no instruction sets
    bool has_sft_phase = false;
    std::int64_t tokens_seen = 0;          // across epochs, capped by the budget
    std::int64_t unique_corpus_tokens = 0; // single-epoch token count of the packed corpus
    std::int64_t sft_examples = 0;
    double wall_clock_seconds = 0.0;
};

struct TrainLog {
    std::vector<CurriculumStepLog> steps;
    std::int64_t total_tokens_seen = 0;
    double total_wall_clock_seconds = 0.0;
};

inline nlohmann::ordered_json trainlog_to_json(const TrainLog& log) {
    nlohmann::ordered_json j;
    auto grid = nlohmann::ordered_json::array();
    auto steps = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < log.steps.size(); ++i) {
        const auto& s = log.steps[i];
        nlohmann::ordered_json cell;
        cell["step"] = i + 1;
        cell["after_ft"] = s.ppl_after_ft;
        if (s.has_sft_phase) {
            cell["after_sft"] = s.ppl_after_sft;
        } else {
            cell["after_sft"] = nullptr;
        }
        grid.push_back(std::move(cell));

        nlohmann::ordered_json sj;
        sj["ft_losses"] = s.ft_losses;
        sj["sft_losses"] = s.sft_losses;
        sj["tokens_seen"] = s.tokens_seen;
        sj["unique_corpus_tokens"] = s.unique_corpus_tokens;
        sj["sft_examples"] = s.sft_examples;
        sj["wall_clock_seconds"] = s.wall_clock_seconds;
        steps.push_back(std::move(sj));
    }
    j["perplexity_grid"] = std::move(grid);
    j["steps"] = std::move(steps);
    j["total_tokens_seen"] = log.total_tokens_seen;
    j["total_wall_clock_seconds"] = log.total_wall_clock_seconds;
    return j;
}

struct TrainOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
};

// Runs the multi-step curriculum: per step a plain-text fine-tuning phase
// over packed blocks, then an SFT phase over the step's instruction sets
// (skipped when there are none). Held-out perplexity per language is
// recorded after each phase, giving the per-step grid.
template <typename S>
inline TrainLog run_curriculum(const CurriculumPlan& plan, ModelState<S>& m, const TokenizerModel& t,
                               const std::map<std::string, std::string>& evalsets, const TrainOptions& options) {
    plan.validate();
    for (const auto& step : plan.steps) {
        if (!std::filesystem::exists(step.plaintext_corpus)) {
            raise(ErrorCode::DatasetNotFound, step.plaintext_corpus.string());
        }
        for (const auto& [path, count] : step.instruction_sets) {
            if (!std::filesystem::exists(path)) raise(ErrorCode::DatasetNotFound, path.string());
        }
    }

    OptimizerState<S> opt;
    opt.learning_rate = options.learning_rate;
    opt.beta1 = options.beta1;
    opt.beta2 = options.beta2;
    opt.epsilon = options.epsilon;
    Rng rng(options.seed);

    const auto eval_all = [&](std::map<std::string, double>& out) {
        for (const auto& [lang, corpus] : evalsets) out[lang] = perplexity(m, t, corpus);
    };

    TrainLog log;
    const auto run_start = std::chrono::steady_clock::now();
    for (std::size_t si = 0; si < plan.steps.size(); ++si) {
        const CurriculumStep& step = plan.steps[si];
        CurriculumStepLog slog;
        const auto step_start = std::chrono::steady_clock::now();

        // fine-tuning phase over packed plain text
        const std::string corpus = load_corpus(step.plaintext_corpus);
        std::vector<std::vector<TokenId>> docs;
        for (const auto& doc : split_documents(corpus)) docs.push_back(encode(t, doc));
        const PackedDataset packed =
            pack_sequences(docs, static_cast<std::size_t>(m.config.context_len), t.special_tokens.eos_id);
        slog.unique_corpus_tokens = static_cast<std::int64_t>(packed.source_token_count);

        Rng ft_rng = rng.fork(fnv1a64("ft") ^ si);
        bool budget_hit = false;
        for (std::int64_t epoch = 0; epoch < step.epochs && !budget_hit; ++epoch) {
            for (std::size_t b = 0; b < packed.blocks.size() && !budget_hit;) {
                Batch batch;
                while (b < packed.blocks.size() && batch.rows() < options.batch_size) {
                    append_block_row(batch, packed.blocks[b], t.special_tokens.pad_id);
                    ++b;
                }
                const StepMetrics metrics = train_step(m, opt, batch, &ft_rng);
                slog.ft_losses.push_back(metrics.loss);
                slog.tokens_seen +=
                    static_cast<std::int64_t>(batch.rows()) * static_cast<std::int64_t>(m.config.context_len);
                budget_hit = slog.tokens_seen >= step.token_budget;
            }
        }
        eval_all(slog.ppl_after_ft);

        // SFT phase
        if (!step.instruction_sets.empty()) {
            slog.has_sft_phase = true;
            Rng sft_rng = rng.fork(fnv1a64("sft") ^ si);
            ChatTemplate tmpl;
            for (const auto& [path, count] : step.instruction_sets) {
                std::vector<InstructionExample> examples = load_instructions(path);
                if (count > 0 && count < examples.size()) examples.resize(count);
                for (const auto& ex : examples) {
                    const SftRow row =
                        format_sft_example(ex, t, tmpl, static_cast<std::size_t>(m.config.context_len));
                    Batch batch;
                    batch.input_ids.push_back(row.input_ids);
                    batch.target_ids.push_back(row.target_ids);
                    batch.loss_mask.push_back(row.loss_mask);
                    const StepMetrics metrics = train_step(m, opt, batch, &sft_rng);
                    slog.sft_losses.push_back(metrics.loss);
                    ++slog.sft_examples;
                }
            }
            eval_all(slog.ppl_after_sft);
        }

        slog.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - step_start).count();
        log.total_tokens_seen += slog.tokens_seen;
        log.steps.push_back(std::move(slog));
    }
    log.total_wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
    return log;
}

}  // namespace lf
