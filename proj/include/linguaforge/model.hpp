// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "linguaforge/common.hpp"
#include "linguaforge/tensor.hpp"
#include "linguaforge/tokenizer.hpp"

#include "json.hpp"

namespace lf {

struct TransformerConfig {
    std::int64_t vocab_size = 0;
    std::int64_t d_model = 64;
    std::int64_t n_layers = 2;
    std::int64_t n_heads = 2;
    std::int64_t d_ff = 256;
    std::int64_t context_len = 128;
    bool tie_embeddings = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0) {
            raise(ErrorCode::ConfigError, "dimensions must be positive");
        }
        if (d_model % n_heads != 0) {
            raise(ErrorCode::ConfigError, "d_model must be divisible by n_heads");
        }
        if (context_len < 2) raise(ErrorCode::ConfigError, "context_len must be at least 2");
        if (vocab_size < 256 + 1) {
            raise(ErrorCode::ConfigError, "vocab_size must cover the byte alphabet plus specials");
        }
    }

    std::int64_t head_dim() const { return d_model / n_heads; }
};

inline nlohmann::ordered_json config_to_json(const TransformerConfig& cfg) {
    return nlohmann::ordered_json{{"vocab_size", cfg.vocab_size}, {"d_model", cfg.d_model},
                                  {"n_layers", cfg.n_layers},     {"n_heads", cfg.n_heads},
                                  {"d_ff", cfg.d_ff},             {"context_len", cfg.context_len},
                                  {"tie_embeddings", cfg.tie_embeddings}, {"seed", cfg.seed}};
}

inline TransformerConfig config_from_json(const nlohmann::json& j) {
    TransformerConfig cfg;
    try {
        cfg.vocab_size = j.at("vocab_size").get<std::int64_t>();
        cfg.d_model = j.at("d_model").get<std::int64_t>();
        cfg.n_layers = j.at("n_layers").get<std::int64_t>();
        cfg.n_heads = j.at("n_heads").get<std::int64_t>();
        cfg.d_ff = j.at("d_ff").get<std::int64_t>();
        cfg.context_len = j.at("context_len").get<std::int64_t>();
        cfg.tie_embeddings = j.value("tie_embeddings", false);
        cfg.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ParseError, std::string("bad model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

// Rank decomposition attached to one frozen weight matrix. The effective
// update (alpha/rank) * B * A starts at zero because B does.
template <typename S>
struct LoraAdapter {
    Mat<S> A;  // rank x d_in
    Mat<S> B;  // d_out x rank
    std::int64_t rank = 0;
    double alpha = 0.0;
    double dropout_p = 0.0;

    double scale() const { return alpha / static_cast<double>(rank); }
};

template <typename S>
struct LayerWeights {
    Vec<S> attn_norm_gain;
    Mat<S> wq, wk, wv, wo;  // each d_model x d_model, stored d_out x d_in
    Vec<S> ffn_norm_gain;
    Mat<S> w1;  // d_ff x d_model
    Mat<S> w2;  // d_model x d_ff
};

inline const std::vector<std::string>& layer_weight_kinds() {
    static const std::vector<std::string> kinds = {"attn.wq", "attn.wk", "attn.wv",
                                                   "attn.wo", "ffn.w1",  "ffn.w2"};
    return kinds;
}

inline std::string weight_id(std::int64_t layer, const std::string& kind) {
    return "layers." + std::to_string(layer) + "." + kind;
}

// Tiny decoder-only causal transformer. Base weights (attention,
// feed-forward, norm gains) stay frozen; the trainable set is exactly the
// embeddings plus any attached adapter matrices. Immutable during forward,
// so concurrent eval-mode forwards over one state are safe.
template <typename S>
struct ModelState {
    TransformerConfig config;
    Mat<S> input_embeddings;    // vocab x d_model
    Mat<S> output_embeddings;   // vocab x d_model (empty when tied)
    std::vector<LayerWeights<S>> layers;
    Vec<S> final_norm_gain;
    std::map<std::string, LoraAdapter<S>> adapters;  // weight id -> adapter
    bool base_frozen = true;

    const Mat<S>& unembedding() const { return config.tie_embeddings ? input_embeddings : output_embeddings; }
    Mat<S>& unembedding() { return config.tie_embeddings ? input_embeddings : output_embeddings; }

    const Mat<S>& base_weight(const std::string& id) const {
        return const_cast<ModelState<S>*>(this)->base_weight_mut(id);
    }

    Mat<S>& base_weight_mut(const std::string& id) {
        for (std::int64_t l = 0; l < config.n_layers; ++l) {
            LayerWeights<S>& lw = layers[static_cast<std::size_t>(l)];
            if (id == weight_id(l, "attn.wq")) return lw.wq;
            if (id == weight_id(l, "attn.wk")) return lw.wk;
            if (id == weight_id(l, "attn.wv")) return lw.wv;
            if (id == weight_id(l, "attn.wo")) return lw.wo;
            if (id == weight_id(l, "ffn.w1")) return lw.w1;
            if (id == weight_id(l, "ffn.w2")) return lw.w2;
        }
        raise(ErrorCode::ConfigError, "unknown weight id " + id);
    }
};

using Model = ModelState<float>;

inline constexpr double kRmsNormEps = 1e-5;
inline constexpr double kBaseInitStd = 0.02;

template <typename S>
inline ModelState<S> init_transformer(const TransformerConfig& cfg) {
    cfg.validate();
    ModelState<S> m;
    m.config = cfg;
    Rng rng(cfg.seed);

    m.input_embeddings.resize(cfg.vocab_size, cfg.d_model);
    fill_gaussian(m.input_embeddings, rng, 0.0, kBaseInitStd);
    if (!cfg.tie_embeddings) {
        m.output_embeddings.resize(cfg.vocab_size, cfg.d_model);
        fill_gaussian(m.output_embeddings, rng, 0.0, kBaseInitStd);
    }

    m.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& layer : m.layers) {
        layer.attn_norm_gain = Vec<S>::Ones(cfg.d_model);
        layer.ffn_norm_gain = Vec<S>::Ones(cfg.d_model);
        layer.wq.resize(cfg.d_model, cfg.d_model);
        layer.wk.resize(cfg.d_model, cfg.d_model);
        layer.wv.resize(cfg.d_model, cfg.d_model);
        layer.wo.resize(cfg.d_model, cfg.d_model);
        layer.w1.resize(cfg.d_ff, cfg.d_model);
        layer.w2.resize(cfg.d_model, cfg.d_ff);
        fill_gaussian(layer.wq, rng, 0.0, kBaseInitStd);
        fill_gaussian(layer.wk, rng, 0.0, kBaseInitStd);
        fill_gaussian(layer.wv, rng, 0.0, kBaseInitStd);
        fill_gaussian(layer.wo, rng, 0.0, kBaseInitStd);
        fill_gaussian(layer.w1, rng, 0.0, kBaseInitStd);
        fill_gaussian(layer.w2, rng, 0.0, kBaseInitStd);
    }
    m.final_norm_gain = Vec<S>::Ones(cfg.d_model);
    m.base_frozen = true;
    return m;
}

// Grows both embedding matrices to new_vocab_size rows. Existing rows are
// untouched (bitwise); each new row is drawn from a Gaussian matching the
// per-dimension mean and (population) standard deviation of the existing
// rows, clamped to the existing per-dimension [min, max].
template <typename S>
inline ModelState<S> expand_embeddings(const ModelState<S>& m, std::int64_t new_vocab_size) {
    const std::int64_t old_size = m.config.vocab_size;
    if (new_vocab_size < old_size) {
        raise(ErrorCode::ShrinkNotAllowed, "cannot shrink vocab from " + std::to_string(old_size) + " to " +
                                               std::to_string(new_vocab_size));
    }
    ModelState<S> out = m;
    out.config.vocab_size = new_vocab_size;
    if (new_vocab_size == old_size) return out;

    Rng rng = Rng(m.config.seed).fork(fnv1a64("expand") ^ static_cast<std::uint64_t>(new_vocab_size));
    const auto grow = [&](Mat<S>& e) {
        if (e.rows() == 0) return;  // tied models keep output_embeddings empty
        const Mat<S> old = e;
        e.resize(new_vocab_size, old.cols());
        e.topRows(old.rows()) = old;
        for (Eigen::Index c = 0; c < old.cols(); ++c) {
            const double mean = static_cast<double>(old.col(c).template cast<double>().mean());
            const double var =
                (old.col(c).template cast<double>().array() - mean).square().sum() / static_cast<double>(old.rows());
            const double stddev = std::sqrt(var);
            const double lo = static_cast<double>(old.col(c).minCoeff());
            const double hi = static_cast<double>(old.col(c).maxCoeff());
            for (Eigen::Index r = old.rows(); r < e.rows(); ++r) {
                const double draw = rng.gaussian(mean, stddev);
                e(r, c) = static_cast<S>(std::min(hi, std::max(lo, draw)));
            }
        }
    };
    grow(out.input_embeddings);
    grow(out.output_embeddings);
    return out;
}

template <typename S>
inline std::vector<std::string> default_lora_targets(const TransformerConfig& cfg) {
    std::vector<std::string> targets;
    for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
        for (const auto& kind : layer_weight_kinds()) targets.push_back(weight_id(l, kind));
    }
    return targets;
}

// Wraps each target weight with a rank decomposition: A ~ Gaussian(0, 1/rank),
// B = 0, so the forward pass is unchanged until training moves B.
template <typename S>
inline ModelState<S> attach_lora(const ModelState<S>& m, std::int64_t rank, double alpha, double dropout_p,
                                 const std::vector<std::string>& targets) {
    if (rank < 1) raise(ErrorCode::ConfigError, "LoRA rank must be at least 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0) raise(ErrorCode::ConfigError, "dropout must lie in [0, 1)");
    ModelState<S> out = m;
    for (const std::string& target : targets) {
        if (out.adapters.count(target)) {
            raise(ErrorCode::AlreadyAdapted, "adapter already attached to " + target);
        }
        const Mat<S>& w = out.base_weight(target);
        LoraAdapter<S> adapter;
        adapter.rank = rank;
        adapter.alpha = alpha;
        adapter.dropout_p = dropout_p;
        adapter.A.resize(rank, w.cols());
        adapter.B = Mat<S>::Zero(w.rows(), rank);
        Rng rng = Rng(m.config.seed).fork(fnv1a64(target) ^ 0xAD417A);
        fill_gaussian(adapter.A, rng, 0.0, 1.0 / static_cast<double>(rank));
        out.adapters.emplace(target, std::move(adapter));
    }
    out.base_frozen = true;
    return out;
}

template <typename S>
inline ModelState<S> attach_lora(const ModelState<S>& m, std::int64_t rank, double alpha, double dropout_p) {
    return attach_lora(m, rank, alpha, dropout_p, default_lora_targets<S>(m.config));
}

// Folds every adapter's update into its base weight and removes the
// adapters; eval-mode outputs match the adapted model up to rounding.
template <typename S>
inline ModelState<S> merge_lora(const ModelState<S>& m) {
    if (m.adapters.empty()) raise(ErrorCode::NothingToMerge, "no adapters attached");
    ModelState<S> out = m;
    for (const auto& [target, adapter] : m.adapters) {
        out.base_weight_mut(target) += static_cast<S>(adapter.scale()) * adapter.B * adapter.A;
    }
    out.adapters.clear();
    return out;
}

// --- forward pass -----------------------------------------------------------

template <typename S>
struct LayerTrace {
    Mat<S> attn_in;
    Vec<S> attn_rms_inv;
    Mat<S> attn_normed;
    Mat<S> q, k, v;
    std::vector<Mat<S>> att;  // per head, rows softmaxed
    Mat<S> ctx;
    Mat<S> ffn_in;
    Vec<S> ffn_rms_inv;
    Mat<S> ffn_normed;
    Mat<S> ff_pre;
    Mat<S> ff_act;
};

template <typename S>
struct ForwardTrace {
    std::vector<TokenId> ids;
    Mat<S> embedded;
    std::vector<LayerTrace<S>> layers;
    Mat<S> final_in;
    Vec<S> final_rms_inv;
    Mat<S> final_normed;
    Mat<S> logits;
    // Inverted dropout masks per adapted site (entries 0 or 1/(1-p)),
    // recorded only in train mode so backward replays the same masks.
    std::map<std::string, Mat<S>> dropout_masks;
};

namespace detail {

template <typename S>
inline Mat<S> rmsnorm_rows(const Mat<S>& x, const Vec<S>& gain, Vec<S>& inv_out) {
    const Eigen::Index d = x.cols();
    inv_out.resize(x.rows());
    Mat<S> y(x.rows(), d);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const S mean_sq = x.row(r).squaredNorm() / static_cast<S>(d);
        const S inv = S(1) / std::sqrt(mean_sq + static_cast<S>(kRmsNormEps));
        inv_out[r] = inv;
        y.row(r) = (x.row(r).array() * inv * gain.transpose().array()).matrix();
    }
    return y;
}

// y = x * Wᵀ plus the adapter path when one is attached to `site`.
// In train mode the adapter input is passed through inverted dropout whose
// mask is drawn from rng and stored on the trace.
template <typename S>
inline Mat<S> adapted_matmul(const ModelState<S>& m, const std::string& site, const Mat<S>& w,
                             const Mat<S>& x, bool train_mode, Rng* rng, ForwardTrace<S>* trace) {
    Mat<S> y = x * w.transpose();
    const auto it = m.adapters.find(site);
    if (it == m.adapters.end()) return y;
    const LoraAdapter<S>& adapter = it->second;
    const S scale = static_cast<S>(adapter.scale());
    if (train_mode && adapter.dropout_p > 0.0 && rng != nullptr) {
        Mat<S> mask(x.rows(), x.cols());
        const S keep = static_cast<S>(1.0 / (1.0 - adapter.dropout_p));
        for (Eigen::Index r = 0; r < mask.rows(); ++r) {
            for (Eigen::Index c = 0; c < mask.cols(); ++c) {
                mask(r, c) = rng->uniform() < adapter.dropout_p ? S(0) : keep;
            }
        }
        const Mat<S> dropped = x.cwiseProduct(mask);
        y.noalias() += scale * (dropped * adapter.A.transpose()) * adapter.B.transpose();
        if (trace) trace->dropout_masks.emplace(site, std::move(mask));
    } else {
        y.noalias() += scale * (x * adapter.A.transpose()) * adapter.B.transpose();
    }
    return y;
}

template <typename S>
inline Mat<S> sinusoidal_positions(Eigen::Index t_count, Eigen::Index d) {
    Mat<S> p(t_count, d);
    for (Eigen::Index t = 0; t < t_count; ++t) {
        for (Eigen::Index i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            p(t, i) = static_cast<S>(std::sin(static_cast<double>(t) * freq));
            if (i + 1 < d) p(t, i + 1) = static_cast<S>(std::cos(static_cast<double>(t) * freq));
        }
    }
    return p;
}

}  // namespace detail

// Runs the model over one sequence, filling the trace. rng supplies dropout
// masks and may be null in eval mode.
template <typename S>
inline void run_forward(const ModelState<S>& m, const std::vector<TokenId>& ids, bool train_mode, Rng* rng,
                        ForwardTrace<S>& trace) {
    const auto& cfg = m.config;
    const Eigen::Index t_count = static_cast<Eigen::Index>(ids.size());
    if (t_count > cfg.context_len) {
        raise(ErrorCode::ContextOverflow, "sequence of " + std::to_string(ids.size()) +
                                              " tokens exceeds context_len " + std::to_string(cfg.context_len));
    }
    for (const TokenId id : ids) {
        if (id < 0 || id >= cfg.vocab_size) {
            raise(ErrorCode::UnknownTokenId, "token id " + std::to_string(id) + " outside vocab");
        }
    }
    const Eigen::Index d = cfg.d_model;
    const Eigen::Index heads = cfg.n_heads;
    const Eigen::Index hd = cfg.head_dim();

    trace.ids = ids;
    trace.layers.assign(static_cast<std::size_t>(cfg.n_layers), LayerTrace<S>{});
    trace.dropout_masks.clear();

    Mat<S> h = detail::sinusoidal_positions<S>(t_count, d);
    for (Eigen::Index t = 0; t < t_count; ++t) {
        h.row(t) += m.input_embeddings.row(ids[static_cast<std::size_t>(t)]);
    }
    trace.embedded = h;

    const S att_scale = S(1) / std::sqrt(static_cast<S>(hd));
    for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights<S>& lw = m.layers[static_cast<std::size_t>(l)];
        LayerTrace<S>& tr = trace.layers[static_cast<std::size_t>(l)];

        tr.attn_in = h;
        tr.attn_normed = detail::rmsnorm_rows(h, lw.attn_norm_gain, tr.attn_rms_inv);
        tr.q = detail::adapted_matmul(m, weight_id(l, "attn.wq"), lw.wq, tr.attn_normed, train_mode, rng, &trace);
        tr.k = detail::adapted_matmul(m, weight_id(l, "attn.wk"), lw.wk, tr.attn_normed, train_mode, rng, &trace);
        tr.v = detail::adapted_matmul(m, weight_id(l, "attn.wv"), lw.wv, tr.attn_normed, train_mode, rng, &trace);

        tr.att.assign(static_cast<std::size_t>(heads), Mat<S>{});
        tr.ctx.resize(t_count, d);
        for (Eigen::Index head = 0; head < heads; ++head) {
            const auto qh = tr.q.middleCols(head * hd, hd);
            const auto kh = tr.k.middleCols(head * hd, hd);
            const auto vh = tr.v.middleCols(head * hd, hd);
            Mat<S> scores = qh * kh.transpose() * att_scale;
            for (Eigen::Index i = 0; i < t_count; ++i) {
                for (Eigen::Index j = i + 1; j < t_count; ++j) {
                    scores(i, j) = -std::numeric_limits<S>::infinity();
                }
            }
            softmax_rows(scores);
            tr.ctx.middleCols(head * hd, hd).noalias() = scores * vh;
            tr.att[static_cast<std::size_t>(head)] = std::move(scores);
        }
        h += detail::adapted_matmul(m, weight_id(l, "attn.wo"), lw.wo, tr.ctx, train_mode, rng, &trace);

        tr.ffn_in = h;
        tr.ffn_normed = detail::rmsnorm_rows(h, lw.ffn_norm_gain, tr.ffn_rms_inv);
        tr.ff_pre = detail::adapted_matmul(m, weight_id(l, "ffn.w1"), lw.w1, tr.ffn_normed, train_mode, rng, &trace);
        tr.ff_act = tr.ff_pre.unaryExpr([](S x) { return gelu(x); });
        h += detail::adapted_matmul(m, weight_id(l, "ffn.w2"), lw.w2, tr.ff_act, train_mode, rng, &trace);
    }

    trace.final_in = h;
    trace.final_normed = detail::rmsnorm_rows(h, m.final_norm_gain, trace.final_rms_inv);
    trace.logits.noalias() = trace.final_normed * m.unembedding().transpose();
}

// Causal next-token logits for one sequence (positions x vocab).
template <typename S>
inline Mat<S> forward(const ModelState<S>& m, const std::vector<TokenId>& ids, bool train_mode = false,
                      Rng* rng = nullptr) {
    ForwardTrace<S> trace;
    run_forward(m, ids, train_mode, rng, trace);
    return std::move(trace.logits);
}

// --- trainable parameters ---------------------------------------------------

template <typename S>
struct ParamRef {
    std::string name;
    Mat<S>* matrix;
};

inline std::string adapter_param_name(const std::string& target, char which) {
    return "adapters." + target + (which == 'A' ? ".A" : ".B");
}

// Exactly the embedding matrices plus all adapter factors, in a stable
// order: embeddings first, then adapters sorted by weight id (A before B).
// Frozen base weights never appear.
template <typename S>
inline std::vector<ParamRef<S>> trainable_parameters(ModelState<S>& m) {
    std::vector<ParamRef<S>> params;
    params.push_back({"embeddings.input", &m.input_embeddings});
    if (!m.config.tie_embeddings) {
        params.push_back({"embeddings.output", &m.output_embeddings});
    }
    for (auto& [target, adapter] : m.adapters) {
        params.push_back({adapter_param_name(target, 'A'), &adapter.A});
        params.push_back({adapter_param_name(target, 'B'), &adapter.B});
    }
    return params;
}

}  // namespace lf
