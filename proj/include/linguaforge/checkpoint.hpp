// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "linguaforge/common.hpp"
#include "linguaforge/model.hpp"

#include "json.hpp"

namespace lf {

// Checkpoint layout (all integers little-endian):
//   bytes 0..3    magic "LFG1"
//   bytes 4..11   uint64: header length H in bytes
//   bytes 12..12+H  UTF-8 JSON header:
//     {"config": {...}, "adapters": [{"target","rank","alpha","dropout_p"}],
//      "tensors": [{"name","shape":[...],"offset": bytes-into-payload}]}
//   then the payload: each tensor as row-major float32, in directory order.

inline constexpr char kCheckpointMagic[4] = {'L', 'F', 'G', '1'};

namespace detail {

inline void write_f32_le(std::string& out, float value) {
    std::uint32_t bits;
    std::memcpy(&bits, &value, 4);
    if constexpr (std::endian::native == std::endian::big) {
        bits = ((bits & 0xFF) << 24) | ((bits & 0xFF00) << 8) | ((bits >> 8) & 0xFF00) | (bits >> 24);
    }
    out.push_back(static_cast<char>(bits & 0xFF));
    out.push_back(static_cast<char>((bits >> 8) & 0xFF));
    out.push_back(static_cast<char>((bits >> 16) & 0xFF));
    out.push_back(static_cast<char>((bits >> 24) & 0xFF));
}

inline float read_f32_le(const unsigned char* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    float value;
    std::memcpy(&value, &bits, 4);
    return value;
}

inline void write_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename S>
struct TensorEntry {
    std::string name;
    std::vector<Eigen::Index> shape;
    const S* data;
    Eigen::Index count;
};

// Canonical tensor order: embeddings, per-layer weights, final norm, then
// adapter factors sorted by target.
template <typename S>
inline std::vector<TensorEntry<S>> tensor_directory(const ModelState<S>& m) {
    std::vector<TensorEntry<S>> dir;
    const auto add_mat = [&](const std::string& name, const Mat<S>& mat) {
        dir.push_back({name, {mat.rows(), mat.cols()}, mat.data(), mat.size()});
    };
    const auto add_vec = [&](const std::string& name, const Vec<S>& v) {
        dir.push_back({name, {v.size()}, v.data(), v.size()});
    };
    add_mat("embeddings.input", m.input_embeddings);
    if (!m.config.tie_embeddings) add_mat("embeddings.output", m.output_embeddings);
    for (std::int64_t l = 0; l < m.config.n_layers; ++l) {
        const LayerWeights<S>& lw = m.layers[static_cast<std::size_t>(l)];
        const std::string prefix = "layers." + std::to_string(l) + ".";
        add_vec(prefix + "attn_norm.gain", lw.attn_norm_gain);
        add_mat(prefix + "attn.wq", lw.wq);
        add_mat(prefix + "attn.wk", lw.wk);
        add_mat(prefix + "attn.wv", lw.wv);
        add_mat(prefix + "attn.wo", lw.wo);
        add_vec(prefix + "ffn_norm.gain", lw.ffn_norm_gain);
        add_mat(prefix + "ffn.w1", lw.w1);
        add_mat(prefix + "ffn.w2", lw.w2);
    }
    add_vec("final_norm.gain", m.final_norm_gain);
    for (const auto& [target, adapter] : m.adapters) {
        add_mat(adapter_param_name(target, 'A'), adapter.A);
        add_mat(adapter_param_name(target, 'B'), adapter.B);
    }
    return dir;
}

}  // namespace detail

template <typename S>
inline std::string checkpoint_to_bytes(const ModelState<S>& m) {
    const auto dir = detail::tensor_directory(m);

    auto adapters = nlohmann::ordered_json::array();
    for (const auto& [target, adapter] : m.adapters) {
        adapters.push_back({{"target", target},
                            {"rank", adapter.rank},
                            {"alpha", adapter.alpha},
                            {"dropout_p", adapter.dropout_p}});
    }
    auto tensors = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& entry : dir) {
        nlohmann::ordered_json t;
        t["name"] = entry.name;
        t["shape"] = entry.shape;
        t["offset"] = offset;
        tensors.push_back(std::move(t));
        offset += static_cast<std::uint64_t>(entry.count) * 4;
    }
    nlohmann::ordered_json header;
    header["config"] = config_to_json(m.config);
    header["adapters"] = std::move(adapters);
    header["tensors"] = std::move(tensors);
    const std::string header_json = header.dump();

    std::string out;
    out.reserve(12 + header_json.size() + offset);
    out.append(kCheckpointMagic, 4);
    detail::write_u64_le(out, header_json.size());
    out += header_json;
    for (const auto& entry : dir) {
        for (Eigen::Index i = 0; i < entry.count; ++i) {
            detail::write_f32_le(out, static_cast<float>(entry.data[i]));
        }
    }
    return out;
}

template <typename S>
inline void save_checkpoint(const ModelState<S>& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
    const std::string bytes = checkpoint_to_bytes(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) raise(ErrorCode::IoError, "short write to " + path.string());
}

template <typename S>
inline ModelState<S> checkpoint_from_bytes(const std::string& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        raise(ErrorCode::ParseError, "not a checkpoint file (bad magic)");
    }
    std::uint64_t header_len = 0;
    for (int i = 7; i >= 0; --i) {
        header_len = (header_len << 8) | static_cast<unsigned char>(bytes[4 + static_cast<std::size_t>(i)]);
    }
    if (12 + header_len > bytes.size()) raise(ErrorCode::ParseError, "truncated checkpoint header");
    nlohmann::json header = nlohmann::json::parse(bytes.substr(12, header_len), nullptr, false);
    if (header.is_discarded()) raise(ErrorCode::ParseError, "checkpoint header is not valid JSON");

    ModelState<S> m;
    m.config = config_from_json(header.at("config"));
    m.layers.resize(static_cast<std::size_t>(m.config.n_layers));

    struct AdapterSpec {
        std::int64_t rank;
        double alpha, dropout_p;
    };
    std::map<std::string, AdapterSpec> specs;
    for (const auto& a : header.value("adapters", nlohmann::json::array())) {
        specs[a.at("target").get<std::string>()] = {a.at("rank").get<std::int64_t>(),
                                                    a.at("alpha").get<double>(),
                                                    a.at("dropout_p").get<double>()};
    }

    const std::size_t payload_start = 12 + header_len;
    const auto load_into = [&](S* dest, Eigen::Index count, std::uint64_t offset, const std::string& name) {
        const std::size_t begin = payload_start + offset;
        if (begin + static_cast<std::size_t>(count) * 4 > bytes.size()) {
            raise(ErrorCode::ParseError, "tensor " + name + " overruns the payload");
        }
        const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + begin;
        for (Eigen::Index i = 0; i < count; ++i) dest[i] = static_cast<S>(detail::read_f32_le(p + i * 4));
    };

    for (const auto& tj : header.at("tensors")) {
        const std::string name = tj.at("name").get<std::string>();
        const auto shape = tj.at("shape").get<std::vector<Eigen::Index>>();
        const std::uint64_t offset = tj.at("offset").get<std::uint64_t>();
        const auto rows = shape.size() == 2 ? shape[0] : Eigen::Index{1};
        const auto cols = shape.size() == 2 ? shape[1] : shape.at(0);

        if (name.rfind("adapters.", 0) == 0) {
            // adapters.<target>.A or .B
            const std::size_t dot = name.rfind('.');
            const std::string target = name.substr(9, dot - 9);
            const char which = name.back();
            const auto sit = specs.find(target);
            if (sit == specs.end()) raise(ErrorCode::ParseError, "adapter tensor without spec: " + name);
            LoraAdapter<S>& adapter = m.adapters[target];
            adapter.rank = sit->second.rank;
            adapter.alpha = sit->second.alpha;
            adapter.dropout_p = sit->second.dropout_p;
            Mat<S>& mat = which == 'A' ? adapter.A : adapter.B;
            mat.resize(rows, cols);
            load_into(mat.data(), mat.size(), offset, name);
            continue;
        }
        const auto fill_mat = [&](Mat<S>& mat) {
            mat.resize(rows, cols);
            load_into(mat.data(), mat.size(), offset, name);
        };
        const auto fill_vec = [&](Vec<S>& v) {
            v.resize(cols);
            load_into(v.data(), v.size(), offset, name);
        };
        if (name == "embeddings.input") {
            fill_mat(m.input_embeddings);
        } else if (name == "embeddings.output") {
            fill_mat(m.output_embeddings);
        } else if (name == "final_norm.gain") {
            fill_vec(m.final_norm_gain);
        } else if (name.rfind("layers.", 0) == 0) {
            const std::size_t second_dot = name.find('.', 7);
            const std::int64_t layer = std::stoll(name.substr(7, second_dot - 7));
            if (layer < 0 || layer >= m.config.n_layers) {
                raise(ErrorCode::ParseError, "tensor for out-of-range layer: " + name);
            }
            LayerWeights<S>& lw = m.layers[static_cast<std::size_t>(layer)];
            const std::string kind = name.substr(second_dot + 1);
            if (kind == "attn_norm.gain") fill_vec(lw.attn_norm_gain);
            else if (kind == "attn.wq") fill_mat(lw.wq);
            else if (kind == "attn.wk") fill_mat(lw.wk);
            else if (kind == "attn.wv") fill_mat(lw.wv);
            else if (kind == "attn.wo") fill_mat(lw.wo);
            else if (kind == "ffn_norm.gain") fill_vec(lw.ffn_norm_gain);
            else if (kind == "ffn.w1") fill_mat(lw.w1);
            else if (kind == "ffn.w2") fill_mat(lw.w2);
            else raise(ErrorCode::ParseError, "unknown tensor name: " + name);
        } else {
            raise(ErrorCode::ParseError, "unknown tensor name: " + name);
        }
    }

    // every tensor the directory promises must have arrived with the
    // dimensions the config implies
    const auto expect = [&](Eigen::Index got_rows, Eigen::Index got_cols, Eigen::Index rows, Eigen::Index cols,
                            const char* what) {
        if (got_rows != rows || got_cols != cols) {
            raise(ErrorCode::ParseError, std::string("checkpoint tensor ") + what + " has wrong shape");
        }
    };
    expect(m.input_embeddings.rows(), m.input_embeddings.cols(), m.config.vocab_size, m.config.d_model,
           "embeddings.input");
    if (!m.config.tie_embeddings) {
        expect(m.output_embeddings.rows(), m.output_embeddings.cols(), m.config.vocab_size, m.config.d_model,
               "embeddings.output");
    }
    for (const auto& lw : m.layers) {
        expect(lw.wq.rows(), lw.wq.cols(), m.config.d_model, m.config.d_model, "attn");
        expect(lw.w1.rows(), lw.w1.cols(), m.config.d_ff, m.config.d_model, "ffn.w1");
        expect(lw.w2.rows(), lw.w2.cols(), m.config.d_model, m.config.d_ff, "ffn.w2");
        if (lw.attn_norm_gain.size() != m.config.d_model || lw.ffn_norm_gain.size() != m.config.d_model) {
            raise(ErrorCode::ParseError, "checkpoint norm gain has wrong shape");
        }
    }
    if (m.final_norm_gain.size() != m.config.d_model) {
        raise(ErrorCode::ParseError, "checkpoint norm gain has wrong shape");
    }
    return m;
}

template <typename S>
inline ModelState<S> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::DatasetNotFound, "cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_bytes<S>(bytes);
}

}  // namespace lf
