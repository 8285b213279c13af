// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "linguaforge/common.hpp"
#include "linguaforge/unicode.hpp"

#include "json.hpp"

namespace lf {

using TokenId = std::int32_t;

struct SpecialTokens {
    TokenId bos_id = -1;
    TokenId eos_id = -1;
    TokenId pad_id = -1;
    TokenId unk_id = -1;

    bool contains(TokenId id) const {
        return id >= 0 && (id == bos_id || id == eos_id || id == pad_id || id == unk_id);
    }
};

inline constexpr std::string_view kBosToken = "<|bos|>";
inline constexpr std::string_view kEosToken = "<|eos|>";
inline constexpr std::string_view kPadToken = "<|pad|>";
inline constexpr std::string_view kUnkToken = "<|unk|>";

// Byte-level BPE tokenizer: ids 0..255 are the single bytes, so any UTF-8
// input round-trips without an unknown-token path. Token strings are raw
// byte sequences. Immutable after construction; safe to share across threads.
struct TokenizerModel {
    std::vector<std::string> vocab;                         // id -> token bytes
    std::vector<std::pair<std::string, std::string>> merges;  // learning order
    SpecialTokens special_tokens;
    // Set when training found fewer learnable merges than requested.
    // In-memory diagnostic only; not part of the serialized form.
    bool merge_shortfall = false;

    std::size_t size() const { return vocab.size(); }

    TokenId id_of(std::string_view token) const {
        ensure_index();
        const auto it = token_to_id_.find(std::string(token));
        return it == token_to_id_.end() ? -1 : it->second;
    }

    bool has_token(std::string_view token) const { return id_of(token) >= 0; }

    const std::string& token_of(TokenId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
            raise(ErrorCode::UnknownTokenId, "token id " + std::to_string(id) + " out of range");
        }
        return vocab[static_cast<std::size_t>(id)];
    }

    // Rank of a merge rule, or -1 if the pair is not a rule.
    std::int64_t merge_rank(const std::string& left, const std::string& right) const {
        ensure_index();
        const auto it = merge_rank_.find(pair_key(left, right));
        return it == merge_rank_.end() ? -1 : it->second;
    }

    void validate() const {
        ensure_index();
        if (token_to_id_.size() != vocab.size()) {
            raise(ErrorCode::ValidationError, "duplicate token strings in vocab");
        }
        for (const auto& [left, right] : merges) {
            if (!has_token(left + right)) {
                raise(ErrorCode::ValidationError, "merge output \"" + left + right + "\" missing from vocab");
            }
        }
        const TokenId specials[] = {special_tokens.bos_id, special_tokens.eos_id, special_tokens.pad_id,
                                    special_tokens.unk_id};
        for (const TokenId id : specials) {
            if (id < 0) continue;
            if (static_cast<std::size_t>(id) >= vocab.size()) {
                raise(ErrorCode::ValidationError, "special token id out of range");
            }
            int uses = 0;
            for (const TokenId other : specials) uses += (other == id);
            if (uses != 1) raise(ErrorCode::ValidationError, "special token ids must be distinct");
        }
    }

    void invalidate_index() const {
        token_to_id_.clear();
        merge_rank_.clear();
    }

private:
    // Token bytes may include NUL, so pair keys are length-prefixed.
    static std::string pair_key(const std::string& left, const std::string& right) {
        return std::to_string(left.size()) + ':' + left + right;
    }

    void ensure_index() const {
        if (!token_to_id_.empty() || vocab.empty()) return;
        token_to_id_.reserve(vocab.size());
        for (std::size_t id = 0; id < vocab.size(); ++id) {
            token_to_id_.emplace(vocab[id], static_cast<TokenId>(id));
        }
        merge_rank_.reserve(merges.size());
        for (std::size_t rank = 0; rank < merges.size(); ++rank) {
            // Keep the first (highest-priority) rank for duplicate rules.
            merge_rank_.emplace(pair_key(merges[rank].first, merges[rank].second),
                                static_cast<std::int64_t>(rank));
        }
    }

    mutable std::unordered_map<std::string, TokenId> token_to_id_;
    mutable std::unordered_map<std::string, std::int64_t> merge_rank_;
};

struct MergeReport {
    std::size_t base_size = 0;  // size of the base as merged (after pad append, if any)
    std::size_t addon_size = 0;
    std::size_t collisions = 0;
    std::size_t combined_size = 0;
    TokenId new_ids_begin = 0;  // new token ids occupy [new_ids_begin, new_ids_end)
    TokenId new_ids_end = 0;
};

struct FertilityStats {
    double tokens_per_word = 0.0;
    double tokens_per_char = 0.0;
    std::size_t corpus_token_count = 0;
    std::size_t corpus_word_count = 0;
};

namespace detail {

inline bool is_space_byte(unsigned char b) {
    return b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\v' || b == '\f';
}

// Splits text into pieces, keeping whitespace attached to the following
// word ("a b " -> ["a", " b", " "]). Merges never cross piece boundaries.
inline std::vector<std::string_view> pre_tokenize(std::string_view text) {
    std::vector<std::string_view> pieces;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t start = i;
        while (i < text.size() && is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
        while (i < text.size() && !is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
        pieces.push_back(text.substr(start, i - start));
    }
    return pieces;
}

inline std::size_t count_words(std::string_view text) {
    std::size_t words = 0;
    bool in_word = false;
    for (const char c : text) {
        const bool space = is_space_byte(static_cast<unsigned char>(c));
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return words;
}

// Greedy left-to-right replacement of adjacent (left, right) with their
// concatenation; the segmentation update used by both training and the
// brute-force oracle.
inline void apply_merge(std::vector<std::string>& symbols, const std::string& left, const std::string& right) {
    std::vector<std::string> out;
    out.reserve(symbols.size());
    std::size_t i = 0;
    while (i < symbols.size()) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
            out.push_back(left + right);
            i += 2;
        } else {
            out.push_back(std::move(symbols[i]));
            ++i;
        }
    }
    symbols = std::move(out);
}

inline std::vector<std::string> byte_symbols(std::string_view piece) {
    std::vector<std::string> symbols;
    symbols.reserve(piece.size());
    for (const char c : piece) symbols.emplace_back(1, c);
    return symbols;
}

}  // namespace detail

// Trains a byte-level BPE tokenizer. The vocabulary is the 256 byte tokens,
// the four special tokens, and one entry per distinct merge output. Pair
// counts are maintained incrementally over a unique-word table; ties break
// on the lexicographically smallest (left, right) byte strings so results
// are platform-independent.
inline TokenizerModel train_bpe(std::string_view corpus, std::size_t target_additional_merges) {
    if (corpus.empty()) raise(ErrorCode::EmptyCorpus, "cannot train on an empty corpus");

    TokenizerModel model;
    model.vocab.reserve(256 + 4 + target_additional_merges);
    for (int b = 0; b < 256; ++b) model.vocab.emplace_back(1, static_cast<char>(b));
    model.special_tokens.bos_id = static_cast<TokenId>(model.vocab.size());
    model.vocab.emplace_back(kBosToken);
    model.special_tokens.eos_id = static_cast<TokenId>(model.vocab.size());
    model.vocab.emplace_back(kEosToken);
    model.special_tokens.pad_id = static_cast<TokenId>(model.vocab.size());
    model.vocab.emplace_back(kPadToken);
    model.special_tokens.unk_id = static_cast<TokenId>(model.vocab.size());
    model.vocab.emplace_back(kUnkToken);

    // Unique words with frequencies; each carries its current segmentation.
    struct Word {
        std::vector<std::string> symbols;
        std::int64_t freq = 0;
    };
    std::map<std::string, std::size_t> word_index;
    std::vector<Word> words;
    for (const auto piece : detail::pre_tokenize(corpus)) {
        auto [it, inserted] = word_index.emplace(std::string(piece), words.size());
        if (inserted) words.push_back({detail::byte_symbols(piece), 0});
        ++words[it->second].freq;
    }

    using Pair = std::pair<std::string, std::string>;
    std::map<Pair, std::int64_t> pair_counts;
    const auto add_word_pairs = [&](const Word& w, std::int64_t sign) {
        for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
            const auto it = pair_counts.emplace(Pair{w.symbols[i], w.symbols[i + 1]}, 0).first;
            it->second += sign * w.freq;
            if (it->second == 0) pair_counts.erase(it);
        }
    };
    for (const Word& w : words) add_word_pairs(w, +1);

    for (std::size_t m = 0; m < target_additional_merges; ++m) {
        // std::map iterates pairs in lexicographic order, so strictly-greater
        // comparison keeps the smallest pair on ties.
        const Pair* best = nullptr;
        std::int64_t best_count = 0;
        for (const auto& [pair, count] : pair_counts) {
            if (count > best_count) {
                best_count = count;
                best = &pair;
            }
        }
        if (best == nullptr) {
            model.merge_shortfall = true;
            break;
        }
        const Pair merge = *best;
        model.merges.push_back(merge);
        const std::string output = merge.first + merge.second;
        if (!model.has_token(output)) {
            model.vocab.push_back(output);
            model.invalidate_index();
        }
        for (Word& w : words) {
            bool contains = false;
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                if (w.symbols[i] == merge.first && w.symbols[i + 1] == merge.second) {
                    contains = true;
                    break;
                }
            }
            if (!contains) continue;
            add_word_pairs(w, -1);
            detail::apply_merge(w.symbols, merge.first, merge.second);
            add_word_pairs(w, +1);
        }
    }

    model.validate();
    return model;
}

// Union of two tokenizers that share the byte-level alphabet. Base ids are
// preserved; addon tokens missing from the base are appended in addon order;
// addon merge rules whose output the base already has are dropped. If the
// base lacks a pad token one is appended first (the report's base_size
// includes it).
inline std::pair<TokenizerModel, MergeReport> merge_vocabularies(const TokenizerModel& base,
                                                                 const TokenizerModel& addon) {
    const auto check_alphabet = [](const TokenizerModel& t, const char* which) {
        if (t.size() < 256) raise(ErrorCode::IncompatibleAlphabets, std::string(which) + " lacks the byte alphabet");
        for (int b = 0; b < 256; ++b) {
            if (t.vocab[static_cast<std::size_t>(b)].size() != 1 ||
                static_cast<unsigned char>(t.vocab[static_cast<std::size_t>(b)][0]) != b) {
                raise(ErrorCode::IncompatibleAlphabets,
                      std::string(which) + " id " + std::to_string(b) + " is not the byte token");
            }
        }
    };
    check_alphabet(base, "base");
    check_alphabet(addon, "addon");

    TokenizerModel combined = base;
    combined.merge_shortfall = false;
    if (combined.special_tokens.pad_id < 0) {
        std::string pad(kPadToken);
        while (combined.has_token(pad)) pad += '_';
        combined.special_tokens.pad_id = static_cast<TokenId>(combined.vocab.size());
        combined.vocab.push_back(std::move(pad));
        combined.invalidate_index();
    }

    MergeReport report;
    report.base_size = combined.size();
    report.addon_size = addon.size();
    report.new_ids_begin = static_cast<TokenId>(combined.size());

    std::unordered_set<std::string> members(combined.vocab.begin(), combined.vocab.end());
    for (const std::string& token : addon.vocab) {
        if (members.count(token)) {
            ++report.collisions;
        } else {
            combined.vocab.push_back(token);
            members.insert(token);
        }
    }
    combined.invalidate_index();
    for (const auto& rule : addon.merges) {
        if (!base.has_token(rule.first + rule.second)) combined.merges.push_back(rule);
    }

    report.combined_size = combined.size();
    report.new_ids_end = static_cast<TokenId>(combined.size());
    combined.validate();
    return {std::move(combined), report};
}

namespace detail {

inline std::vector<TokenId> encode_piece(const TokenizerModel& t, std::string_view piece) {
    std::vector<std::string> symbols = byte_symbols(piece);
    // Repeatedly apply the highest-priority (lowest-rank) applicable rule at
    // its leftmost occurrence.
    while (symbols.size() > 1) {
        std::int64_t best_rank = std::numeric_limits<std::int64_t>::max();
        std::size_t best_pos = 0;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            const std::int64_t rank = t.merge_rank(symbols[i], symbols[i + 1]);
            if (rank >= 0 && rank < best_rank) {
                best_rank = rank;
                best_pos = i;
            }
        }
        if (best_rank == std::numeric_limits<std::int64_t>::max()) break;
        symbols[best_pos] += symbols[best_pos + 1];
        symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
    std::vector<TokenId> ids;
    ids.reserve(symbols.size());
    for (const std::string& s : symbols) ids.push_back(t.id_of(s));
    return ids;
}

}  // namespace detail

// Applies merges in learned priority order over the byte sequence. Byte
// fallback means any UTF-8 input is covered; special tokens are never
// produced from plain text.
inline std::vector<TokenId> encode(const TokenizerModel& t, std::string_view text) {
    std::vector<TokenId> ids;
    std::unordered_map<std::string_view, std::vector<TokenId>> cache;
    for (const auto piece : detail::pre_tokenize(text)) {
        const auto it = cache.find(piece);
        if (it != cache.end()) {
            ids.insert(ids.end(), it->second.begin(), it->second.end());
            continue;
        }
        auto piece_ids = detail::encode_piece(t, piece);
        ids.insert(ids.end(), piece_ids.begin(), piece_ids.end());
        cache.emplace(piece, std::move(piece_ids));
    }
    return ids;
}

// Inverse of encode: concatenates token byte strings, dropping specials.
inline std::string decode(const TokenizerModel& t, const std::vector<TokenId>& ids) {
    std::string out;
    for (const TokenId id : ids) {
        if (t.special_tokens.contains(id)) continue;
        out += t.token_of(id);
    }
    return out;
}

// Tokenization-efficiency statistics; the motivation for extending the
// vocabulary is that an uncovered language decomposes into byte tokens.
inline FertilityStats fertility(const TokenizerModel& t, std::string_view corpus) {
    if (corpus.empty()) raise(ErrorCode::EmptyCorpus, "fertility needs a non-empty corpus");
    FertilityStats stats;
    stats.corpus_token_count = encode(t, corpus).size();
    stats.corpus_word_count = detail::count_words(corpus);
    if (stats.corpus_word_count == 0) raise(ErrorCode::EmptyCorpus, "corpus contains no words");
    const std::size_t chars = unicode::count_scalars(corpus);
    stats.tokens_per_word = static_cast<double>(stats.corpus_token_count) /
                            static_cast<double>(stats.corpus_word_count);
    stats.tokens_per_char = static_cast<double>(stats.corpus_token_count) / static_cast<double>(chars);
    return stats;
}

// --- serialization ---------------------------------------------------------
//
// Token strings are raw byte sequences, so they are stored in an escaped
// ASCII form: printable ASCII bytes stand for themselves, backslash is
// doubled, and every other byte becomes \xHH (uppercase hex).

inline std::string escape_token_bytes(std::string_view token) {
    static const char* digits = "0123456789ABCDEF";
    std::string out;
    out.reserve(token.size());
    for (const unsigned char b : token) {
        if (b == '\\') {
            out += "\\\\";
        } else if (b >= 0x20 && b <= 0x7E) {
            out.push_back(static_cast<char>(b));
        } else {
            out += "\\x";
            out.push_back(digits[b >> 4]);
            out.push_back(digits[b & 0xF]);
        }
    }
    return out;
}

inline std::string unescape_token_bytes(std::string_view escaped) {
    const auto hex = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    std::string out;
    out.reserve(escaped.size());
    std::size_t i = 0;
    while (i < escaped.size()) {
        const char c = escaped[i];
        if (c != '\\') {
            out.push_back(c);
            ++i;
            continue;
        }
        if (i + 1 < escaped.size() && escaped[i + 1] == '\\') {
            out.push_back('\\');
            i += 2;
        } else if (i + 3 < escaped.size() && escaped[i + 1] == 'x' && hex(escaped[i + 2]) >= 0 &&
                   hex(escaped[i + 3]) >= 0) {
            out.push_back(static_cast<char>(hex(escaped[i + 2]) * 16 + hex(escaped[i + 3])));
            i += 4;
        } else {
            raise(ErrorCode::ParseError, "bad escape in token string: " + std::string(escaped));
        }
    }
    return out;
}

inline nlohmann::ordered_json tokenizer_to_json(const TokenizerModel& t) {
    auto vocab = nlohmann::ordered_json::array();
    for (const std::string& token : t.vocab) vocab.push_back(escape_token_bytes(token));
    auto merges = nlohmann::ordered_json::array();
    for (const auto& [left, right] : t.merges) {
        merges.push_back({escape_token_bytes(left), escape_token_bytes(right)});
    }
    auto specials = nlohmann::ordered_json::object();
    if (t.special_tokens.bos_id >= 0) specials["bos_id"] = t.special_tokens.bos_id;
    if (t.special_tokens.eos_id >= 0) specials["eos_id"] = t.special_tokens.eos_id;
    if (t.special_tokens.pad_id >= 0) specials["pad_id"] = t.special_tokens.pad_id;
    if (t.special_tokens.unk_id >= 0) specials["unk_id"] = t.special_tokens.unk_id;
    nlohmann::ordered_json j;
    j["vocab"] = std::move(vocab);
    j["merges"] = std::move(merges);
    j["special_tokens"] = std::move(specials);
    return j;
}

inline TokenizerModel tokenizer_from_json(const nlohmann::json& j) {
    TokenizerModel t;
    try {
        for (const auto& token : j.at("vocab")) {
            t.vocab.push_back(unescape_token_bytes(token.get<std::string>()));
        }
        for (const auto& rule : j.at("merges")) {
            t.merges.emplace_back(unescape_token_bytes(rule.at(0).get<std::string>()),
                                  unescape_token_bytes(rule.at(1).get<std::string>()));
        }
        const auto& specials = j.at("special_tokens");
        t.special_tokens.bos_id = specials.value("bos_id", -1);
        t.special_tokens.eos_id = specials.value("eos_id", -1);
        t.special_tokens.pad_id = specials.value("pad_id", -1);
        t.special_tokens.unk_id = specials.value("unk_id", -1);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ParseError, std::string("bad tokenizer JSON: ") + e.what());
    }
    t.validate();
    return t;
}

inline std::string tokenizer_to_string(const TokenizerModel& t) { return tokenizer_to_json(t).dump(); }

inline TokenizerModel tokenizer_from_string(std::string_view text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) raise(ErrorCode::ParseError, "tokenizer file is not valid JSON");
    return tokenizer_from_json(j);
}

}  // namespace lf
