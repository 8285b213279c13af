// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "linguaforge/common.hpp"
#include "linguaforge/tokenizer.hpp"
#include "linguaforge/unicode.hpp"

#include "json.hpp"

namespace lf {

struct PackedDataset {
    std::vector<std::vector<TokenId>> blocks;  // n_blocks x context_len
    std::size_t source_token_count = 0;        // includes inserted EOS separators
    std::size_t dropped_tail = 0;

    std::size_t block_count() const { return blocks.size(); }
};

struct InstructionExample {
    std::optional<std::string> system;
    std::string prompt;
    std::string response;
    std::vector<std::string> tags;
};

// Reads a UTF-8 text file, strips a leading byte-order mark, and normalizes
// to NFC. Persian text arrives in mixed normalization in the wild; fixing
// one form keeps tokenizer behavior stable.
inline std::string load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::DatasetNotFound, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    std::string text = std::move(buffer).str();
    if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
        static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
        text.erase(0, 3);
    }
    if (!unicode::is_valid_utf8(text)) {
        raise(ErrorCode::EncodingError, path.string() + " is not valid UTF-8");
    }
    return unicode::nfc(text);
}

// Joins documents with eos_id and chunks the stream into fixed-length
// blocks, dropping the final partial block. Holds the conservation law
// n_blocks * context_len + dropped_tail == source_token_count.
inline PackedDataset pack_sequences(const std::vector<std::vector<TokenId>>& documents,
                                    std::size_t context_len, TokenId eos_id) {
    if (context_len < 2) raise(ErrorCode::InvalidInput, "context_len must be at least 2");
    PackedDataset packed;
    std::vector<TokenId> stream;
    for (std::size_t d = 0; d < documents.size(); ++d) {
        if (d > 0) stream.push_back(eos_id);
        stream.insert(stream.end(), documents[d].begin(), documents[d].end());
    }
    packed.source_token_count = stream.size();
    const std::size_t n_blocks = stream.size() / context_len;
    packed.blocks.reserve(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        packed.blocks.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(b * context_len),
                                   stream.begin() + static_cast<std::ptrdiff_t>((b + 1) * context_len));
    }
    packed.dropped_tail = stream.size() - n_blocks * context_len;
    return packed;
}

inline PackedDataset pack_sequences(const std::vector<TokenId>& ids, std::size_t context_len, TokenId eos_id) {
    return pack_sequences(std::vector<std::vector<TokenId>>{ids}, context_len, eos_id);
}

// Splits a plain-text corpus into documents on blank lines.
inline std::vector<std::string> split_documents(std::string_view corpus) {
    std::vector<std::string> docs;
    std::string current;
    std::size_t pos = 0;
    while (pos <= corpus.size()) {
        const std::size_t nl = corpus.find('\n', pos);
        const std::string_view line =
            corpus.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        const bool blank = line.find_first_not_of(" \t\r") == std::string_view::npos;
        if (blank) {
            if (!current.empty()) docs.push_back(std::move(current));
            current.clear();
        } else {
            if (!current.empty()) current += '\n';
            current += line;
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (!current.empty()) docs.push_back(std::move(current));
    return docs;
}

// Loads instruction examples from a JSON Lines file:
//   {"system"?: str, "prompt": str, "response": str, "tags"?: [str]}
// Order is preserved; errors carry 1-based line numbers.
inline std::vector<InstructionExample> load_instructions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::DatasetNotFound, "cannot open " + path.string());
    std::vector<InstructionExample> examples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();  // CRLF tolerance
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            raise(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": not a JSON object");
        }
        InstructionExample ex;
        if (j.contains("system") && !j["system"].is_null()) {
            if (!j["system"].is_string()) {
                raise(ErrorCode::ValidationError, "line " + std::to_string(line_no) + ": system must be a string");
            }
            ex.system = j["system"].get<std::string>();
        }
        if (!j.contains("prompt") || !j["prompt"].is_string()) {
            raise(ErrorCode::ValidationError, "line " + std::to_string(line_no) + ": missing prompt");
        }
        if (!j.contains("response") || !j["response"].is_string()) {
            raise(ErrorCode::ValidationError, "line " + std::to_string(line_no) + ": missing response");
        }
        ex.prompt = j["prompt"].get<std::string>();
        ex.response = j["response"].get<std::string>();
        if (ex.response.empty()) {
            raise(ErrorCode::ValidationError, "line " + std::to_string(line_no) + ": empty response");
        }
        if (j.contains("tags")) {
            if (!j["tags"].is_array()) {
                raise(ErrorCode::ValidationError, "line " + std::to_string(line_no) + ": tags must be an array");
            }
            for (const auto& tag : j["tags"]) ex.tags.push_back(tag.get<std::string>());
        }
        examples.push_back(std::move(ex));
    }
    return examples;
}

inline nlohmann::ordered_json instruction_to_json(const InstructionExample& ex) {
    nlohmann::ordered_json j;
    if (ex.system) j["system"] = *ex.system;
    j["prompt"] = ex.prompt;
    j["response"] = ex.response;
    if (!ex.tags.empty()) j["tags"] = ex.tags;
    return j;
}

// Renders a parallel sentence pair as a translation instruction. The
// template is this repository's own convention for turning parallel corpora
// into instruction data.
inline InstructionExample translation_instruction(std::string_view source, std::string_view target) {
    InstructionExample ex;
    ex.prompt = "Translate the following sentence:\n" + std::string(source);
    ex.response = std::string(target);
    ex.tags = {"translation"};
    return ex;
}

}  // namespace lf
