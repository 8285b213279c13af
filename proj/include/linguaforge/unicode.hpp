// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "linguaforge/common.hpp"
#include "linguaforge/unicode_data.hpp"

namespace lf::unicode {

inline constexpr char32_t kReplacement = 0xFFFD;

// Appends the UTF-8 encoding of cp to out.
inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Decodes one code point starting at text[i]; advances i past it.
// Returns false on malformed input (i advanced by one byte, cp = U+FFFD).
inline bool decode_one(std::string_view text, std::size_t& i, char32_t& cp) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
    const unsigned char b0 = byte(i);
    std::size_t len;
    char32_t value;
    if (b0 < 0x80) {
        cp = b0;
        ++i;
        return true;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        value = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        value = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        value = b0 & 0x07;
    } else {
        cp = kReplacement;
        ++i;
        return false;
    }
    if (i + len > text.size()) {
        cp = kReplacement;
        ++i;
        return false;
    }
    for (std::size_t k = 1; k < len; ++k) {
        const unsigned char b = byte(i + k);
        if ((b & 0xC0) != 0x80) {
            cp = kReplacement;
            ++i;
            return false;
        }
        value = (value << 6) | (b & 0x3F);
    }
    // Reject overlong forms, surrogates, and out-of-range values.
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (value < kMin[len] || value > 0x10FFFF || (value >= 0xD800 && value <= 0xDFFF)) {
        cp = kReplacement;
        ++i;
        return false;
    }
    cp = value;
    i += len;
    return true;
}

inline bool is_valid_utf8(std::string_view text) {
    std::size_t i = 0;
    char32_t cp;
    while (i < text.size()) {
        if (!decode_one(text, i, cp)) return false;
    }
    return true;
}

// Decodes a valid UTF-8 string to code points; throws EncodingError on
// malformed input.
inline std::vector<char32_t> decode(std::string_view text) {
    std::vector<char32_t> cps;
    cps.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp;
        if (!decode_one(text, i, cp)) {
            raise(ErrorCode::EncodingError, "invalid UTF-8 at byte offset " + std::to_string(i - 1));
        }
        cps.push_back(cp);
    }
    return cps;
}

inline std::string encode(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (const char32_t cp : cps) append_utf8(out, cp);
    return out;
}

inline std::size_t count_scalars(std::string_view text) { return decode(text).size(); }

inline std::uint8_t combining_class(char32_t cp) {
    const auto* begin = std::begin(unicode_data::kCombiningClasses);
    const auto* end = std::end(unicode_data::kCombiningClasses);
    const auto* it = std::lower_bound(begin, end, cp,
                                      [](const unicode_data::CombiningClass& e, char32_t v) { return e.cp < v; });
    return (it != end && it->cp == cp) ? it->ccc : 0;
}

namespace detail {

// Hangul syllable constants (algorithmic decomposition/composition).
inline constexpr char32_t kHangulSBase = 0xAC00;
inline constexpr char32_t kHangulLBase = 0x1100;
inline constexpr char32_t kHangulVBase = 0x1161;
inline constexpr char32_t kHangulTBase = 0x11A7;
inline constexpr char32_t kHangulLCount = 19;
inline constexpr char32_t kHangulVCount = 21;
inline constexpr char32_t kHangulTCount = 28;
inline constexpr char32_t kHangulNCount = kHangulVCount * kHangulTCount;
inline constexpr char32_t kHangulSCount = kHangulLCount * kHangulNCount;

inline void decompose_canonical(char32_t cp, std::vector<char32_t>& out) {
    if (cp >= kHangulSBase && cp < kHangulSBase + kHangulSCount) {
        const char32_t index = cp - kHangulSBase;
        out.push_back(kHangulLBase + index / kHangulNCount);
        out.push_back(kHangulVBase + (index % kHangulNCount) / kHangulTCount);
        if (index % kHangulTCount != 0) out.push_back(kHangulTBase + index % kHangulTCount);
        return;
    }
    const auto* begin = std::begin(unicode_data::kDecompositions);
    const auto* end = std::end(unicode_data::kDecompositions);
    const auto* it = std::lower_bound(begin, end, cp,
                                      [](const unicode_data::Decomposition& e, char32_t v) { return e.cp < v; });
    if (it != end && it->cp == cp) {
        decompose_canonical(it->first, out);
        if (it->second != 0) decompose_canonical(it->second, out);
        return;
    }
    out.push_back(cp);
}

inline char32_t compose_pair(char32_t a, char32_t b) {
    if (a >= kHangulLBase && a < kHangulLBase + kHangulLCount && b >= kHangulVBase &&
        b < kHangulVBase + kHangulVCount) {
        return kHangulSBase + ((a - kHangulLBase) * kHangulVCount + (b - kHangulVBase)) * kHangulTCount;
    }
    if (a >= kHangulSBase && a < kHangulSBase + kHangulSCount && (a - kHangulSBase) % kHangulTCount == 0 &&
        b > kHangulTBase && b < kHangulTBase + kHangulTCount) {
        return a + (b - kHangulTBase);
    }
    const auto* begin = std::begin(unicode_data::kCompositions);
    const auto* end = std::end(unicode_data::kCompositions);
    const auto* it = std::lower_bound(begin, end, std::pair<char32_t, char32_t>{a, b},
                                      [](const unicode_data::Composition& e, const std::pair<char32_t, char32_t>& v) {
                                          return e.first != v.first ? e.first < v.first : e.second < v.second;
                                      });
    if (it != end && it->first == a && it->second == b) return it->composed;
    return 0;
}

}  // namespace detail

// Canonical normalization to NFC: canonical decomposition, canonical
// ordering of combining marks, then canonical composition.
inline std::string nfc(std::string_view text) {
    // Decompose.
    std::vector<char32_t> cps;
    cps.reserve(text.size());
    {
        std::size_t i = 0;
        while (i < text.size()) {
            char32_t cp;
            if (!decode_one(text, i, cp)) {
                raise(ErrorCode::EncodingError, "invalid UTF-8 at byte offset " + std::to_string(i - 1));
            }
            detail::decompose_canonical(cp, cps);
        }
    }
    // Canonical ordering: stable-sort maximal runs of nonzero-ccc marks.
    for (std::size_t i = 0; i < cps.size();) {
        if (combining_class(cps[i]) == 0) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < cps.size() && combining_class(cps[j]) != 0) ++j;
        std::stable_sort(cps.begin() + static_cast<std::ptrdiff_t>(i), cps.begin() + static_cast<std::ptrdiff_t>(j),
                         [](char32_t a, char32_t b) { return combining_class(a) < combining_class(b); });
        i = j;
    }
    // Compose. A mark combines with the last starter unless a character of
    // equal or higher combining class sits in between (blocking); a starter
    // combines only when it immediately follows the previous starter.
    std::vector<char32_t> out;
    out.reserve(cps.size());
    std::ptrdiff_t last_starter = -1;
    int last_ccc = -1;  // -1: nothing kept since the last starter
    for (const char32_t cp : cps) {
        const int ccc = combining_class(cp);
        if (last_starter >= 0 && (last_ccc == -1 || last_ccc < ccc)) {
            const char32_t composed = detail::compose_pair(out[static_cast<std::size_t>(last_starter)], cp);
            if (composed != 0) {
                out[static_cast<std::size_t>(last_starter)] = composed;
                continue;
            }
        }
        if (ccc == 0) {
            last_starter = static_cast<std::ptrdiff_t>(out.size());
            last_ccc = -1;
        } else {
            last_ccc = ccc;
        }
        out.push_back(cp);
    }
    return encode(out);
}

}  // namespace lf::unicode
