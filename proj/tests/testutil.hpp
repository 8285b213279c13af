// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers: deterministic bilingual corpus generators, random
// UTF-8 strings, and a scoped temp directory.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "linguaforge/common.hpp"
#include "linguaforge/unicode.hpp"

namespace lftest {

inline const std::vector<std::string>& english_words() {
    static const std::vector<std::string> words = {
        "the",     "house",   "water",  "book",    "school",  "friend",  "day",     "night",  "year",
        "month",   "work",    "city",   "country", "language", "mother", "father",  "child",  "road",
        "hand",    "eye",     "heart",  "tree",    "garden",  "mountain", "sea",    "river",  "rain",
        "snow",    "wind",    "sun",    "sky",     "star",    "train",   "milk",    "tea",    "coffee",
        "rice",    "fruit",   "apple",  "grape",   "wheat",   "world",   "life",    "love",   "hope",
        "dream",   "morning", "evening", "moment", "hour",    "minute",  "history", "science", "art",
        "music",   "poem",    "story",  "film",    "game",    "sport",   "reading", "writing", "speaking",
        "hearing", "seeing",  "going",  "coming",  "eating",  "laughing", "happy",  "sad",    "big",
        "small",   "beautiful", "good", "bad",     "fast",    "slow",    "new",     "old",    "warm",
        "cold",    "bright",  "dark",   "quiet",   "loud",    "green",   "red",     "blue",   "white"};
    return words;
}

inline const std::vector<std::string>& persian_words() {
    static const std::vector<std::string> words = {
        "آب",     "نان",    "خانه",   "کتاب",   "مدرسه",  "دوست",   "روز",    "شب",     "سال",
        "ماه",    "هفته",   "کار",    "شهر",    "کشور",   "زبان",   "فارسی",  "مادر",   "پدر",
        "برادر",  "خواهر",  "کودک",   "مرد",    "زن",     "راه",    "دست",    "چشم",    "دل",
        "سر",     "پا",     "گل",     "درخت",   "باغ",    "کوه",    "دریا",   "رود",    "باران",
        "برف",    "باد",    "آفتاب",  "آسمان",  "ستاره",  "قطار",   "شیر",    "چای",    "قهوه",
        "برنج",   "میوه",   "سیب",    "انار",   "انگور",  "گندم",   "جهان",   "زندگی",  "عشق",
        "امید",   "آرزو",   "خواب",   "صبح",    "ظهر",    "عصر",    "غروب",   "لحظه",   "ساعت",
        "دقیقه",  "تاریخ",  "علم",    "دانش",   "هنر",    "موسیقی", "شعر",    "داستان", "فیلم",
        "بازی",   "ورزش",   "خواندن", "نوشتن",  "گفتن",   "شنیدن",  "دیدن",   "رفتن",   "آمدن",
        "خوردن",  "خندیدن", "خوشحال", "غمگین",  "بزرگ",   "کوچک",   "زیبا",   "خوب",    "سبز"};
    return words;
}

// Deterministic sentences drawn from a word pool; a blank line every few
// sentences marks document boundaries for the packer.
inline std::string make_corpus(const std::vector<std::string>& pool, lf::Rng& rng, std::size_t sentences) {
    std::string out;
    for (std::size_t s = 0; s < sentences; ++s) {
        const std::size_t len = 4 + rng.below(7);
        for (std::size_t w = 0; w < len; ++w) {
            if (w) out += ' ';
            out += pool[rng.below(pool.size())];
        }
        out += ".\n";
        if (rng.below(6) == 0) out += '\n';
    }
    return out;
}

inline std::string english_corpus(std::uint64_t seed, std::size_t sentences) {
    lf::Rng rng(seed);
    return make_corpus(english_words(), rng, sentences);
}

inline std::string persian_corpus(std::uint64_t seed, std::size_t sentences) {
    lf::Rng rng(seed);
    return make_corpus(persian_words(), rng, sentences);
}

inline std::string persian_corpus_bytes(std::uint64_t seed, std::size_t min_bytes) {
    std::string out;
    lf::Rng rng(seed);
    while (out.size() < min_bytes) out += make_corpus(persian_words(), rng, 20);
    return out;
}

// Random valid UTF-8: mixes ASCII, Persian letters, Latin-1, CJK, and
// astral-plane code points.
inline std::string random_utf8(lf::Rng& rng, std::size_t max_scalars) {
    std::string out;
    const std::size_t n = rng.below(max_scalars + 1);
    for (std::size_t i = 0; i < n; ++i) {
        char32_t cp = 0;
        switch (rng.below(6)) {
            case 0: cp = static_cast<char32_t>(0x20 + rng.below(0x5F)); break;            // ASCII printable
            case 1: cp = static_cast<char32_t>(0x0600 + rng.below(0xFF)); break;          // Arabic block
            case 2: cp = static_cast<char32_t>(0x00A1 + rng.below(0x0100)); break;        // Latin supplement
            case 3: cp = static_cast<char32_t>(0x4E00 + rng.below(0x1000)); break;        // CJK
            case 4: cp = static_cast<char32_t>(0x1F300 + rng.below(0x100)); break;        // astral
            case 5: cp = static_cast<char32_t>(rng.below(2) ? ' ' : '\n'); break;         // whitespace
        }
        lf::unicode::append_utf8(out, cp);
    }
    return out;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("lf-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

    std::filesystem::path write(const std::string& name, const std::string& content) const {
        const auto file = path_ / name;
        std::ofstream out(file, std::ios::binary);
        out << content;
        return file;
    }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace lftest
