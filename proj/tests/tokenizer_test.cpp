// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "linguaforge/tokenizer.hpp"

#include "oracles.hpp"
#include "testutil.hpp"

using lf::TokenizerModel;

namespace {

// Random lowercase corpora keep pair statistics dense enough for merges.
std::string random_letter_corpus(lf::Rng& rng, std::size_t max_bytes) {
    std::string out;
    const std::size_t n = 1 + rng.below(max_bytes);
    while (out.size() < n) {
        const std::size_t word_len = 1 + rng.below(6);
        for (std::size_t i = 0; i < word_len; ++i) {
            out += static_cast<char>('a' + rng.below(4));  // small alphabet -> frequent pairs
        }
        out += ' ';
    }
    return out;
}

}  // namespace

TEST(TrainBpeTest, SingleMergeMatchesPairFrequency) {
    const TokenizerModel tok = lf::train_bpe("abab abab", 1);
    ASSERT_EQ(tok.merges.size(), 1u);
    EXPECT_EQ(tok.merges[0].first, "a");
    EXPECT_EQ(tok.merges[0].second, "b");
    EXPECT_TRUE(tok.has_token("ab"));
    EXPECT_EQ(tok.size(), 256u + 4u + 1u);
}

TEST(TrainBpeTest, ZeroMergesYieldsByteVocab) {
    const TokenizerModel tok = lf::train_bpe("anything at all", 0);
    EXPECT_TRUE(tok.merges.empty());
    EXPECT_EQ(tok.size(), 260u);  // 256 bytes + 4 specials
    EXPECT_FALSE(tok.merge_shortfall);
}

TEST(TrainBpeTest, RecountsAfterEachMerge) {
    const auto expected = lforacle::naive_bpe_merges("aaabdaaabac", 2);
    const TokenizerModel tok = lf::train_bpe("aaabdaaabac", 2);
    ASSERT_EQ(tok.merges.size(), expected.size());
    EXPECT_EQ(tok.merges[0], expected[0]);
    EXPECT_EQ(tok.merges[1], expected[1]);
}

TEST(TrainBpeTest, EmptyCorpusRaises) {
    try {
        lf::train_bpe("", 5);
        FAIL() << "expected EmptyCorpus";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::EmptyCorpus);
    }
}

TEST(TrainBpeTest, ShortfallSetsWarningFlagNotError) {
    // "ab" admits exactly one merge; asking for five is not an error.
    const TokenizerModel tok = lf::train_bpe("ab", 5);
    EXPECT_EQ(tok.merges.size(), 1u);
    EXPECT_TRUE(tok.merge_shortfall);
}

TEST(TrainBpeTest, OracleEquivalenceOnRandomCorpora) {
    lf::Rng rng(101);
    for (int round = 0; round < 25; ++round) {
        const std::string corpus = random_letter_corpus(rng, 1024);
        const std::size_t merges = rng.below(51);
        const TokenizerModel tok = lf::train_bpe(corpus, merges);
        const auto expected = lforacle::naive_bpe_merges(corpus, merges);
        ASSERT_EQ(tok.merges, expected) << "corpus round " << round;
    }
}

TEST(TrainBpeTest, DeterministicSerialization) {
    const std::string corpus = lftest::persian_corpus(7, 40);
    const std::string a = lf::tokenizer_to_string(lf::train_bpe(corpus, 64));
    const std::string b = lf::tokenizer_to_string(lf::train_bpe(corpus, 64));
    EXPECT_EQ(a, b);
}

TEST(TrainBpeTest, ContiguousIdsAndMergeClosure) {
    const TokenizerModel tok = lf::train_bpe(lftest::english_corpus(3, 60), 80);
    std::set<std::string> seen;
    for (const auto& token : tok.vocab) EXPECT_TRUE(seen.insert(token).second) << "duplicate " << token;
    for (const auto& [left, right] : tok.merges) {
        EXPECT_TRUE(tok.has_token(left + right));
        EXPECT_EQ(tok.token_of(tok.id_of(left + right)), left + right);
    }
}

TEST(EncodeTest, AppliesMergesGreedily) {
    const TokenizerModel tok = lf::train_bpe("abab abab", 1);
    const auto ids = lf::encode(tok, "abab");
    ASSERT_EQ(ids.size(), 2u);
    EXPECT_EQ(tok.token_of(ids[0]), "ab");
    EXPECT_EQ(tok.token_of(ids[1]), "ab");
}

TEST(EncodeTest, EmptyInput) {
    const TokenizerModel tok = lf::train_bpe("abc", 0);
    EXPECT_TRUE(lf::encode(tok, "").empty());
    EXPECT_EQ(lf::decode(tok, {}), "");
}

TEST(EncodeTest, ByteFallbackForUnseenScript) {
    const TokenizerModel tok = lf::train_bpe("plain english only", 32);
    const std::string text = "日";  // 3 UTF-8 bytes, no merges learned for them
    const auto ids = lf::encode(tok, text);
    EXPECT_EQ(ids.size(), 3u);
    EXPECT_EQ(lf::decode(tok, ids), text);
}

TEST(DecodeTest, StripsSpecials) {
    const TokenizerModel tok = lf::train_bpe("xyz", 0);
    const auto ids = lf::encode(tok, "xyz");
    std::vector<lf::TokenId> wrapped;
    wrapped.push_back(tok.special_tokens.bos_id);
    wrapped.insert(wrapped.end(), ids.begin(), ids.end());
    wrapped.push_back(tok.special_tokens.eos_id);
    EXPECT_EQ(lf::decode(tok, wrapped), lf::decode(tok, ids));
}

TEST(DecodeTest, OutOfRangeIdRaises) {
    const TokenizerModel tok = lf::train_bpe("xyz", 0);
    try {
        lf::decode(tok, {static_cast<lf::TokenId>(tok.size())});
        FAIL() << "expected UnknownTokenId";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::UnknownTokenId);
    }
}

TEST(RoundTripTest, RandomUtf8Property) {
    const TokenizerModel tok = lf::train_bpe(lftest::persian_corpus(5, 50) + lftest::english_corpus(6, 50), 120);
    lf::Rng rng(404);
    for (int i = 0; i < 1000; ++i) {
        const std::string s = lftest::random_utf8(rng, 40);
        EXPECT_EQ(lf::decode(tok, lf::encode(tok, s)), s);
    }
}

TEST(RoundTripTest, MonotoneFertilityInMergeCount) {
    const std::string corpus = lftest::english_corpus(11, 80);
    const std::string probe = lftest::english_corpus(12, 20);
    std::size_t previous = SIZE_MAX;
    for (const std::size_t merges : {0u, 10u, 40u, 120u}) {
        const TokenizerModel tok = lf::train_bpe(corpus, merges);
        const std::size_t count = lf::encode(tok, probe).size();
        EXPECT_LE(count, previous) << "at " << merges << " merges";
        previous = count;
    }
}

namespace {

// Byte alphabet + specials + the given subword tokens and merge rules.
TokenizerModel make_tokenizer(const std::vector<std::string>& extra_tokens,
                              const std::vector<std::pair<std::string, std::string>>& merges) {
    TokenizerModel t = lf::train_bpe("x", 0);  // bytes + specials
    for (const auto& token : extra_tokens) t.vocab.push_back(token);
    t.merges = merges;
    t.invalidate_index();
    t.validate();
    return t;
}

}  // namespace

TEST(MergeVocabTest, SetUnionSemantics) {
    const TokenizerModel base = make_tokenizer({"xy"}, {{"x", "y"}});
    const TokenizerModel addon = make_tokenizer({"xy", "zw"}, {{"x", "y"}, {"z", "w"}});
    const auto [combined, report] = lf::merge_vocabularies(base, addon);
    // every base token keeps its id
    for (std::size_t id = 0; id < base.size(); ++id) {
        EXPECT_EQ(combined.vocab[id], base.vocab[id]);
    }
    // the addon-only token arrives at the next free id
    EXPECT_TRUE(combined.has_token("zw"));
    EXPECT_EQ(combined.id_of("zw"), static_cast<lf::TokenId>(base.size()));
    EXPECT_EQ(report.collisions, base.size());  // bytes, specials, and "xy" all collide
    EXPECT_EQ(report.combined_size, report.base_size + report.addon_size - report.collisions);
    EXPECT_EQ(report.new_ids_begin, static_cast<lf::TokenId>(base.size()));
    EXPECT_EQ(report.new_ids_end, static_cast<lf::TokenId>(combined.size()));
}

TEST(MergeVocabTest, AddonSubsetOfBaseCollapses) {
    const TokenizerModel base = make_tokenizer({"xy", "zw"}, {{"x", "y"}, {"z", "w"}});
    const TokenizerModel addon = make_tokenizer({"xy"}, {{"x", "y"}});
    const auto [combined, report] = lf::merge_vocabularies(base, addon);
    EXPECT_EQ(report.combined_size, report.base_size);
    EXPECT_EQ(report.collisions, report.addon_size);
    EXPECT_EQ(combined.size(), base.size());
}

TEST(MergeVocabTest, SkipsMergeRulesAlreadyProducible) {
    const TokenizerModel base = make_tokenizer({"xy"}, {{"x", "y"}});
    const TokenizerModel addon = make_tokenizer({"xy", "cd"}, {{"x", "y"}, {"c", "d"}});
    const auto [combined, report] = lf::merge_vocabularies(base, addon);
    // addon's ("x","y") rule duplicates a base output and is dropped
    std::size_t xy_rules = 0;
    for (const auto& rule : combined.merges) xy_rules += rule.first == "x" && rule.second == "y";
    EXPECT_EQ(xy_rules, 1u);
    EXPECT_TRUE(combined.has_token("cd"));
    ASSERT_EQ(combined.merges.size(), 2u);
    EXPECT_EQ(combined.merges[1], (std::pair<std::string, std::string>{"c", "d"}));
}

TEST(MergeVocabTest, AppendsPadWhenBaseLacksOne) {
    TokenizerModel base = lf::train_bpe("aa aa", 1);
    // simulate an external base without a pad token
    base.vocab.erase(base.vocab.begin() + base.special_tokens.pad_id);
    base.special_tokens.unk_id -= 1;  // pad sat right before unk
    base.special_tokens.pad_id = -1;
    base.invalidate_index();
    base.validate();

    TokenizerModel addon = lf::train_bpe("bb bb", 1);
    const auto [combined, report] = lf::merge_vocabularies(base, addon);
    EXPECT_GE(combined.special_tokens.pad_id, 0);
    EXPECT_EQ(report.base_size, base.size() + 1);  // report counts the padded base
    EXPECT_EQ(report.combined_size, report.base_size + report.addon_size - report.collisions);
}

TEST(MergeVocabTest, IncompatibleAlphabetRaises) {
    TokenizerModel base = lf::train_bpe("aa", 0);
    TokenizerModel mangled = lf::train_bpe("bb", 0);
    mangled.vocab[65] = "not-a-byte";
    mangled.invalidate_index();
    try {
        lf::merge_vocabularies(base, mangled);
        FAIL() << "expected IncompatibleAlphabets";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::IncompatibleAlphabets);
    }
}

TEST(MergeVocabTest, PrefixStabilityProperty) {
    lf::Rng rng(77);
    for (int round = 0; round < 10; ++round) {
        const TokenizerModel base = lf::train_bpe(random_letter_corpus(rng, 512), rng.below(30));
        const TokenizerModel addon = lf::train_bpe(random_letter_corpus(rng, 512), rng.below(30));
        const auto [combined, report] = lf::merge_vocabularies(base, addon);
        for (std::size_t id = 0; id < base.size(); ++id) {
            ASSERT_EQ(combined.vocab[id], base.vocab[id]);
        }
        ASSERT_EQ(report.combined_size, report.base_size + report.addon_size - report.collisions);
    }
}

TEST(FertilityTest, PerfectVocabGivesOneTokenPerWord) {
    TokenizerModel tok = lf::train_bpe("cat dog cat dog cat dog cat dog", 6);
    // after enough merges both words (with and without leading space) are single tokens
    const auto stats = lf::fertility(tok, "cat dog cat dog");
    EXPECT_DOUBLE_EQ(stats.tokens_per_word, 1.0);
    EXPECT_EQ(stats.corpus_word_count, 4u);
}

TEST(FertilityTest, ByteLevelAsciiGivesOneTokenPerChar) {
    const TokenizerModel tok = lf::train_bpe("irrelevant", 0);
    const auto stats = lf::fertility(tok, "abc def");
    EXPECT_DOUBLE_EQ(stats.tokens_per_char, 1.0);
    EXPECT_EQ(stats.corpus_token_count, 7u);
}

TEST(FertilityTest, MergedBeatsByteLevelOnAddonLanguage) {
    const TokenizerModel base = lf::train_bpe(lftest::english_corpus(31, 120), 0);
    const TokenizerModel addon = lf::train_bpe(lftest::persian_corpus_bytes(32, 20000), 600);
    const auto [merged, report] = lf::merge_vocabularies(base, addon);
    const std::string held_out = lftest::persian_corpus(99, 60);
    const auto before = lf::fertility(base, held_out);
    const auto after = lf::fertility(merged, held_out);
    EXPECT_LT(after.tokens_per_word, before.tokens_per_word);
}

TEST(FertilityTest, EmptyCorpusRaises) {
    const TokenizerModel tok = lf::train_bpe("abc", 0);
    EXPECT_THROW(lf::fertility(tok, ""), lf::Error);
    EXPECT_THROW(lf::fertility(tok, "   "), lf::Error);  // whitespace only: no words
}

TEST(SerializationTest, RoundTripsBytesAndSpecials) {
    const TokenizerModel tok =
        lf::train_bpe(lftest::persian_corpus(41, 30) + " \x01\x02\xFF mixed bytes", 40);
    const std::string text = lf::tokenizer_to_string(tok);
    const TokenizerModel back = lf::tokenizer_from_string(text);
    EXPECT_EQ(back.vocab, tok.vocab);
    EXPECT_EQ(back.merges, tok.merges);
    EXPECT_EQ(back.special_tokens.bos_id, tok.special_tokens.bos_id);
    EXPECT_EQ(back.special_tokens.pad_id, tok.special_tokens.pad_id);
    EXPECT_EQ(lf::tokenizer_to_string(back), text);
}

TEST(SerializationTest, EscapingCoversAllBytes) {
    for (int b = 0; b < 256; ++b) {
        const std::string raw(1, static_cast<char>(b));
        EXPECT_EQ(lf::unescape_token_bytes(lf::escape_token_bytes(raw)), raw);
    }
    EXPECT_EQ(lf::escape_token_bytes("\\"), "\\\\");
    EXPECT_EQ(lf::escape_token_bytes("\n"), "\\x0A");
    EXPECT_EQ(lf::unescape_token_bytes("a\\x20b"), "a b");
}

TEST(SerializationTest, MalformedJsonRaisesParseError) {
    try {
        lf::tokenizer_from_string("{not json");
        FAIL() << "expected ParseError";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::ParseError);
    }
}
