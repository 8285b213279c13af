// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "linguaforge/data.hpp"

#include "testutil.hpp"

TEST(LoadCorpusTest, StripsByteOrderMark) {
    lftest::TempDir dir("corpus");
    const auto path = dir.write("bom.txt", "\xEF\xBB\xBFhello");
    EXPECT_EQ(lf::load_corpus(path), "hello");
}

TEST(LoadCorpusTest, EmptyFileLoadsAsEmpty) {
    lftest::TempDir dir("corpus");
    const auto path = dir.write("empty.txt", "");
    EXPECT_EQ(lf::load_corpus(path), "");
}

TEST(LoadCorpusTest, NormalizesToNfc) {
    lftest::TempDir dir("corpus");
    const auto path = dir.write("decomposed.txt", "cafe\xCC\x81");  // e + combining acute
    EXPECT_EQ(lf::load_corpus(path), "caf\xC3\xA9");
}

TEST(LoadCorpusTest, MixedScriptRoundTripsWhenNfcStable) {
    lftest::TempDir dir("corpus");
    const std::string text = "English and فارسی share this file.\nدومین خط هم فارسی است.";
    const auto path = dir.write("mixed.txt", text);
    EXPECT_EQ(lf::load_corpus(path), text);
}

TEST(LoadCorpusTest, InvalidUtf8Raises) {
    lftest::TempDir dir("corpus");
    const auto path = dir.write("bad.txt", "ok\xFF\xFE" "bad");
    try {
        lf::load_corpus(path);
        FAIL() << "expected EncodingError";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::EncodingError);
    }
}

TEST(LoadCorpusTest, MissingFileRaises) {
    try {
        lf::load_corpus("/nonexistent/file.txt");
        FAIL() << "expected DatasetNotFound";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::DatasetNotFound);
    }
}

TEST(PackSequencesTest, SingleSequenceArithmetic) {
    std::vector<lf::TokenId> ids(10);
    for (int i = 0; i < 10; ++i) ids[static_cast<std::size_t>(i)] = i;
    const auto packed = lf::pack_sequences(ids, 4, 999);
    EXPECT_EQ(packed.blocks.size(), 2u);
    EXPECT_EQ(packed.dropped_tail, 2u);
    EXPECT_EQ(packed.source_token_count, 10u);
    EXPECT_EQ(packed.blocks[1][3], 7);
}

TEST(PackSequencesTest, ShortInputDropsEverything) {
    const auto packed = lf::pack_sequences(std::vector<lf::TokenId>{1, 2, 3}, 8, 999);
    EXPECT_TRUE(packed.blocks.empty());
    EXPECT_EQ(packed.dropped_tail, 3u);
}

TEST(PackSequencesTest, SeparatorsAppearAsOrdinaryTokens) {
    const std::vector<std::vector<lf::TokenId>> docs = {{1, 2, 3}, {4, 5}, {6}};
    const lf::TokenId eos = 77;
    const auto packed = lf::pack_sequences(docs, 4, eos);
    // stream: 1 2 3 77 4 5 77 6 -> blocks [1 2 3 77] [4 5 77 6]
    ASSERT_EQ(packed.blocks.size(), 2u);
    EXPECT_EQ(packed.blocks[0][3], eos);
    EXPECT_EQ(packed.blocks[1][2], eos);
    EXPECT_EQ(packed.source_token_count, 8u);  // 6 tokens + 2 separators
    EXPECT_EQ(packed.dropped_tail, 0u);
}

TEST(PackSequencesTest, ConservationProperty) {
    lf::Rng rng(2024);
    for (int round = 0; round < 200; ++round) {
        std::vector<std::vector<lf::TokenId>> docs(rng.below(5) + 1);
        for (auto& doc : docs) doc.assign(rng.below(50), 7);
        const std::size_t context = 2 + rng.below(17);
        const auto packed = lf::pack_sequences(docs, context, 0);
        ASSERT_EQ(packed.blocks.size() * context + packed.dropped_tail, packed.source_token_count);
        for (const auto& block : packed.blocks) ASSERT_EQ(block.size(), context);
    }
}

TEST(PackSequencesTest, TinyContextRaises) {
    EXPECT_THROW(lf::pack_sequences(std::vector<lf::TokenId>{1, 2}, 1, 0), lf::Error);
}

TEST(SplitDocumentsTest, BlankLinesDelimit) {
    const auto docs = lf::split_documents("first doc\nstill first\n\nsecond doc\n\n\nthird");
    ASSERT_EQ(docs.size(), 3u);
    EXPECT_EQ(docs[0], "first doc\nstill first");
    EXPECT_EQ(docs[1], "second doc");
    EXPECT_EQ(docs[2], "third");
}

TEST(LoadInstructionsTest, WellFormedLinesPreserveOrder) {
    lftest::TempDir dir("jsonl");
    const auto path = dir.write("ok.jsonl",
                                R"({"prompt": "p1", "response": "r1"})" "\n"
                                R"({"system": "s", "prompt": "p2", "response": "r2", "tags": ["qa"]})" "\n"
                                R"({"prompt": "p3", "response": "r3"})" "\n");
    const auto examples = lf::load_instructions(path);
    ASSERT_EQ(examples.size(), 3u);
    EXPECT_EQ(examples[0].prompt, "p1");
    EXPECT_EQ(examples[1].system.value(), "s");
    EXPECT_EQ(examples[1].tags, std::vector<std::string>{"qa"});
    EXPECT_EQ(examples[2].response, "r3");
}

TEST(LoadInstructionsTest, MissingResponseReportsLineNumber) {
    lftest::TempDir dir("jsonl");
    const auto path = dir.write("bad.jsonl",
                                R"({"prompt": "p1", "response": "r1"})" "\n"
                                R"({"prompt": "p2"})" "\n");
    try {
        lf::load_instructions(path);
        FAIL() << "expected ValidationError";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::ValidationError);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(LoadInstructionsTest, MalformedJsonReportsLineNumber) {
    lftest::TempDir dir("jsonl");
    const auto path = dir.write("broken.jsonl", "{\"prompt\": \"p\", \"response\": \"r\"}\nnot json\n");
    try {
        lf::load_instructions(path);
        FAIL() << "expected ParseError";
    } catch (const lf::Error& e) {
        EXPECT_EQ(e.code(), lf::ErrorCode::ParseError);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(LoadInstructionsTest, CrlfMatchesLf) {
    lftest::TempDir dir("jsonl");
    const std::string lf_body = R"({"prompt": "p", "response": "r"})" "\n" R"({"prompt": "q", "response": "s"})" "\n";
    std::string crlf_body = lf_body;
    std::size_t pos = 0;
    while ((pos = crlf_body.find('\n', pos)) != std::string::npos) {
        crlf_body.replace(pos, 1, "\r\n");
        pos += 2;
    }
    const auto a = lf::load_instructions(dir.write("lf.jsonl", lf_body));
    const auto b = lf::load_instructions(dir.write("crlf.jsonl", crlf_body));
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].prompt, b[i].prompt);
        EXPECT_EQ(a[i].response, b[i].response);
    }
}

TEST(LoadInstructionsTest, AcceptedFileReserializesEquivalently) {
    lftest::TempDir dir("jsonl");
    const auto path = dir.write("round.jsonl",
                                R"({"system": "sys", "prompt": "p", "response": "r", "tags": ["t1", "t2"]})" "\n");
    const auto examples = lf::load_instructions(path);
    std::string reserialized;
    for (const auto& ex : examples) reserialized += lf::instruction_to_json(ex).dump() + "\n";
    const auto again = lf::load_instructions(dir.write("round2.jsonl", reserialized));
    ASSERT_EQ(again.size(), examples.size());
    EXPECT_EQ(again[0].system, examples[0].system);
    EXPECT_EQ(again[0].prompt, examples[0].prompt);
    EXPECT_EQ(again[0].response, examples[0].response);
    EXPECT_EQ(again[0].tags, examples[0].tags);
}
