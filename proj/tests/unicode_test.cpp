// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "linguaforge/unicode.hpp"

#include "testutil.hpp"

using lf::unicode::nfc;

TEST(Utf8Test, RoundTripMixedScripts) {
    lf::Rng rng(21);
    for (int i = 0; i < 500; ++i) {
        const std::string s = lftest::random_utf8(rng, 48);
        EXPECT_EQ(lf::unicode::encode(lf::unicode::decode(s)), s);
    }
}

TEST(Utf8Test, RejectsMalformedSequences) {
    EXPECT_THROW(lf::unicode::decode("\xC3"), lf::Error);          // truncated
    EXPECT_THROW(lf::unicode::decode("\x80"), lf::Error);          // stray continuation
    EXPECT_THROW(lf::unicode::decode("\xC0\xAF"), lf::Error);      // overlong
    EXPECT_THROW(lf::unicode::decode("\xED\xA0\x80"), lf::Error);  // surrogate
    EXPECT_FALSE(lf::unicode::is_valid_utf8("ok\xFFnot"));
    EXPECT_TRUE(lf::unicode::is_valid_utf8("سلام hello"));
}

TEST(Utf8Test, CountsScalarsNotBytes) {
    EXPECT_EQ(lf::unicode::count_scalars("abc"), 3u);
    EXPECT_EQ(lf::unicode::count_scalars("آب"), 2u);     // 4 bytes, 2 scalars
    EXPECT_EQ(lf::unicode::count_scalars(""), 0u);
}

// Fixtures below were computed with a reference Unicode implementation.
TEST(NfcTest, ComposesLatinAndArabic) {
    EXPECT_EQ(nfc("e\xCC\x81"), "\xC3\xA9");                          // e + acute
    EXPECT_EQ(nfc("\xD8\xA7\xD9\x93"), "\xD8\xA2");                   // alef + madda
    EXPECT_EQ(nfc("\xD8\xA7\xD9\x94"), "\xD8\xA3");                   // alef + hamza
    EXPECT_EQ(nfc("\xE2\x84\xAB"), "\xC3\x85");                       // Angstrom -> A-ring
}

TEST(NfcTest, HangulComposition) {
    EXPECT_EQ(nfc("\xE1\x84\x80\xE1\x85\xA1\xE1\x86\xA8"), "\xEA\xB0\x81");
}

TEST(NfcTest, CanonicalOrderingAndBlocking) {
    // dot-below (ccc 220) sorts before dot-above (ccc 230)
    EXPECT_EQ(nfc("q\xCC\x87\xCC\xA3"), "q\xCC\xA3\xCC\x87");
    // a + ogonek composes; the acute stays because a-with-ogonek-and-acute
    // has no precomposed form
    EXPECT_EQ(nfc("a\xCC\xA8\xCC\x81"), "\xC4\x85\xCC\x81");
}

TEST(NfcTest, CompositionExclusionStaysDecomposed) {
    EXPECT_EQ(nfc("\xE0\xA5\x98"), "\xE0\xA4\x95\xE0\xA4\xBC");
}

TEST(NfcTest, StableTextPassesThrough) {
    const std::string persian = "سلام دنیای فارسی";
    EXPECT_EQ(nfc(persian), persian);
    EXPECT_EQ(nfc("plain ascii text 123"), "plain ascii text 123");
}

TEST(NfcTest, Idempotent) {
    lf::Rng rng(33);
    for (int i = 0; i < 200; ++i) {
        const std::string s = lftest::random_utf8(rng, 32);
        const std::string once = nfc(s);
        EXPECT_EQ(nfc(once), once);
    }
}
