#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <random>
#include <regex>

#include "censorlab/regex.hpp"

using censorlab::ByteRegex;

namespace {
bool matches(const char* pattern, std::string_view text) {
    auto re = ByteRegex::compile(pattern);
    REQUIRE(re.ok());
    return re->search(text);
}
} // namespace

TEST_CASE("literals and classes") {
    CHECK(matches("abc", "xxabcxx"));
    CHECK(!matches("abc", "ab"));
    CHECK(matches("[a-c]+", "zzzb"));
    CHECK(!matches("[^a-z]", "abc"));
    CHECK(matches("[^a-z]", "ab9c"));
    CHECK(matches("a.c", "a\x00h abc"));
    CHECK(matches("[]x]", "]"));       // literal ']' first in a class
    CHECK(matches("[a-]", "-"));       // literal '-' at class end
}

TEST_CASE("escapes work on raw bytes") {
    CHECK(matches("\\x41\\x42", "xxABxx"));
    CHECK(matches("\\x00", std::string_view("a\0b", 3)));
    CHECK(!matches("\\x00", "ab"));
    CHECK(matches("a\\.b", "a.b"));
    CHECK(!matches("a\\.b", "axb"));
    CHECK(matches("\\d+", "abc123"));
    CHECK(matches("\\w+", "__a9"));
    std::string high = "\x80\xff\x90";
    CHECK(matches("[\\x80-\\xff]{3}", high));
}

TEST_CASE("anchors and alternation") {
    CHECK(matches("^abc", "abcdef"));
    CHECK(!matches("^abc", "xabc"));
    CHECK(matches("def$", "abcdef"));
    CHECK(!matches("def$", "defabc"));
    CHECK(matches("^(cat|dog)$", "dog"));
    CHECK(!matches("^(cat|dog)$", "dogs"));
    CHECK(matches("a|b|c", "zzc"));
}

TEST_CASE("quantifiers") {
    CHECK(matches("ab*c", "ac"));
    CHECK(matches("ab*c", "abbbbc"));
    CHECK(matches("ab+c", "abc"));
    CHECK(!matches("ab+c", "ac"));
    CHECK(matches("ab?c", "ac"));
    CHECK(matches("a{3}", "xaaax"));
    CHECK(!matches("^a{3}$", "aa"));
    CHECK(matches("a{2,}", "aaa"));
    CHECK(matches("^a{2,4}$", "aaaa"));
    CHECK(!matches("^a{2,4}$", "aaaaa"));
    CHECK(matches("(ab)+", "abab"));
}

TEST_CASE("compile errors") {
    CHECK(!ByteRegex::compile("a(b").ok());
    CHECK(!ByteRegex::compile("a[b").ok());
    CHECK(!ByteRegex::compile("*a").ok());
    CHECK(!ByteRegex::compile("a{4,2}").ok());
    CHECK(!ByteRegex::compile("a\\q").ok());
    CHECK(!ByteRegex::compile("a{2000}").ok());
    CHECK(!ByteRegex::compile("\\x4").ok());
}

TEST_CASE("tls and fully-encrypted signatures") {
    auto tls = ByteRegex::compile("^[\\x16\\x17]\\x03[\\x00-\\x09]");
    REQUIRE(tls.ok());
    std::vector<uint8_t> hello = {0x16, 0x03, 0x01, 0x00, 0x50};
    CHECK(tls->search(hello));
    std::vector<uint8_t> appdata = {0x17, 0x03, 0x03, 0x00, 0x10};
    CHECK(tls->search(appdata));
    std::vector<uint8_t> not_tls = {0x16, 0x04, 0x01};
    CHECK(!tls->search(not_tls));
    std::vector<uint8_t> shifted = {0x00, 0x16, 0x03, 0x01};
    CHECK(!tls->search(shifted));  // anchored at the payload start

    auto exempt = ByteRegex::compile(
        "^([\\x20-\\x7E]{6}|.*[\\x20-\\x7E]{20}.*|HTTP|[\\x16\\x17]\\x03[\\x00-\\x09])");
    REQUIRE(exempt.ok());
    CHECK(exempt->search(std::string_view("GET / HTTP/1.1\r\n")));
    CHECK(exempt->search(std::string_view("HTTP")));
    std::string run20 = std::string("\x01\x02", 2) + std::string(20, 'a') + "\x03";
    CHECK(exempt->search(run20));
    std::string rnd = "\x8f\x01\x02\x03\xfe\x81\x91\xa2";
    CHECK(!exempt->search(rnd));
}

TEST_CASE("agrees with std::regex on ascii patterns") {
    // Randomized cross-check on a fixed set of feature-covering patterns.
    const char* patterns[] = {
        "a(b|c)*d", "^x+y?z$", "[abc]{2,3}x", "(foo|ba+r)baz", "a.b.c",
        "^(ab)+$",  "q[^ab]r",
    };
    std::mt19937 rng(21);
    for (const char* pat : patterns) {
        auto mine = ByteRegex::compile(pat);
        REQUIRE(mine.ok());
        std::regex theirs(pat, std::regex::ECMAScript);
        for (int i = 0; i < 400; ++i) {
            size_t len = rng() % 12;
            std::string text;
            for (size_t j = 0; j < len; ++j)
                text += "abcdefqrxyz"[rng() % 11];
            bool want = std::regex_search(text, theirs);
            bool got = mine->search(text);
            INFO("pattern=" << pat << " text=" << text);
            REQUIRE(got == want);
        }
    }
}

TEST_CASE("pathological backtracking patterns stay linear") {
    // A classic catastrophic-backtracking case: (a+)+b over "aaaa...c".
    auto re = ByteRegex::compile("(a+)+b");
    REQUIRE(re.ok());
    std::string text(4000, 'a');
    text += 'c';
    auto start = std::chrono::steady_clock::now();
    CHECK(!re->search(text));
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
    CHECK(elapsed.count() < 1.0);
}
