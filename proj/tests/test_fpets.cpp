#include <doctest.h>

#include <random>
#include <set>

#include "agentgate/fpets.hpp"
#include "test_util.hpp"

using namespace agentgate;
using fpets::FpetsKey;

namespace {

FpetsKey random_key(std::mt19937_64& rng) {
    FpetsKey key;
    key.rot_digit = static_cast<int>(rng() % 10);
    key.rot_upper = static_cast<int>(rng() % 26);
    key.rot_lower = static_cast<int>(rng() % 26);
    return key;
}

} // namespace

TEST_CASE("rotate-by-13 on lowercase") {
    FpetsKey key{13, 13, 13};
    CHECK(fpets::encrypt(key, "abc") == "nop");
    CHECK(fpets::decrypt(key, "nop") == "abc");
}

TEST_CASE("identity key leaves text unchanged") {
    FpetsKey key{0, 0, 0};
    CHECK(key.is_identity());
    CHECK(fpets::encrypt(key, "Any Text 123!") == "Any Text 123!");
    CHECK(fpets::decrypt(key, "Any Text 123!") == "Any Text 123!");
}

TEST_CASE("per-class rotations, hand-checked") {
    // A+13 -> N, 1+3 -> 4, b+13 -> o
    FpetsKey key{3, 13, 13};
    CHECK(fpets::encrypt(key, "A1b") == "N4o");
}

TEST_CASE("round trip over random strings") {
    std::mt19937_64 rng(101);
    for (int i = 0; i < 1000; ++i) {
        FpetsKey key = random_key(rng);
        std::string m = testutil::random_text(rng, 1 + rng() % 64);
        CHECK(fpets::decrypt(key, fpets::encrypt(key, m)) == m);
    }
}

TEST_CASE("format preservation: per-position class invariant") {
    std::mt19937_64 rng(102);
    for (int i = 0; i < 300; ++i) {
        FpetsKey key = random_key(rng);
        std::string m = testutil::random_text(rng, 1 + rng() % 48);
        std::string c = fpets::encrypt(key, m);
        REQUIRE(c.size() == m.size());
        for (std::size_t k = 0; k < m.size(); ++k) {
            CHECK(fpets::char_class(c[k]) == fpets::char_class(m[k]));
        }
    }
}

TEST_CASE("encrypt restricted to one class is a permutation") {
    std::mt19937_64 rng(103);
    for (int i = 0; i < 20; ++i) {
        FpetsKey key = random_key(rng);
        std::set<char> digits, uppers, lowers;
        for (char c = '0'; c <= '9'; ++c) digits.insert(fpets::encrypt(key, std::string(1, c))[0]);
        for (char c = 'A'; c <= 'Z'; ++c) uppers.insert(fpets::encrypt(key, std::string(1, c))[0]);
        for (char c = 'a'; c <= 'z'; ++c) lowers.insert(fpets::encrypt(key, std::string(1, c))[0]);
        CHECK(digits.size() == 10);
        CHECK(uppers.size() == 26);
        CHECK(lowers.size() == 26);
    }
}

TEST_CASE("slicing law") {
    FpetsKey key{3, 13, 13};
    SUBCASE("empty slice") { CHECK(fpets::slice_matches(key, "abcDEF123", 4, 4)); }
    SUBCASE("full string") { CHECK(fpets::slice_matches(key, "abcDEF123", 0, 9)); }
    SUBCASE("random triples") {
        std::mt19937_64 rng(104);
        for (int t = 0; t < 1000; ++t) {
            FpetsKey k = random_key(rng);
            std::string m = testutil::random_text(rng, 1 + rng() % 64);
            std::size_t i = rng() % (m.size() + 1);
            std::size_t j = i + rng() % (m.size() - i + 1);
            CHECK(fpets::slice_matches(k, m, i, j));
        }
    }
    SUBCASE("out of range") {
        CHECK_THROWS_AS((void)fpets::slice_matches(key, "abc", 2, 5), fpets::IndexOutOfRange);
        CHECK_THROWS_AS((void)fpets::slice_matches(key, "abc", 3, 2), fpets::IndexOutOfRange);
    }
}

TEST_CASE("key sensitivity: nonzero rotations move every in-class char") {
    std::mt19937_64 rng(105);
    for (int t = 0; t < 200; ++t) {
        FpetsKey key = fpets::FpetsKey::random_nonidentity();
        std::string m = testutil::random_alnum(rng, 4 + rng() % 12);
        CHECK(fpets::encrypt(key, m) != m);
    }
}

TEST_CASE("key derivation from a 128-bit secret") {
    SUBCASE("all-zero secret is the identity key") {
        auto key = FpetsKey::from_secret_hex("00000000000000000000000000000000");
        CHECK(key.is_identity());
    }
    SUBCASE("deterministic in the secret") {
        auto a = FpetsKey::from_secret_hex("0123456789abcdef0123456789abcdef");
        auto b = FpetsKey::from_secret_hex("0123456789abcdef0123456789abcdef");
        CHECK(a.rot_digit == b.rot_digit);
        CHECK(a.rot_upper == b.rot_upper);
        CHECK(a.rot_lower == b.rot_lower);
    }
    SUBCASE("rotations land in class ranges") {
        std::mt19937_64 rng(106);
        for (int t = 0; t < 100; ++t) {
            std::array<std::uint8_t, 16> secret{};
            for (auto& b : secret) b = static_cast<std::uint8_t>(rng());
            auto key = FpetsKey::from_secret(secret);
            CHECK(key.rot_digit >= 0);
            CHECK(key.rot_digit < 10);
            CHECK(key.rot_upper >= 0);
            CHECK(key.rot_upper < 26);
            CHECK(key.rot_lower >= 0);
            CHECK(key.rot_lower < 26);
        }
    }
    SUBCASE("bad hex rejected") {
        CHECK_THROWS_AS(FpetsKey::from_secret_hex("00"), Error);
        CHECK_THROWS_AS(FpetsKey::from_secret_hex("zz000000000000000000000000000000"), Error);
    }
}

TEST_CASE("tweaked mode slices with an explicit offset") {
    std::mt19937_64 rng(107);
    for (int t = 0; t < 200; ++t) {
        FpetsKey key = random_key(rng);
        std::string m = testutil::random_text(rng, 1 + rng() % 40);
        std::size_t i = rng() % (m.size() + 1);
        std::size_t j = i + rng() % (m.size() - i + 1);
        std::string whole = fpets::encrypt_tweaked(key, m, 0);
        CHECK(fpets::encrypt_tweaked(key, m.substr(i, j - i), i) == whole.substr(i, j - i));
        CHECK(fpets::decrypt_tweaked(key, whole, 0) == m);
    }
}
