#include <doctest.h>

#include <random>
#include <sstream>

#include "agentgate/shield.hpp"
#include "test_util.hpp"

using namespace agentgate;
using shield::Detector;
using shield::ShieldLedger;
using shield::ShieldMode;
using shield::ShieldPolicy;

namespace {

ShieldPolicy policy_with_mode(ShieldMode mode) {
    ShieldPolicy p;
    p.mode = mode;
    return p;
}

ShieldLedger ledger_with_key(fpets::FpetsKey key, std::uint64_t seed = 7) {
    return ShieldLedger(seed, key);
}

bool same_format(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (fpets::char_class(a[i]) != fpets::char_class(b[i])) return false;
        if (fpets::char_class(a[i]) == fpets::CharClass::other && a[i] != b[i]) return false;
    }
    return true;
}

} // namespace

TEST_CASE("detectors") {
    auto detectors = shield::default_detectors();

    SUBCASE("dashed and bare SSNs") {
        auto m = shield::find_matches(detectors, "a 123-45-6789 b 987654321 c");
        REQUIRE(m.size() == 2);
        CHECK(m[0].text == "123-45-6789");
        CHECK(m[1].text == "987654321");
    }
    SUBCASE("digit runs of other lengths are not SSNs") {
        CHECK(shield::find_matches(detectors, "call 12345678 or 1234567890").empty());
    }
    SUBCASE("luhn-valid card numbers only") {
        CHECK(shield::luhn_valid("4539578763621486"));
        CHECK_FALSE(shield::luhn_valid("4539578763621487"));
        auto m = shield::find_matches(detectors, "pay 4539578763621486 not 4539578763621487");
        REQUIRE(m.size() == 1);
        CHECK(m[0].text == "4539578763621486");
        CHECK(m[0].begin == 4);
    }
    SUBCASE("custom pattern rules") {
        std::vector<Detector> d{Detector::pattern("apikey", "sk-[a-z0-9]{8}")};
        auto m = shield::find_matches(d, "key sk-abc12345 end");
        REQUIRE(m.size() == 1);
        CHECK(m[0].text == "sk-abc12345");
    }
    SUBCASE("overlaps resolve to the earlier, longer match") {
        std::vector<Detector> d{Detector::pattern("a", "abcd"), Detector::pattern("b", "bcdef")};
        auto m = shield::find_matches(d, "xxabcdefxx");
        REQUIRE(m.size() == 1);
        CHECK(m[0].text == "abcd");
    }
}

TEST_CASE("rules file parsing") {
    std::istringstream good("# comment\nssn\tssn\t-\ncard\tluhn\t-\nkey\tpattern\tsk-[0-9]+\n");
    auto rules = shield::parse_rules(good);
    REQUIRE(rules.size() == 3);
    CHECK(rules[2].name == "key");

    std::istringstream missing_tab("ssn ssn -\n");
    CHECK_THROWS_WITH_AS(shield::parse_rules(missing_tab), doctest::Contains(":1:"), Error);

    std::istringstream bad_kind("x\tnope\t-\n");
    CHECK_THROWS_AS(shield::parse_rules(bad_kind), Error);
}

TEST_CASE("scrub whitewash keeps the format and randomizes the digits") {
    ShieldLedger ledger(99);
    std::string out = shield::scrub(policy_with_mode(ShieldMode::whitewash), ledger,
                                    "my ssn is 123-45-6789");
    REQUIRE(ledger.size() == 1);
    CHECK(out.substr(0, 10) == "my ssn is ");
    std::string token = out.substr(10);
    CHECK(same_format(token, "123-45-6789"));
    CHECK(token != "123-45-6789");
    CHECK(shield::restore(ledger, out) == "my ssn is 123-45-6789");
}

TEST_CASE("scrub with no matches changes nothing") {
    ShieldLedger ledger(1);
    std::string text = "nothing sensitive here, just words";
    CHECK(shield::scrub(policy_with_mode(ShieldMode::whitewash), ledger, text) == text);
    CHECK(ledger.size() == 0);
}

TEST_CASE("scrub fpets rotates the digit class") {
    auto ledger = ledger_with_key(fpets::FpetsKey{3, 13, 13});
    std::string out =
        shield::scrub(policy_with_mode(ShieldMode::fpets), ledger, "ssn 123456789");
    CHECK(out == "ssn 456789012");
}

TEST_CASE("block mode rejects the request naming the detector") {
    ShieldLedger ledger(2);
    try {
        shield::scrub(policy_with_mode(ShieldMode::block), ledger, "ssn 123456789 leaked");
        FAIL("expected BlockedContent");
    } catch (const shield::BlockedContent& e) {
        CHECK(e.detector == "ssn");
    }
}

TEST_CASE("restore") {
    auto ledger = ledger_with_key(fpets::FpetsKey{3, 13, 13});
    ShieldPolicy policy = policy_with_mode(ShieldMode::fpets);
    std::string scrubbed = shield::scrub(policy, ledger, "ssn 123456789");
    std::string token = scrubbed.substr(4); // "456789012"

    SUBCASE("full token echo round trips") {
        CHECK(shield::restore(ledger, "the ssn is " + token) == "the ssn is 123456789");
    }
    SUBCASE("a token slice restores to the plaintext slice") {
        std::string last4 = token.substr(5); // ciphertext of the last 4 digits
        CHECK(shield::restore(ledger, "ends with " + last4) == "ends with 6789");
    }
    SUBCASE("short fragments are left alone") {
        std::string frag = token.substr(0, 2);
        CHECK(shield::restore(ledger, "x " + frag) == "x " + frag);
    }
    SUBCASE("text without tokens passes through") {
        CHECK(shield::restore(ledger, "plain text 42") == "plain text 42");
    }
    SUBCASE("restore is deterministic") {
        std::string text = "a " + token + " b " + token.substr(5);
        CHECK(shield::restore(ledger, text) == shield::restore(ledger, text));
    }
}

TEST_CASE("she mode shields numeric matches") {
    ShieldLedger ledger(3);
    ShieldPolicy policy = policy_with_mode(ShieldMode::she);
    std::string out = shield::scrub(policy, ledger, "ssn 123-45-6789 on file");
    CHECK(out.find("she1:") != std::string::npos);
    CHECK(out.find("123-45-6789") == std::string::npos);
    CHECK(shield::restore(ledger, out) == "ssn 123-45-6789 on file");
}

TEST_CASE("unregistered homomorphic result tokens restore by key") {
    ShieldLedger ledger(4);
    auto ct = she::encrypt(ledger.she_key(), ledger.she_params(), mpz_class(4242));
    std::string token = she::serialize(ct, ledger.she_params());
    CHECK(shield::restore(ledger, "total: " + token) == "total: 4242");

    // registering it as a key reference changes nothing observable
    ledger.add_she_key_reference(token);
    CHECK(shield::restore(ledger, "total: " + token) == "total: 4242");
    // and key-reference entries never carry plaintext for the auditor
    CHECK_FALSE(ledger.find_token(token)->plaintext.has_value());
}

TEST_CASE("audit_leak") {
    ShieldLedger ledger(5);
    ShieldPolicy policy = policy_with_mode(ShieldMode::fpets);
    std::string scrubbed = shield::scrub(policy, ledger, "ssn 123456789 and card 4539578763621486");

    SUBCASE("a scrubbed request is clean") {
        CHECK(shield::audit_leak(ledger, scrubbed).empty());
    }
    SUBCASE("hand-built requests embedding the plaintext are flagged") {
        auto findings = shield::audit_leak(ledger, "please recall 123456789 for me");
        REQUIRE(findings.size() == 1);
        CHECK(findings[0].detector == "ssn");
        CHECK(findings[0].offset == 14);
        CHECK(findings[0].length == 9);
    }
    SUBCASE("fuzzed scrubbed prompts stay clean") {
        std::mt19937_64 rng(404);
        for (int t = 0; t < 200; ++t) {
            std::string text = testutil::random_text(rng, 40) + " 123456789 " +
                               testutil::random_text(rng, 20);
            std::string out = shield::scrub(policy, ledger, text);
            CHECK(shield::audit_leak(ledger, out).empty());
        }
    }
}

TEST_CASE("whitewash draws are reproducible under a seed") {
    ShieldLedger a(123), b(123);
    ShieldPolicy policy = policy_with_mode(ShieldMode::whitewash);
    CHECK(shield::scrub(policy, a, "id 123-45-6789") == shield::scrub(policy, b, "id 123-45-6789"));
}

TEST_CASE("scrubbing the same value twice reuses the token") {
    ShieldLedger ledger(6);
    ShieldPolicy policy = policy_with_mode(ShieldMode::whitewash);
    std::string once = shield::scrub(policy, ledger, "a 987-65-4321");
    std::string twice = shield::scrub(policy, ledger, "b 987-65-4321");
    CHECK(once.substr(2) == twice.substr(2));
    CHECK(ledger.size() == 1);
}

TEST_CASE("audit log lines carry token ids, never plaintext") {
    std::ostringstream log;
    ShieldLedger ledger(7);
    ledger.set_audit_sink(&log);
    ShieldPolicy policy = policy_with_mode(ShieldMode::fpets);
    std::string out = shield::scrub(policy, ledger, "ssn 123456789");
    shield::restore(ledger, out);
    std::string lines = log.str();
    CHECK(lines.find("scrub detector=ssn mode=fpets token=t0") != std::string::npos);
    CHECK(lines.find("restore token=t0") != std::string::npos);
    CHECK(lines.find("123456789") == std::string::npos);
}
