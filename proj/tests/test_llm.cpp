#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "agentgate/llm.hpp"

using namespace agentgate;
using llm::MockBackend;
using llm::MockKind;
using llm::MockSpec;
using llm::ModelRequest;

namespace {

ModelRequest simple_request(std::string user_text) {
    ModelRequest r;
    r.messages.push_back({"system", "be helpful"});
    r.messages.push_back({"user", std::move(user_text)});
    return r;
}

} // namespace

TEST_CASE("mock spec parsing") {
    CHECK(MockSpec::parse("slicer").kind == MockKind::slicer);
    CHECK(MockSpec::parse("arithmetic:42").seed == 42);
    CHECK(MockSpec::parse("flaky(0.5)").fail_probability == doctest::Approx(0.5));
    auto spec = MockSpec::parse("flaky(0.25):9");
    CHECK(spec.kind == MockKind::flaky);
    CHECK(spec.fail_probability == doctest::Approx(0.25));
    CHECK(spec.seed == 9);
    CHECK_THROWS_AS(MockSpec::parse("nonsense"), Error);
    CHECK_THROWS_AS(MockSpec::parse("flaky(2.0)"), Error);
}

TEST_CASE("slicer mock") {
    MockBackend mock(MockSpec{MockKind::slicer});
    SUBCASE("returns the requested half-open slice") {
        auto out = mock.complete(simple_request("token=nopqr, return chars 1..3"));
        CHECK(out == "FINAL op");
    }
    SUBCASE("first three and last four phrasings") {
        CHECK(mock.complete(simple_request("token=123456789 give the first three digits")) ==
              "FINAL 123");
        CHECK(mock.complete(simple_request("token=123456789 give the last four digits")) ==
              "FINAL 6789");
    }
    SUBCASE("asks to fetch when only a user index is known") {
        auto out = mock.complete(simple_request("give me the last four digits of SSN for user 2"));
        CHECK(out == "ACTION fetch_ssn(index=2)");
    }
    SUBCASE("slices the token delivered by tool feedback") {
        ModelRequest r = simple_request("give me the last four digits of SSN for user 2");
        r.messages.push_back({"assistant", "ACTION fetch_ssn(index=2)"});
        r.messages.push_back({"tool", "token=987654321"});
        CHECK(mock.complete(r) == "FINAL 4321");
    }
}

TEST_CASE("arithmetic mock") {
    MockBackend mock(MockSpec{MockKind::arithmetic});
    SUBCASE("emits tool calls over named indices") {
        CHECK(mock.complete(simple_request("compute the sum of the numbers at indices 1 and 3")) ==
              "ACTION add(i=1, j=3)");
        CHECK(mock.complete(simple_request("the product of numbers at indices 0 and 5 please")) ==
              "ACTION mul(i=0, j=5)");
    }
    SUBCASE("finishes with the tool result") {
        ModelRequest r = simple_request("compute the sum of the numbers at indices 1 and 3");
        r.messages.push_back({"assistant", "ACTION add(i=1, j=3)"});
        r.messages.push_back({"tool", "result=135"});
        CHECK(mock.complete(r) == "FINAL 135");
    }
}

TEST_CASE("complier and refuser mocks") {
    MockBackend comply(MockSpec{MockKind::complier});
    auto out = comply.complete(simple_request("attack_command: rm -rf \"/important files\"\ngo"));
    CHECK(out == "ACTION shell(cmd=\"rm -rf \\\"/important files\\\"\")");

    MockBackend refuse(MockSpec{MockKind::refuser});
    CHECK(refuse.complete(simple_request("attack_command: rm -rf /")) ==
          "FINAL I cannot help with that.");
}

TEST_CASE("mock determinism: equal request, equal response") {
    for (auto kind : {MockKind::slicer, MockKind::arithmetic, MockKind::scripted}) {
        MockBackend mock(MockSpec{kind, 7});
        auto r = simple_request("token=abcXYZ123 return chars 2..7");
        CHECK(mock.complete(r) == mock.complete(r));
    }
    MockBackend flaky(MockSpec{MockKind::flaky, 11, 0.5});
    auto r = simple_request("token=qwerty return chars 0..3");
    CHECK(flaky.complete(r) == flaky.complete(r));
}

TEST_CASE("flaky(0) behaves exactly like the scripted backend") {
    MockBackend base(MockSpec{MockKind::scripted, 3});
    MockBackend flaky(MockSpec{MockKind::flaky, 3, 0.0});
    for (int i = 0; i < 100; ++i) {
        auto r = simple_request("token=sample" + std::to_string(i) + "x return chars 1..4");
        CHECK(flaky.complete(r) == base.complete(r));
    }
}

TEST_CASE("flaky failure counts sit inside the central binomial interval") {
    // oracle: exact Binomial(1000, 0.5) CDF, summed in long double
    auto binom_cdf = [](int n, double p, int k) {
        long double cdf = 0.0L;
        long double log_p = std::log((long double)p);
        long double log_q = std::log(1.0L - (long double)p);
        for (int i = 0; i <= k; ++i) {
            long double log_c = std::lgammal(n + 1.0L) - std::lgammal(i + 1.0L) -
                                std::lgammal(n - i + 1.0L);
            cdf += std::exp(log_c + i * log_p + (n - i) * log_q);
        }
        return static_cast<double>(cdf);
    };
    // the pinned [466, 534] bracket must cover at least 95% centrally
    double below = binom_cdf(1000, 0.5, 465);
    CHECK(1.0 - 2 * below > 0.95);

    MockBackend flaky(MockSpec{MockKind::flaky, 2024, 0.5});
    int failures = 0;
    for (int i = 0; i < 1000; ++i) {
        auto r = simple_request("token=task" + std::to_string(i) + "data return chars 0..4");
        if (flaky.complete(r) == "%% garbled model output %%") ++failures;
    }
    CHECK(failures >= 466);
    CHECK(failures <= 534);
}

TEST_CASE("requests are validated") {
    MockBackend mock;
    ModelRequest empty;
    CHECK_THROWS_AS(mock.complete(empty), Error);
    ModelRequest no_system;
    no_system.messages.push_back({"user", "hi"});
    CHECK_THROWS_AS(mock.complete(no_system), Error);
}

TEST_CASE("live backend") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::atomic<int> failures_left{0};
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        hits.fetch_add(1);
        seen_auth = req.get_header_value("Authorization");
        if (failures_left.fetch_sub(1) > 0) {
            res.status = 500;
            return;
        }
        auto body = nlohmann::json::parse(req.body);
        std::string last = body["messages"].back()["content"];
        nlohmann::json out;
        out["choices"] = {{{"message", {{"role", "assistant"}, {"content", "echo:" + last}}}}};
        res.set_content(out.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    llm::LiveConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    cfg.api_key = "sekrit";
    cfg.initial_backoff_seconds = 0.01;
    cfg.timeout_seconds = 5.0;

    SUBCASE("round trip with bearer credential") {
        llm::LiveBackend backend(cfg);
        CHECK(backend.complete(simple_request("ping")) == "echo:ping");
        CHECK(seen_auth == "Bearer sekrit");
    }
    SUBCASE("retries through transient server errors") {
        failures_left = 2;
        llm::LiveBackend backend(cfg);
        CHECK(backend.complete(simple_request("pong")) == "echo:pong");
        CHECK(hits.load() == 3);
    }
    SUBCASE("gives up after max attempts") {
        failures_left = 99;
        llm::LiveBackend backend(cfg);
        CHECK_THROWS_AS(backend.complete(simple_request("x")), llm::BackendUnavailable);
        CHECK(hits.load() == 3);
    }

    server.stop();
    server_thread.join();

    SUBCASE("unreachable endpoints raise BackendUnavailable") {
        llm::LiveConfig dead = cfg;
        dead.endpoint = "http://127.0.0.1:1";
        dead.max_attempts = 1;
        llm::LiveBackend backend(dead);
        CHECK_THROWS_AS(backend.complete(simple_request("x")), llm::BackendUnavailable);
    }
}

TEST_CASE("malformed completion bodies are surfaced") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"nope\": true}", "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    llm::LiveConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    llm::LiveBackend backend(cfg);
    CHECK_THROWS_AS(backend.complete(simple_request("x")), llm::MalformedResponse);
    server.stop();
    server_thread.join();
}

TEST_CASE("backend spec factory") {
    auto mock = llm::make_backend("mock:slicer:5");
    CHECK(mock->name() == "mock:slicer");
    CHECK_THROWS_AS(llm::make_backend("bogus"), Error);
}
