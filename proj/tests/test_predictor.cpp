#include <doctest.h>

#include <sstream>
#include <string>

#include "iprop/encoding.hpp"
#include "iprop/error.hpp"
#include "iprop/metrics.hpp"
#include "iprop/predictor.hpp"
#include "support.hpp"

using namespace iprop;
using namespace iprop::testing;
using namespace std::chrono_literals;

namespace {

const std::string kPredictor = IPROP_PREDICTOR_PATH;

// 4x4 region mask: the four top-left pixels
std::string region_file() {
    std::vector<Rgb> px(16, Rgb{0, 0, 0});
    for (const std::size_t i : {0u, 1u, 4u, 5u}) px[i] = Rgb{255, 255, 255};
    const auto path = scratch_dir("predictor") / "region.png";
    write_png(RgbImage(4, 4, px), path);
    return path.string();
}

std::vector<std::string> shell(const std::string& script) { return {"/bin/sh", "-c", script}; }

const std::string kHandshake = R"({"protocol":"iprop-predict","version":1})";

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an iprop::Error");
    return ErrorKind::argument;
}

RgbImage filled(Rgb color) { return RgbImage(4, 4, std::vector<Rgb>(16, color)); }

PredictRequest request_for(const RgbImage& image, std::uint64_t id) {
    return PredictRequest{id, base64_encode(encode_png(image)), 3};
}

}  // namespace

TEST_CASE("wire format is exact") {
    CHECK(handshake_line() == kHandshake + "\n");
    CHECK(encode_request(PredictRequest{7, "QUJD", 12}) == R"({"id":7,"image":"QUJD","class_index":12})" "\n");
    const auto r = parse_response(R"({"id":7,"prob":0.25,"argmax_class":4})");
    CHECK(r.id == 7);
    CHECK(r.prob == 0.25);
    CHECK(r.argmax_class == 4);
    CHECK(parse_response(encode_response(r)).prob == 0.25);
    const auto req = parse_request(encode_request(PredictRequest{9, "QQ==", 1}));
    CHECK(req.id == 9);
    CHECK(req.image == "QQ==");
    CHECK(req.class_index == 1);

    CHECK_NOTHROW(check_handshake(kHandshake));
    CHECK(kind_of([] { check_handshake(R"({"protocol":"iprop-predict","version":2})"); }) == ErrorKind::protocol);
    CHECK(kind_of([] { check_handshake("hello"); }) == ErrorKind::protocol);
    CHECK(kind_of([] { parse_response(R"({"id":1,"prob":1.5,"argmax_class":0})"); }) == ErrorKind::protocol);
    CHECK(kind_of([] { parse_response(R"({"id":1,"argmax_class":0})"); }) == ErrorKind::protocol);
    try {
        parse_response("{not json");
        FAIL("expected a protocol error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("{not json") != std::string::npos);
    }
}

TEST_CASE("base64 and sha256") {
    CHECK(base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b'}) == "Zm9vYg==");
    CHECK(base64_decode("Zm9vYg==") == std::vector<std::uint8_t>{'f', 'o', 'o', 'b'});
    CHECK(base64_decode("") .empty());
    CHECK_THROWS_AS(base64_decode("Zm9v!g=="), Error);
    CHECK(sha256_hex(std::vector<std::uint8_t>{'a', 'b', 'c'}) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("split_command") {
    CHECK(split_command("a b  'c d'") == std::vector<std::string>{"a", "b", "c d"});
    CHECK_THROWS_AS(split_command("   "), Error);
    CHECK_THROWS_AS(split_command("echo $(whoami)"), Error);
}

TEST_CASE("bundled synthetic predictor answers region means") {
    auto session = PredictorSession::open({kPredictor, "--mode", "region-mean", "--region", region_file()});
    CHECK(session.alive());
    CHECK(session.predict(request_for(filled({0, 0, 0}), 1)).prob == 0.0);
    const auto full = session.predict(request_for(filled({255, 255, 255}), 2));
    CHECK(full.prob == 1.0);
    CHECK(full.id == 2);
    CHECK(full.argmax_class == 3);

    std::vector<Rgb> half(16, Rgb{0, 0, 0});
    half[0] = half[1] = Rgb{255, 255, 255};
    CHECK(session.predict(request_for(RgbImage(4, 4, half), 3)).prob == 0.5);
    CHECK(session.score(RgbImage(4, 4, half), 0) == 0.5);
    CHECK(session.score(RgbImage(4, 4, half), 0) == 0.5);
    CHECK(kind_of([&] { session.predict(request_for(filled({0, 0, 0}), 2)); }) == ErrorKind::argument);
    session.close();
    CHECK_FALSE(session.alive());
}

TEST_CASE("bundled predictor in constant mode") {
    auto session = PredictorSession::open({kPredictor, "--mode", "constant", "--value", "0.7"});
    for (std::uint64_t id = 1; id <= 3; ++id)
        CHECK(session.predict(request_for(filled({Rgb{std::uint8_t(id * 40), 0, 0}}), id)).prob == 0.7);
}

TEST_CASE("session errors") {
    CHECK(kind_of([] { PredictorSession::open({"/nonexistent/predictor"}); }) == ErrorKind::spawn);
    CHECK(kind_of([] { PredictorSession::open(shell("echo garbage")); }) == ErrorKind::protocol);
    CHECK(kind_of([] { PredictorSession::open(shell("exit 0")); }) == ErrorKind::session_dead);
    CHECK(kind_of([] {
              PredictorSession::open({kPredictor, "--mode", "region-mean", "--region", "/nonexistent.png"});
          }) == ErrorKind::session_dead);
    SessionOptions quick;
    quick.handshake_timeout = 200ms;
    CHECK(kind_of([&] { PredictorSession::open(shell("exec sleep 5"), quick); }) == ErrorKind::timeout);
}

TEST_CASE("a malformed response kills the session") {
    auto session = PredictorSession::open(shell("echo '" + kHandshake + "'; read line; echo 'oops {'; exec sleep 5"));
    try {
        session.predict(request_for(filled({1, 2, 3}), 1));
        FAIL("expected a protocol error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::protocol);
        CHECK(std::string(e.what()).find("oops {") != std::string::npos);
    }
    CHECK_FALSE(session.alive());
    CHECK(kind_of([&] { session.predict(request_for(filled({1, 2, 3}), 2)); }) == ErrorKind::session_dead);
}

TEST_CASE("id mismatch, child exit and request timeout") {
    auto wrong = PredictorSession::open(
        shell("echo '" + kHandshake + "'; read line; echo '{\"id\":99,\"prob\":0.5,\"argmax_class\":0}'; exec sleep 5"));
    CHECK(kind_of([&] { wrong.predict(request_for(filled({1, 2, 3}), 1)); }) == ErrorKind::protocol);

    auto exits = PredictorSession::open(shell("echo '" + kHandshake + "'; read line; exit 0"));
    CHECK(kind_of([&] { exits.predict(request_for(filled({1, 2, 3}), 1)); }) == ErrorKind::session_dead);

    SessionOptions quick;
    quick.request_timeout = 200ms;
    auto slow = PredictorSession::open(shell("echo '" + kHandshake + "'; exec sleep 5"), quick);
    CHECK(kind_of([&] { slow.predict(request_for(filled({1, 2, 3}), 1)); }) == ErrorKind::timeout);
    CHECK_FALSE(slow.alive());
}

TEST_CASE("serve_predictor in process") {
    const auto model = SyntheticModel::constant(0.25);
    std::istringstream in(encode_request(request_for(filled({5, 5, 5}), 1)) +
                          encode_request(request_for(filled({9, 9, 9}), 2)));
    std::ostringstream out, err;
    CHECK(serve_predictor(model, in, out, err) == 0);
    CHECK(out.str() == kHandshake + "\n" + R"({"id":1,"prob":0.25,"argmax_class":3})" "\n" +
                           R"({"id":2,"prob":0.25,"argmax_class":3})" "\n");

    std::istringstream bad("not json\n");
    std::ostringstream out2, err2;
    CHECK(serve_predictor(model, bad, out2, err2) == 2);
    CHECK_FALSE(err2.str().empty());
}

TEST_CASE("synthetic model is deterministic and uses the channel mean") {
    std::vector<std::uint8_t> region(16, 0);
    region[0] = 1;
    const auto model = SyntheticModel::region_mean({4, 4}, region);
    const auto image = filled({255, 0, 0});
    CHECK(std::abs(model.probability(image) - 1.0 / 3.0) < 1e-15);
    CHECK(model.probability(image) == model.probability(image));
    CHECK_THROWS_AS(SyntheticModel::region_mean({4, 4}, std::vector<std::uint8_t>(16, 0)), Error);
    CHECK_THROWS_AS(SyntheticModel::constant(1.5), Error);
}
