#include <doctest.h>

#include <cstdio>
#include <unistd.h>
#include <fstream>

#include "aide/redcnn.hpp"
#include "test_support.hpp"

using namespace aide;
using namespace aide::test;

namespace {

void zero_all(ExpertModel& m) {
    for (auto& [n, e] : m.params) e.weights.fill(0.0);
}

std::string temp_path(const char* stem) {
    return std::string("/tmp/aide_test_") + stem + "_" + std::to_string(::getpid()) + ".bin";
}

} // namespace

TEST_CASE("redcnn: default config maps 1x1x55x55 to 1x1x55x55") {
    ExpertModel m = build_redcnn(RedCnnConfig::defaults(), 1);
    Rng rng(9);
    Tensor4 x = random_tensor(1, 1, 55, 55, rng, 0.0, 1.0);
    Tensor4 y = redcnn_forward(m, x);
    CHECK(y.shape == x.shape);
    CHECK(y.all_finite());
}

TEST_CASE("redcnn: output shape equals input shape for H, W >= 51") {
    ExpertModel m = build_redcnn(RedCnnConfig::defaults(), 2);
    Rng rng(10);
    for (auto [h, w] : {std::pair{51, 51}, {51, 60}, {57, 53}}) {
        Tensor4 x = random_tensor(1, 1, h, w, rng, 0.0, 1.0);
        Tensor4 y = redcnn_forward(m, x);
        CHECK(y.shape == x.shape);
    }
}

TEST_CASE("redcnn: zero-weight network reduces to relu(input)") {
    for (auto cfg : {RedCnnConfig::defaults(), RedCnnConfig::desk()}) {
        ExpertModel m = build_redcnn(cfg, 3);
        zero_all(m);
        Rng rng(11);
        Tensor4 x = random_tensor(2, 1, 55, 55, rng); // includes negatives
        Tensor4 y = redcnn_forward(m, x);
        Tensor4 expect = relu_forward(x);
        CHECK(max_abs_diff(y, expect) == 0.0);
    }
}

TEST_CASE("redcnn: parameter count matches the closed form") {
    // channels=96, k=5: conv1 = 96*1*25 + 96 = 2496; conv2..5 and deconv1..4
    // are 96*96*25 + 96 each; deconv5 = 96*1*25 + 1.
    ExpertModel m = build_redcnn(RedCnnConfig::defaults(), 4);
    CHECK(m.params.at("conv1.k").weights.size() + m.params.at("conv1.b").weights.size() == 2496);
    const size_t mid = 96 * 96 * 25 + 96;
    const size_t expected = 2496 + 8 * mid + (96 * 25 + 1);
    CHECK(m.params.param_count() == expected);

    ExpertModel desk = build_redcnn(RedCnnConfig::desk(), 4);
    const size_t desk_mid = 32 * 32 * 25 + 32;
    CHECK(desk.params.param_count() == (32 * 25 + 32) + 4 * desk_mid + (32 * 25 + 1));
}

TEST_CASE("redcnn: build is deterministic under seed") {
    ExpertModel a = build_redcnn(RedCnnConfig::desk(), 77);
    ExpertModel b = build_redcnn(RedCnnConfig::desk(), 77);
    for (auto& [name, e] : a.params) CHECK(e.weights.data == b.params.at(name).weights.data);
    ExpertModel c = build_redcnn(RedCnnConfig::desk(), 78);
    CHECK(a.params.at("conv1.k").weights.data != c.params.at("conv1.k").weights.data);
}

TEST_CASE("redcnn: tape forward agrees with the plain forward") {
    ExpertModel m = build_redcnn(RedCnnConfig::desk(), 5);
    Rng rng(12);
    Tensor4 x = random_tensor(2, 1, 55, 55, rng, 0.0, 1.0);
    Tensor4 plain = redcnn_forward(m, x);
    Tape tape;
    auto pred = redcnn_forward_on_tape(m, tape, tape.input(x));
    CHECK(max_abs_diff(tape.value(pred), plain) == 0.0);
}

TEST_CASE("redcnn: bad configs are rejected") {
    RedCnnConfig c = RedCnnConfig::defaults();
    c.kernel = 4;
    CHECK_THROWS_AS(build_redcnn(c, 1), ConfigError);
    c = RedCnnConfig::defaults();
    c.shortcut_pairs.push_back({1, 1}); // sizes cannot match
    CHECK_THROWS_AS(build_redcnn(c, 1), ConfigError);
}

TEST_CASE("denoise: zero-weight model is the identity on [0,1] inputs") {
    ExpertModel m = build_redcnn(RedCnnConfig::desk(), 6);
    zero_all(m);
    Rng rng(13);
    Tensor4 x = random_tensor(3, 1, 55, 55, rng, 0.0, 1.0);
    Tensor4 y = denoise(m, x);
    CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("denoise: batch order is preserved") {
    ExpertModel m = build_redcnn(RedCnnConfig::desk(), 7);
    Rng rng(14);
    Tensor4 batch = random_tensor(81, 1, 55, 55, rng, 0.0, 1.0);
    Tensor4 out = denoise(m, batch);
    REQUIRE(out.n() == 81);
    // each sample's result equals its solo pass
    for (int n : {0, 40, 80}) {
        Tensor4 one(1, 1, 55, 55);
        std::copy(batch.plane(n, 0), batch.plane(n, 0) + 55 * 55, one.data.begin());
        Tensor4 solo = denoise(m, one);
        double diff = 0.0;
        for (int i = 0; i < 55 * 55; ++i)
            diff = std::max(diff, std::abs(solo.data[i] - out.plane(n, 0)[i]));
        CHECK(diff == 0.0);
    }
}

TEST_CASE("denoise: output stays in [0,1] and is deterministic") {
    ExpertModel m = build_redcnn(RedCnnConfig::desk(), 8);
    Rng rng(15);
    Tensor4 x = random_tensor(2, 1, 55, 55, rng, 0.0, 1.0);
    Tensor4 a = denoise(m, x);
    Tensor4 b = denoise(m, x);
    CHECK(a.data == b.data);
    for (double v : a.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("denoise: rejects unnormalized input and undersized patches") {
    ExpertModel m = build_redcnn(RedCnnConfig::desk(), 9);
    Tensor4 bad(1, 1, 55, 55);
    bad.fill(0.5);
    bad.data[7] = 1.2;
    CHECK_THROWS_AS(denoise(m, bad), ValidationError);
    Tensor4 tiny(1, 1, 8, 8);
    tiny.fill(0.5);
    CHECK_THROWS_AS(denoise(m, tiny), ValidationError);
}

TEST_CASE("model file: save/load round-trip reproduces outputs bit-exactly") {
    ExpertModel m = build_redcnn(RedCnnConfig::desk(), 10);
    m.cluster_id = 2;
    m.description = "This model is optimized for lungs, spleen, and chest structure.";
    m.train_fingerprint = "seed=10 manifest=deadbeef";
    const std::string path = temp_path("roundtrip");
    save_model(m, path);
    ExpertModel r = load_model(path);

    CHECK(r.cluster_id == 2);
    CHECK(r.description == m.description);
    CHECK(r.train_fingerprint == m.train_fingerprint);
    CHECK(r.config.channels == 32);
    for (auto& [name, e] : m.params) CHECK(e.weights.data == r.params.at(name).weights.data);

    Rng rng(16);
    Tensor4 x = random_tensor(1, 1, 55, 55, rng, 0.0, 1.0);
    CHECK(denoise(m, x).data == denoise(r, x).data);
    std::remove(path.c_str());
}

TEST_CASE("model file: corruption and header errors are distinguished") {
    ExpertModel m = build_redcnn(RedCnnConfig::desk(), 11);
    const std::string path = temp_path("corrupt");
    save_model(m, path);

    auto mutate = [&](size_t offset, uint8_t value) {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(offset));
        f.write(reinterpret_cast<const char*>(&value), 1);
    };
    auto load_kind = [&]() {
        try {
            load_model(path);
            return IoError::Kind::generic;
        } catch (const IoError& e) {
            return e.kind;
        }
    };

    // flip one byte inside the weight block
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    const size_t size = static_cast<size_t>(f.tellg());
    f.close();
    mutate(size - 100, 0xAB);
    CHECK(load_kind() == IoError::Kind::checksum);

    save_model(m, path);
    mutate(1, 'X'); // magic
    CHECK(load_kind() == IoError::Kind::magic);

    save_model(m, path);
    mutate(4, 0x77); // version
    CHECK(load_kind() == IoError::Kind::version);

    // truncate
    save_model(m, path);
    std::ofstream t(path, std::ios::binary | std::ios::trunc);
    t.write("AIDE", 4);
    t.close();
    CHECK(load_kind() == IoError::Kind::truncated);

    std::remove(path.c_str());
}

TEST_CASE("model file: desk preset loads through the config-agnostic reader") {
    ExpertModel m = build_redcnn(RedCnnConfig::desk(), 12);
    const std::string path = temp_path("desk");
    save_model(m, path);
    ExpertModel r = load_model(path);
    CHECK(r.config.channels == 32);
    CHECK(r.config.num_enc_layers == 3);
    CHECK(r.config.shortcut_pairs == RedCnnConfig::desk().shortcut_pairs);
    std::remove(path.c_str());
}
