#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "planmae/checkpoint.hpp"
#include "planmae/error.hpp"

using namespace planmae;

namespace {

Checkpoint sample(bool with_opt) {
    Checkpoint ck;
    ck.config = testing::tiny_config(21);
    ck.params = testing::random_params(ck.config, 21).cast<float>();
    ck.step = 17;
    if (with_opt) {
        TrainConfig t;
        t.steps = 40;
        t.seed = 5;
        ck.train = t;
        auto opt = OptState::for_params(ck.config);
        opt.m = testing::random_params(ck.config, 22).cast<float>();
        opt.v = testing::random_params(ck.config, 23).cast<float>();
        opt.step = 17;
        ck.opt = opt;
    }
    return ck;
}

void expect_corrupt(std::span<const std::uint8_t> bytes) {
    try {
        deserialize_checkpoint(bytes);
        FAIL("expected CorruptCheckpoint");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::CorruptCheckpoint);
    }
}

// Rewrites the manifest through `edit`, fixing up the length prefix.
std::vector<std::uint8_t> edit_manifest(const std::vector<std::uint8_t>& bytes,
                                        const std::function<void(nlohmann::json&)>& edit) {
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    auto j = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
    edit(j);
    const std::string text = j.dump();
    std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
    const std::uint64_t new_len = text.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(new_len >> (8 * i)));
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), bytes.begin() + 16 + static_cast<long>(len), bytes.end());
    return out;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("header layout") {
    const auto bytes = serialize_checkpoint(sample(false));
    REQUIRE(bytes.size() > 16);
    CHECK(std::memcmp(bytes.data(), "PMAE", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= std::uint64_t(bytes[8 + static_cast<std::size_t>(i)]) << (8 * i);
    const auto j = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
    CHECK(j.at("step") == 17);
    std::size_t payload = 0;
    for (const auto& t : j.at("tensors")) {
        CHECK(t.at("offset").get<std::size_t>() == payload);
        payload += t.at("nbytes").get<std::size_t>();
    }
    CHECK(bytes.size() == 16 + len + payload);
}

TEST_CASE("save then load is bitwise identical") {
    for (bool with_opt : {false, true}) {
        const auto ck = sample(with_opt);
        const auto path = std::filesystem::temp_directory_path() / "planmae_ckpt_roundtrip.pmae";
        save_checkpoint(ck, path);
        const auto back = load_checkpoint(path);
        std::filesystem::remove(path);
        CHECK(back.config == ck.config);
        CHECK(back.step == ck.step);
        const auto a = tensor_list(ck.params), b = tensor_list(back.params);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(std::memcmp(a[i]->data(), b[i]->data(), sizeof(float) * static_cast<std::size_t>(a[i]->size())) == 0);
        }
        CHECK(back.opt.has_value() == with_opt);
        CHECK(back.train.has_value() == with_opt);
        if (with_opt) {
            CHECK(*back.train == *ck.train);
            CHECK(back.opt->step == 17);
            CHECK(tensor_list(back.opt->v).back()->isApprox(*tensor_list(ck.opt->v).back(), 0.0f));
            CHECK(serialize_checkpoint(back) == serialize_checkpoint(ck));
        }
    }
}

TEST_CASE("truncated payload is corrupt") {
    auto bytes = serialize_checkpoint(sample(true));
    bytes.pop_back();
    expect_corrupt(bytes);
    bytes.resize(10);
    expect_corrupt(bytes);
    expect_corrupt({});
}

TEST_CASE("trailing bytes are corrupt") {
    auto bytes = serialize_checkpoint(sample(false));
    bytes.push_back(0);
    expect_corrupt(bytes);
}

TEST_CASE("bad magic or version is corrupt") {
    auto bytes = serialize_checkpoint(sample(false));
    bytes[0] = 'X';
    expect_corrupt(bytes);
    bytes = serialize_checkpoint(sample(false));
    bytes[4] = 2;
    expect_corrupt(bytes);
}

TEST_CASE("edited manifest shape is corrupt") {
    const auto bytes = serialize_checkpoint(sample(false));
    expect_corrupt(edit_manifest(bytes, [](nlohmann::json& j) { j["tensors"][0]["shape"] = {4, 8}; }));
    expect_corrupt(edit_manifest(bytes, [](nlohmann::json& j) { j["tensors"][1]["name"] = "bogus"; }));
    expect_corrupt(edit_manifest(bytes, [](nlohmann::json& j) { j["config"]["enc_dim"] = 12; }));
    expect_corrupt(edit_manifest(bytes, [](nlohmann::json& j) { j["tensors"].erase(0); }));
    // unchanged manifest still loads
    CHECK_NOTHROW(deserialize_checkpoint(edit_manifest(bytes, [](nlohmann::json&) {})));
}

TEST_CASE("missing file is an io error") {
    try {
        load_checkpoint("/nonexistent/planmae/none.pmae");
        FAIL("expected IoError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoError);
    }
}

}
