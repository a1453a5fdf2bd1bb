#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "toonfield/checkpoint.hpp"
#include "toonfield/config.hpp"
#include "toonfield/errors.hpp"
#include "toonfield/image_io.hpp"
#include "toonfield/trainer.hpp"

using namespace toonfield;
namespace fs = std::filesystem;

namespace {

Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.step = 17;
    c.stage = 2;
    c.rng_seed = 99;
    c.rng_counter = 5;
    c.config = Config::desk().to_json();
    c.metadata = {{"note", "x"}};
    c.arrays["a.weight"] = torch::randn({3, 4});
    c.arrays["a.bias"] = torch::randn({4}, torch::kFloat64);
    c.arrays["b.steps"] = torch::tensor({1, 2, 3}, torch::kInt64);
    c.sbm_raw = torch::full({11}, -4.0f);
    return c;
}

size_t payload_offset(const std::string& bytes, const std::string& section) {
    // {u32 name length, name, u64 payload length, payload, ...}
    const auto at = bytes.find(section);
    return at + section.size() + 8;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
    auto c = sample_checkpoint();
    auto bytes = serialize_checkpoint(c);
    auto back = deserialize_checkpoint(bytes);
    EXPECT_TRUE(back == c);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    EXPECT_EQ(back.step, 17);
    EXPECT_EQ(back.arrays.at("a.bias").scalar_type(), torch::kFloat64);
}

TEST(Checkpoint, EveryTruncationIsDetected) {
    auto bytes = serialize_checkpoint(sample_checkpoint());
    for (size_t cut = 0; cut < bytes.size(); cut += std::max<size_t>(1, bytes.size() / 97))
        EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, cut)), IntegrityError) << "cut at " << cut;
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), IntegrityError);
}

TEST(Checkpoint, CorruptionNamesSection) {
    auto bytes = serialize_checkpoint(sample_checkpoint());
    for (std::string section : {"header", "config", "arrays"}) {
        auto bad = bytes;
        bad[payload_offset(bad, section) + 3] ^= 0x5A;
        try {
            deserialize_checkpoint(bad);
            ADD_FAILURE() << "no error for " << section;
        } catch (const IntegrityError& e) {
            EXPECT_EQ(e.section(), section);
        }
    }
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bad_magic), IntegrityError);
    EXPECT_THROW(deserialize_checkpoint(bytes + "junk"), IntegrityError);
}

TEST(Checkpoint, UnknownVersionRejected) {
    auto bytes = serialize_checkpoint(sample_checkpoint());
    bytes[8] = 7;
    try {
        deserialize_checkpoint(bytes);
        FAIL();
    } catch (const UnsupportedVersionError& e) {
        EXPECT_EQ(e.version(), 7u);
        EXPECT_EQ(int(e.exit_code()), 3);
    }
}

TEST(Checkpoint, FileRoundTripAndModuleRestore) {
    auto dir = fs::temp_directory_path() / ("toonfield_io_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    auto cfg = Config::desk();
    auto ckpt = initial_checkpoint(cfg);
    save_checkpoint(ckpt, dir / "m.tfck");
    auto loaded = load_checkpoint(dir / "m.tfck");
    EXPECT_TRUE(loaded == ckpt);
    auto model = load_model(loaded);
    Checkpoint again;
    store_module(again, "generator", *model.generator);
    for (const auto& [name, t] : again.arrays) EXPECT_TRUE(torch::equal(t, ckpt.arrays.at(name))) << name;
    EXPECT_THROW(load_checkpoint(dir / "absent.tfck"), UsageError);

    // Shape mismatch is a configuration problem, a missing array is an integrity problem.
    auto other = cfg;
    other.model.hidden = 16;
    Generator g(other);
    EXPECT_THROW(restore_module(ckpt, "generator", *g), ConfigError);
    Checkpoint empty;
    EXPECT_THROW(restore_module(empty, "generator", *g), IntegrityError);
    fs::remove_all(dir);
}

TEST(Config, OverridesAndErrors) {
    Config c;
    c.set("model.hidden=64");
    c.set("train.deterministic", "false");
    c.set("encoder.tau=0.25");
    EXPECT_EQ(c.model.hidden, 64);
    EXPECT_FALSE(c.train.deterministic);
    EXPECT_DOUBLE_EQ(c.encoder.tau, 0.25);
    EXPECT_THROW(c.set("model.nope=1"), ConfigError);
    EXPECT_THROW(c.set("model.hidden=abc"), ConfigError);
    EXPECT_THROW(c.set("model.hidden"), ConfigError);
    c.set("train.objective=other");
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(Config::from_json({{"model.hidden", "big"}}), ConfigError);
}

TEST(Config, JsonRoundTripAndHash) {
    auto c = Config::desk();
    auto back = Config::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(back.hash(), c.hash());
    back.set("train.seed=5");
    EXPECT_NE(back.hash(), c.hash());
    EXPECT_EQ(c.model.n_sites(), 11);
    EXPECT_EQ(Config().model.feature_res(), 32);
    EXPECT_EQ(Config().model.upsample_factor(), 4);
}

TEST(Png, RoundTripIsLosslessOnQuantisedValues) {
    auto levels = torch::randint(0, 256, {3, 5, 7}).to(torch::kFloat32);
    auto img = levels / 127.5 - 1.0;
    auto back = decode_png(encode_png(img));
    EXPECT_EQ(back.sizes(), img.sizes());
    EXPECT_TRUE(torch::equal(to_rgb8(back), levels.to(torch::kUInt8)));
    EXPECT_EQ(encode_png(img), encode_png(img));
}

TEST(Png, RejectsGarbage) {
    EXPECT_THROW(decode_png("not a png"), IntegrityError);
    auto bytes = encode_png(torch::zeros({3, 4, 4}));
    EXPECT_THROW(decode_png(bytes.substr(0, bytes.size() / 2)), IntegrityError);
}

TEST(Png, Rgb8Rounding) {
    auto img = torch::tensor({-1.5f, -1.0f, 0.0f, 1.0f, 2.0f}).view({1, 1, 5}).expand({3, 1, 5});
    auto q = to_rgb8(img);
    EXPECT_EQ(q[0][0][0].item<uint8_t>(), 0);
    EXPECT_EQ(q[0][0][1].item<uint8_t>(), 0);
    EXPECT_EQ(q[0][0][2].item<uint8_t>(), 128);
    EXPECT_EQ(q[0][0][3].item<uint8_t>(), 255);
    EXPECT_EQ(q[0][0][4].item<uint8_t>(), 255);
}

TEST(Base64, RoundTripAndErrors) {
    for (const std::string& s : std::vector<std::string>{"", "a", "ab", "abc", "abcd", std::string("\0\xff\x10", 3)})
        EXPECT_EQ(base64_decode(base64_encode(s)), s);
    EXPECT_EQ(base64_encode("hello"), "aGVsbG8=");
    EXPECT_THROW(base64_decode("a$b="), ArgumentError);
}
