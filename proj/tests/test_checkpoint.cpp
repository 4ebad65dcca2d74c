#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "paddyforge/checkpoint.hpp"

using namespace pf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("pf_ckpt_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Tensor random_batch(std::mt19937& rng, Shape2D size) {
    Tensor t({2, 3, static_cast<std::size_t>(size.height), static_cast<std::size_t>(size.width)},
             0.0f);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
    return t;
}

}  // namespace

TEST_CASE("checkpoint round-trip: bit-identical masters and forward passes") {
    fs::path dir = fresh_dir("roundtrip");
    std::mt19937 rng(5);

    for (Arch arch : {Arch::BaselineConvNet, Arch::MiniResNet}) {
        Network net = build_network(arch, {8, 8}, 3, 77);
        std::vector<std::string> classes{"bacterial", "blast", "healthy"};
        CheckpointMeta meta{12, "cfg-3f2a", 99};

        fs::path file = dir / (net.arch_name() + ".ckpt");
        save_checkpoint(net, classes, meta, file);
        LoadedCheckpoint loaded = load_checkpoint(file);

        CHECK(loaded.classes == classes);
        CHECK(loaded.meta.epochs == 12);
        CHECK(loaded.meta.config_hash == "cfg-3f2a");
        CHECK(loaded.meta.seed == 99);
        CHECK(loaded.net.arch_name() == net.arch_name());
        CHECK(loaded.net.num_classes() == 3);
        CHECK(loaded.net.input_size() == net.input_size());

        auto orig = const_cast<const Network&>(net).parameters();
        auto back = const_cast<const Network&>(loaded.net).parameters();
        REQUIRE(orig.size() == back.size());
        for (std::size_t i = 0; i < orig.size(); ++i) {
            CHECK(orig[i]->name == back[i]->name);
            REQUIRE(orig[i]->master.shape() == back[i]->master.shape());
            for (std::size_t j = 0; j < orig[i]->master.size(); ++j) {
                CHECK(orig[i]->master[j] == back[i]->master[j]);
            }
        }

        Tensor batch = random_batch(rng, {8, 8});
        ForwardContext c1, c2;
        Tensor out1 = net.forward(batch, c1);
        Tensor out2 = loaded.net.forward(batch, c2);
        REQUIRE(out1.size() == out2.size());
        for (std::size_t i = 0; i < out1.size(); ++i) CHECK(out1[i] == out2[i]);
    }
    fs::remove_all(dir);
}

TEST_CASE("checkpoint load resets frozen flags to all-trainable") {
    fs::path dir = fresh_dir("flags");
    Network net = build_network(Arch::MiniResNet, {8, 8}, 2, 3);
    set_trainable(net, TrainableSel::HeadOnly);

    fs::path file = dir / "frozen.ckpt";
    save_checkpoint(net, {"a", "b"}, {}, file);
    LoadedCheckpoint loaded = load_checkpoint(file);
    for (const Parameter* p : const_cast<const Network&>(loaded.net).parameters()) {
        CHECK(p->trainable);
    }
    fs::remove_all(dir);
}

TEST_CASE("checkpoint rejects corruption with format errors") {
    fs::path dir = fresh_dir("corrupt");
    Network net = build_network(Arch::MiniResNet, {8, 8}, 2, 9);
    fs::path file = dir / "good.ckpt";
    save_checkpoint(net, {"a", "b"}, {3, "h", 4}, file);
    const std::string good = slurp(file);

    // magic
    std::string bad = good;
    bad[0] = 'X';
    spit(dir / "magic.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), FormatError);

    // version
    bad = good;
    bad[8] = 2;
    spit(dir / "version.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(dir / "version.ckpt"), FormatError);

    // truncated payload
    spit(dir / "trunc.ckpt", good.substr(0, good.size() - 5));
    CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), FormatError);

    // trailing garbage
    spit(dir / "tail.ckpt", good + "JUNK");
    CHECK_THROWS_AS(load_checkpoint(dir / "tail.ckpt"), FormatError);

    // header/architecture shape disagreement: claim 17 output channels
    const std::string needle = "\"shape\":[16";
    const std::size_t at = good.find(needle);
    REQUIRE(at != std::string::npos);
    bad = good;
    bad[at + 9] = '1';
    bad[at + 10] = '7';
    spit(dir / "shape.ckpt", bad);
    try {
        load_checkpoint(dir / "shape.ckpt");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("shape") != std::string::npos);
    }

    // unparseable header: shrink the declared length so the JSON is cut off
    bad = good;
    bad[10] = 10;
    bad[11] = 0;
    bad[12] = 0;
    bad[13] = 0;
    spit(dir / "badjson.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(dir / "badjson.ckpt"), FormatError);

    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
    CHECK_THROWS_AS(save_checkpoint(net, {"only-one"}, {}, dir / "x.ckpt"), ConfigError);
    fs::remove_all(dir);
}
