#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "trajrep/checkpoint.hpp"
#include "trajrep/config.hpp"
#include "testutil.hpp"

using namespace trajrep;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("config defaults, overrides and echo annotations") {
    ExperimentConfig c = ExperimentConfig::defaults();
    CHECK(c.get_double("train.tau") == doctest::Approx(0.05));
    CHECK(c.get_double("train.lambda") == doctest::Approx(0.6));
    CHECK(c.get_long("model.d") == 64);
    CHECK(c.get_int_list("model.gat_heads") == std::vector<int>{8, 16, 1});

    c.set("train.epochs", "7");
    CHECK(c.get_long("train.epochs") == 7);
    const std::string echo = c.echo();
    CHECK(echo.find("train.epochs = 7  # user") != std::string::npos);
    CHECK(echo.find("train.tau = 0.05  # paper") != std::string::npos);
    CHECK(echo.find("model.d = 64  # desk-scale") != std::string::npos);

    SUBCASE("unknown keys are rejected") {
        CHECK_THROWS_AS(c.set("train.nonsense", "1"), ConfigError);
        CHECK_THROWS_AS(c.get("nope"), ConfigError);
    }

    SUBCASE("bare ablation switch names are shorthand") {
        c.set("time_interval", "off");
        CHECK_FALSE(c.ablations().time_interval);
        CHECK(c.ablations().time_emb);
    }

    SUBCASE("typed views validate") {
        c.set("model.d", "63");  // not divisible by enc_heads and GAT width mismatch
        CHECK_THROWS_AS(c.model_config(), ValidationError);
    }
}

TEST_CASE("config file parsing") {
    const std::string dir = "/tmp/trajrep_config_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/good.conf");
        out << "# comment line\n"
            << "train.epochs = 3\n"
            << "\n"
            << "sim.n_q = 12  # trailing comment\n";
    }
    ExperimentConfig c = ExperimentConfig::defaults();
    c.load_file(dir + "/good.conf");
    CHECK(c.get_long("train.epochs") == 3);
    CHECK(c.get_long("sim.n_q") == 12);

    {
        std::ofstream out(dir + "/bad.conf");
        out << "not a key value line\n";
    }
    ExperimentConfig c2 = ExperimentConfig::defaults();
    CHECK_THROWS_AS(c2.load_file(dir + "/bad.conf"), ConfigError);
}

TEST_CASE("checkpoint round trip is byte-identical") {
    const std::string dir = "/tmp/trajrep_ckpt_test";
    std::filesystem::create_directories(dir);

    ModelConfig mc;
    mc.d = 16;
    mc.gat = GatConfig{{2, 1}, {4, 16}};
    mc.enc_layers = 1;
    mc.enc_heads = 2;
    TrajModel model(mc, 8, 24, TrajModel::Head::masked_recovery, 0, Rng(5).derive("init"));
    AdamW opt(model.store(), 0.01);

    Checkpoint ckpt = make_checkpoint(model.store(), &opt, "config echo here\n", 42, 3);
    save_checkpoint(ckpt, dir + "/a.bin");
    Checkpoint loaded = load_checkpoint(dir + "/a.bin");
    CHECK(loaded.config_echo == "config echo here\n");
    CHECK(loaded.rng_seed == 42);
    CHECK(loaded.epoch == 3);
    CHECK(loaded.params.size() == model.store().count());
    save_checkpoint(loaded, dir + "/b.bin");
    CHECK(read_file(dir + "/a.bin") == read_file(dir + "/b.bin"));

    SUBCASE("version mismatch rejected") {
        std::string bytes = read_file(dir + "/a.bin");
        bytes[8] = 99;  // bump the version field
        std::ofstream out(dir + "/bad.bin", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(dir + "/bad.bin"), ParseError);
    }

    SUBCASE("bad magic rejected") {
        std::ofstream out(dir + "/junk.bin", std::ios::binary);
        out << "JUNKJUNKJUNKJUNK";
        out.close();
        CHECK_THROWS_AS(load_checkpoint(dir + "/junk.bin"), ParseError);
    }
}

TEST_CASE("checkpoint transfer between models") {
    ModelConfig mc;
    mc.d = 16;
    mc.gat = GatConfig{{2, 1}, {4, 16}};
    mc.enc_layers = 1;
    mc.enc_heads = 2;

    TrajModel pretrained(mc, 8, 24, TrajModel::Head::masked_recovery, 0, Rng(5).derive("init"));
    Checkpoint ckpt = make_checkpoint(pretrained.store(), nullptr, "", 1, 1);

    SUBCASE("fine-tune model with a fresh task head loads strictly") {
        TrajModel ft(mc, 8, 24, TrajModel::Head::task, 2, Rng(6).derive("init"));
        const std::size_t applied = apply_checkpoint_params(ckpt, ft.store(), /*strict=*/true);
        CHECK(applied == pretrained.store().count() - 2);  // mask head has no target
        CHECK((ft.store().at("emb.cls") - pretrained.store().at("emb.cls")).norm() ==
              doctest::Approx(0.0));
    }

    SUBCASE("different |V| loads the encoder but not the vocab head") {
        TrajModel other(mc, 8, 60, TrajModel::Head::masked_recovery, 0, Rng(7).derive("init"));
        const std::size_t applied = apply_checkpoint_params(ckpt, other.store(), /*strict=*/true);
        CHECK(applied == pretrained.store().count() - 2);
    }

    SUBCASE("strict load fails when encoder shapes differ") {
        ModelConfig mc2 = mc;
        mc2.d = 8;
        mc2.gat = GatConfig{{2, 1}, {4, 8}};
        TrajModel other(mc2, 8, 24, TrajModel::Head::none, 0, Rng(8).derive("init"));
        CHECK_THROWS_AS(apply_checkpoint_params(ckpt, other.store(), true), ValidationError);
    }

    SUBCASE("float32 payload round trips parameters within 1e-7") {
        const std::string dir = "/tmp/trajrep_ckpt_test2";
        std::filesystem::create_directories(dir);
        save_checkpoint(ckpt, dir + "/c.bin");
        Checkpoint loaded = load_checkpoint(dir + "/c.bin");
        TrajModel other(mc, 8, 24, TrajModel::Head::masked_recovery, 0, Rng(9).derive("init"));
        apply_checkpoint_params(loaded, other.store(), true);
        double worst = 0.0;
        for (std::size_t p = 0; p < other.store().count(); ++p) {
            worst = std::max(worst, (other.store().value(p) - pretrained.store().value(p))
                                        .cwiseAbs()
                                        .maxCoeff());
        }
        CHECK(worst < 1e-6);
    }
}
