#include <usod/config.hpp>
#include <usod/errors.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace usod;

TEST(config, TextRoundTrip) {
    ExperimentConfig cfg;
    cfg.set("model.width", "32");
    cfg.set("partition.p_threshold", "0.35");
    cfg.set("mia.scheme", "3\\3\\4\\-");
    cfg.set("ura.stage_factors", "1,1,1");
    auto back = ExperimentConfig::parse(cfg.to_text());
    EXPECT_EQ(back.to_text(), cfg.to_text());
    EXPECT_EQ(back.hash(), cfg.hash());
    EXPECT_EQ(back.model.width, 32);
    EXPECT_DOUBLE_EQ(back.model.partition.p_threshold, 0.35);
}

TEST(config, HashIgnoresPathsOnly) {
    ExperimentConfig a, b;
    b.paths.output_dir = "elsewhere";
    EXPECT_EQ(a.hash(), b.hash());
    b.set("train.seed", "9");
    EXPECT_NE(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 16u);
}

TEST(config, ParseCommentsAndErrors) {
    auto cfg = ExperimentConfig::parse("# comment\n\ntrain.iterations = 12  # trailing\n");
    EXPECT_EQ(cfg.train.iterations, 12);
    EXPECT_THROW(ExperimentConfig::parse("no equals sign\n"), ConfigError);
    EXPECT_THROW(ExperimentConfig::parse("unknown.key = 1\n"), ConfigError);
    EXPECT_THROW(ExperimentConfig::parse("train.iterations = many\n"), ConfigError);
    EXPECT_THROW(ExperimentConfig::parse("mia.scheme = 9\\9\\9\\9\n"), ConfigError);
}

TEST(config, Validation) {
    ExperimentConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.data.resolution = 48;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.model.refine.enabled = false;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.loss.require_refined = false;
    EXPECT_NO_THROW(cfg.validate());
    cfg = {};
    cfg.train.warmup = 1000;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.train.backbone_lr_mult = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(config, DefaultWarmupIsFivePercent) {
    TrainConfig t;
    t.iterations = 400;
    EXPECT_EQ(t.resolved_warmup(), 20);
}

TEST(config, ShippedConfigsLoad) {
    int loaded = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(USOD_SOURCE_DIR "/configs")) {
        if (entry.path().extension() != ".cfg") continue;
        EXPECT_NO_THROW(ExperimentConfig::load(entry.path().string()).validate()) << entry.path();
        ++loaded;
    }
    EXPECT_GT(loaded, 0);
}

TEST(config, SaveAndLoad) {
    auto path = std::filesystem::temp_directory_path() / "usod_config_roundtrip.cfg";
    ExperimentConfig cfg;
    cfg.set("loss.variant", "bce_iou");
    cfg.save(path.string());
    EXPECT_EQ(ExperimentConfig::load(path.string()).to_text(), cfg.to_text());
    EXPECT_THROW(ExperimentConfig::load("/nonexistent/dir/x.cfg"), ConfigError);
}
