#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int usod(const std::string& args) {
    const std::string cmd = std::string(USOD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("usod_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST(cli, SynthThenEvalPerfect) {
    auto dir = scratch("eval");
    ASSERT_EQ(usod("synth --out " + (dir / "ds").string() + " --count 3 --size 32"), 0);
    ASSERT_TRUE(fs::exists(dir / "ds" / "manifest.tsv"));
    const auto masks = (dir / "ds" / "masks").string();
    ASSERT_EQ(usod("eval --pred " + masks + " --gt " + masks + " --out " + (dir / "r.json").string() + " --csv " +
                   (dir / "r.csv").string() + " --curves " + (dir / "c.csv").string()),
              0);
    nlohmann::json report;
    std::ifstream(dir / "r.json") >> report;
    EXPECT_EQ(report["count"].get<int>(), 3);
    EXPECT_NEAR(report["aggregate"]["mae"].get<double>(), 0.0, 1e-12);
    EXPECT_NEAR(report["aggregate"]["weighted_f"].get<double>(), 1.0, 1e-9);
    EXPECT_TRUE(fs::exists(dir / "c.csv"));
}

TEST(cli, EvalReportsUnpairedFiles) {
    auto dir = scratch("unpaired");
    ASSERT_EQ(usod("synth --out " + (dir / "ds").string() + " --count 2 --size 32"), 0);
    fs::create_directories(dir / "pred");
    fs::copy_file(dir / "ds" / "masks" / "synth_00000.png", dir / "pred" / "synth_00000.png");
    EXPECT_EQ(usod("eval --pred " + (dir / "pred").string() + " --gt " + (dir / "ds" / "masks").string() + " --out " +
                   (dir / "r.json").string()),
              1);
}

TEST(cli, UsageAndConfigErrorsExitTwo) {
    auto dir = scratch("errors");
    EXPECT_EQ(usod("train --config " + (dir / "missing.cfg").string()), 2);
    std::ofstream(dir / "bad.cfg") << "model.width = wide\n";
    EXPECT_EQ(usod("train --config " + (dir / "bad.cfg").string()), 2);
    EXPECT_EQ(usod("eval --pred x"), 2);
    EXPECT_EQ(usod("bench-adp --corpus " + dir.string() + " --out " + (dir / "o.csv").string()), 2);
}

TEST(cli, BenchAdpWritesCsv) {
    auto dir = scratch("bench");
    ASSERT_EQ(usod("bench-adp --synthetic 3 --size 32 --random-prob 0.5 --out " + (dir / "cost.csv").string()), 0);
    std::ifstream in(dir / "cost.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "map_id,mode,p_threshold,mac_count,leaf_count,max_depth");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 3 * 4);
}

TEST(cli, TrainInferRoundTrip) {
    auto dir = scratch("train");
    std::ofstream(dir / "tiny.cfg") << "backbone.channels = 8,8,8,8,8\nmodel.width = 8\ndata.resolution = 32\n"
                                       "data.synth_count = 2\ntrain.batch_size = 2\ntrain.iterations = 2\n"
                                       "train.eval_every = 0\npaths.output_dir = "
                                    << (dir / "run").string() << "\n";
    ASSERT_EQ(usod("train --config " + (dir / "tiny.cfg").string()), 0);
    ASSERT_TRUE(fs::exists(dir / "run" / "last.pt"));
    ASSERT_TRUE(fs::exists(dir / "run" / "train_log.jsonl"));
    ASSERT_EQ(usod("synth --out " + (dir / "ds").string() + " --count 2 --size 48"), 0);
    ASSERT_EQ(usod("infer --config " + (dir / "tiny.cfg").string() + " --checkpoint " + (dir / "run" / "last.pt").string() +
                   " --input " + (dir / "ds" / "images").string() + " --output " + (dir / "pred").string() +
                   " --dump-uncertainty"),
              0);
    EXPECT_TRUE(fs::exists(dir / "pred" / "synth_00000.png"));
    EXPECT_TRUE(fs::exists(dir / "pred" / "synth_00000_u1.png"));
    EXPECT_EQ(usod("infer --config " + (dir / "tiny.cfg").string() + " --checkpoint " + (dir / "run" / "last.pt").string() +
                   " --input " + (dir / "ds" / "images").string() + " --output " + (dir / "pred").string() +
                   " --set train.seed=3"),
              2);
}
