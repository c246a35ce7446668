#include "oracles.hpp"

#include <usod/errors.hpp>
#include <usod/ura.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace usod;

TEST(ura, UncertaintyMatchesOracle) {
    torch::manual_seed(0);
    auto s = torch::rand({1, 1, 12, 10}, torch::kFloat64);
    auto got = oracle::from_tensor(uncertainty_generate(s).values[0][0]);
    auto want = oracle::uncertainty(oracle::from_tensor(s[0][0]));
    for (std::size_t i = 0; i < got.size(); ++i)
        for (std::size_t j = 0; j < got[i].size(); ++j) EXPECT_NEAR(got[i][j], want[i][j], 1e-12);
}

TEST(ura, UncertaintyBoundsAndFixedPoints) {
    auto s = torch::rand({8, 1, 16, 16}, torch::kFloat64);
    auto u = uncertainty_generate(s).values;
    EXPECT_GE(u.min().item<double>(), 0.0);
    EXPECT_LE(u.max().item<double>(), 0.5);
    for (double c : {0.0, 0.2, 0.5, 0.9, 1.0}) {
        auto uc = uncertainty_generate(torch::full({1, 1, 9, 9}, c, torch::kFloat64)).values;
        EXPECT_NEAR((uc - (0.5 - std::abs(c - 0.5))).abs().max().item<double>(), 0.0, 1e-15);
    }
}

TEST(ura, KernelIsNormalizedGaussian) {
    auto k = gaussian_kernel();
    EXPECT_EQ(k.size(0), 7);
    EXPECT_NEAR(k.sum().item<double>(), 1.0, 1e-15);
    auto ref = oracle::gaussian(7, 1.0);
    for (int i = 0; i < 49; ++i) EXPECT_NEAR(k.flatten()[i].item<double>(), ref[static_cast<std::size_t>(i)], 1e-15);
}

TEST(ura, RejectsOutOfRangeProbability) {
    EXPECT_THROW(uncertainty_generate(torch::full({1, 1, 4, 4}, 1.5)), InputError);
}

TEST(ura, MaskAxes) {
    UncertaintyMap u{torch::zeros({1, 1, 4, 4})};
    u.values[0][0][1][2] = 0.3;
    auto keys = build_mask(u, 10, {4, 4});
    EXPECT_EQ(keys.allowed().sizes(), (std::vector<int64_t>{1, 1, 16}));
    EXPECT_EQ(keys.allowed().sum().item<int64_t>(), 1);
    auto queries = build_mask(u, 16, {4, 4}, MaskAxis::Queries);
    EXPECT_EQ(queries.allowed().sizes(), (std::vector<int64_t>{1, 16, 1}));
}

TEST(ura, StageFactorParsing) {
    auto f = parse_stage_factors("2,2,full");
    EXPECT_EQ(f, kDefaultStageFactors);
    EXPECT_EQ(stage_factors_string(parse_stage_factors("1,1,1")), "1,1,1");
    EXPECT_THROW(parse_stage_factors("1,1"), ConfigError);
    EXPECT_THROW(parse_stage_factors("0.5,1,1"), ConfigError);
    EXPECT_THROW(parse_stage_factors("a,1,1"), ConfigError);
}

TEST(ura, ScheduleByMode) {
    auto train = RefinerImpl::schedule({16, 16}, {64, 64}, RunMode::Train, kDefaultStageFactors, 3);
    for (const auto& s : train) EXPECT_EQ(s, (std::pair<int64_t, int64_t>{16, 16}));
    auto infer = RefinerImpl::schedule({16, 16}, {64, 64}, RunMode::Infer, kDefaultStageFactors, 3);
    ASSERT_EQ(infer.size(), 4u);
    EXPECT_EQ(infer[1].first, 32);
    EXPECT_EQ(infer[2].first, 64);
    EXPECT_EQ(infer[3].first, 64);
    auto capped = RefinerImpl::schedule({16, 16}, {40, 40}, RunMode::Infer, {4, 4, 1}, 3);
    EXPECT_EQ(capped[2].first, 40);
}

TEST(ura, StageResidualAndShapes) {
    torch::manual_seed(1);
    UraStage stage(8, 5, 1, true, false);
    stage->eval();
    RefineState state{torch::randn({2, 8, 8, 8}), torch::rand({2, 1, 8, 8}), 0, 1.0};
    StageOptions opts;
    opts.partition.p_threshold = 0.0;
    auto out = stage->forward(state, torch::randn({2, 5, 16, 16}), opts);
    EXPECT_EQ(out.logits.sizes(), (std::vector<int64_t>{2, 1, 8, 8}));
    EXPECT_EQ(out.state.stage, 1);
    EXPECT_EQ(out.uncertainty.values.sizes(), (std::vector<int64_t>{2, 1, 8, 8}));
}

TEST(ura, GuidanceNoneLeavesFeatureUnmasked) {
    torch::manual_seed(2);
    UraStage stage(8, 5, 1, true, false);
    stage->eval();
    // saturated prediction: no uncertain pixel, so uncertainty guidance attends nothing
    RefineState state{torch::randn({1, 8, 8, 8}), torch::ones({1, 1, 8, 8}), 0, 1.0};
    auto low = torch::randn({1, 5, 8, 8});
    StageOptions masked, open;
    open.guidance = Guidance::None;
    auto a = stage->forward(state, low, masked);
    auto b = stage->forward(state, low, open);
    EXPECT_FALSE(torch::allclose(a.state.feature, b.state.feature));
}

TEST(ura, StageGradientCheckGlobalPartition) {
    torch::manual_seed(3);
    UraStage stage(8, 4, 1, true, false);
    stage->to(torch::kFloat64);
    stage->eval();
    RefineState state{torch::randn({1, 8, 8, 8}, torch::kFloat64), torch::rand({1, 1, 8, 8}, torch::kFloat64), 0, 1.0};
    auto low = torch::randn({1, 4, 8, 8}, torch::kFloat64);
    StageOptions opts;
    opts.partition.p_threshold = 0.0;
    auto f = [&] {
        auto out = stage->forward(state, low, opts);
        return out.logits.pow(2).sum() + out.state.feature.mean();
    };
    auto res = oracle::gradcheck(f, stage->parameters(), 8, 1e-6, 4);
    EXPECT_EQ(res.checked, 8);
    EXPECT_LT(res.max_rel_error, 1e-3);
}
