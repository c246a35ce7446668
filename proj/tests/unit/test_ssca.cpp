#include "oracles.hpp"

#include <usod/errors.hpp>
#include <usod/ssca.hpp>

#include <gtest/gtest.h>

using namespace usod;

TEST(ssca, ReductionRatios) {
    const BackboneConfig bb;
    EXPECT_EQ(reduction_ratio(bb, 1), 4);
    EXPECT_EQ(reduction_ratio(bb, 2), 2);
    EXPECT_EQ(reduction_ratio(bb, 3), 1);
    EXPECT_THROW(reduction_ratio(bb, 4), ConfigError);
}

TEST(ssca, KeyGridMatchesCoarsestLevel) {
    torch::manual_seed(0);
    SscaConfig cfg;
    cfg.width = 8;
    SscaBlock block(cfg, 1, 4);
    auto x = torch::randn({2, 8, 16, 16});
    auto reduced = block->reduce(x);
    EXPECT_EQ(reduced.size(2), 4);
    EXPECT_EQ(reduced.size(3), 4);
    auto out = block->forward(x);
    EXPECT_EQ(out.integrated.sizes(), x.sizes());
    EXPECT_EQ(out.logits.sizes(), (std::vector<int64_t>{2, 1, 16, 16}));
}

TEST(ssca, DecoderProducesThreeHeads) {
    torch::manual_seed(1);
    const BackboneConfig bb;
    SscaConfig cfg;
    cfg.width = 8;
    Ssca ssca(cfg, bb);
    MiaOutput mia;
    for (int level = 1; level <= 4; ++level)
        mia.interacted[level - 1] = torch::randn({1, 8, 64 / bb.strides[level], 64 / bb.strides[level]});
    auto state = ssca->forward(mia);
    for (int level = 1; level <= 3; ++level) {
        EXPECT_EQ(state.prediction(level).size(1), 1);
        EXPECT_EQ(state.prediction(level).size(2), 64 / bb.strides[level]);
        EXPECT_EQ(state.feature(level).size(1), 8);
    }
}

TEST(ssca, RejectsWrongWidth) {
    SscaBlock block(SscaConfig{}, 2, 2);
    EXPECT_THROW(block->forward(torch::randn({1, 3, 8, 8})), InputError);
}

TEST(ssca, BlockGradientCheck) {
    torch::manual_seed(2);
    SscaConfig cfg;
    cfg.width = 8;
    SscaBlock block(cfg, 2, 2);
    block->to(torch::kFloat64);
    block->eval();
    auto x = torch::randn({1, 8, 8, 8}, torch::kFloat64);
    auto f = [&] {
        auto out = block->forward(x);
        return out.logits.sum() + out.integrated.pow(2).mean();
    };
    auto res = oracle::gradcheck(f, block->parameters(), 8, 1e-6, 5);
    EXPECT_EQ(res.checked, 8);
    EXPECT_LT(res.max_rel_error, 1e-3);
}
