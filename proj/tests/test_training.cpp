#include <filesystem>

#include <gtest/gtest.h>

#include "toonfield/checkpoint.hpp"
#include "toonfield/data.hpp"
#include "toonfield/errors.hpp"
#include "toonfield/trainer.hpp"

using namespace toonfield;
namespace fs = std::filesystem;

namespace {

Config tiny() {
    auto cfg = Config::desk();
    cfg.train.batch_size = 2;
    cfg.render.n_samples = 4;
    cfg.train.seed = 3;
    return cfg;
}

Datasets tiny_data(const Config& cfg) {
    return {synthetic_faces(8, cfg.model.image_res, 1), synthetic_styles(8, cfg.model.image_res, 2)};
}

torch::Tensor frontal(int64_t b) {
    const float c = float(std::numbers::pi / 2);
    return torch::tensor({c, c}).view({1, 2}).expand({b, 2});
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("toonfield_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST(Generator, SplitAtNMatchesStyleDisabledBitForBit) {
    auto cfg = tiny();
    torch::manual_seed(1);
    Generator g(cfg);
    torch::NoGradGuard ng;
    auto z_f = torch::randn({2, cfg.model.z_dim});
    auto z_s = torch::randn({2, cfg.model.style_dim});
    const int64_t n = cfg.model.n_sites();
    auto natural = g->forward(z_f, torch::Tensor(), frontal(2), n, nullptr);
    auto split_n = g->forward(z_f, z_s, frontal(2), n, nullptr);
    EXPECT_TRUE(torch::equal(natural, split_n));
    auto stylised = g->forward(z_f, z_s, frontal(2), 0, nullptr);
    EXPECT_GT((stylised - natural).norm().item<float>(), 0.0f);
    EXPECT_EQ(natural.sizes(), (std::vector<int64_t>{2, 3, cfg.model.image_res, cfg.model.image_res}));
    EXPECT_LT(natural.abs().max().item<float>(), 1.0f);
}

TEST(Generator, RenderWithoutNeuralRendererUsesFullResolutionGrid) {
    auto cfg = tiny();
    Generator g(cfg);
    torch::NoGradGuard ng;
    RenderOptions opts;
    opts.neural_renderer = false;
    opts.resolution = 16;
    auto img = g->forward(torch::randn({1, cfg.model.z_dim}), torch::Tensor(), frontal(1), cfg.model.n_sites(),
                          nullptr, opts);
    EXPECT_EQ(img.sizes(), (std::vector<int64_t>{1, 3, 16, 16}));
}

TEST(Trainer, GeneratorObjectiveReachesEveryParameterGroup) {
    auto cfg = tiny();
    cfg.model.sbm_init = 0.0;
    Trainer t(cfg, 2, tiny_data(cfg));
    t.generator->zero_grad();
    t.inspect_losses(true).g.backward();
    for (auto& [name, params] : t.generator->parameter_groups()) {
        double total = 0.0;
        for (auto& p : params)
            if (p.grad().defined()) total += p.grad().abs().sum().item<double>();
        EXPECT_GT(total, 0.0) << name;
    }
}

TEST(Trainer, R1NeverTouchesGeneratorParameters) {
    auto cfg = tiny();
    Trainer t(cfg, 1, tiny_data(cfg));
    t.generator->zero_grad();
    auto losses = t.inspect_losses(false);
    (losses.d - losses.d_no_r1).backward();
    for (auto& p : t.generator->parameters())
        EXPECT_TRUE(!p.grad().defined() || p.grad().abs().max().item<float>() == 0.0f);
}

TEST(Trainer, StepsRecordFiniteMetricsAndQueueDiscipline) {
    auto cfg = tiny();
    Trainer t(cfg, 2, tiny_data(cfg));
    // Stage 2 without a stage-1 load still trains; queue fills after the first step.
    EXPECT_TRUE(t.queue().empty());
    auto m1 = t.step();
    EXPECT_EQ(t.queue().size(), cfg.train.batch_size);
    EXPECT_EQ(m1.values.count("loss_latent"), 1u);
    auto m2 = t.step();
    EXPECT_LE(t.queue().size(), t.queue().capacity());
    for (const auto& [name, value] : m2.values) EXPECT_TRUE(std::isfinite(value)) << name;
    EXPECT_EQ(t.current_step(), 2);
}

TEST(Trainer, ResumeReproducesUninterruptedRun) {
    auto cfg = tiny();
    auto data = tiny_data(cfg);
    Trainer straight(cfg, 2, data);
    for (int i = 0; i < 4; ++i) straight.step();

    Trainer first(cfg, 2, data);
    for (int i = 0; i < 2; ++i) first.step();
    auto bytes = serialize_checkpoint(first.checkpoint());
    Trainer resumed(cfg, 2, data);
    resumed.restore(deserialize_checkpoint(bytes));
    EXPECT_EQ(resumed.current_step(), 2);
    for (int i = 0; i < 2; ++i) resumed.step();

    auto a = straight.checkpoint();
    auto b = resumed.checkpoint();
    ASSERT_EQ(a.arrays.size(), b.arrays.size());
    for (const auto& [name, tensor] : a.arrays) {
        ASSERT_EQ(b.arrays.count(name), 1u) << name;
        EXPECT_TRUE(torch::equal(tensor, b.arrays.at(name))) << name;
    }
    EXPECT_TRUE(a == b);
}

TEST(Trainer, StageTwoStartsFromStageOneRendersAtSplitN) {
    auto cfg = tiny();
    auto data = tiny_data(cfg);
    Trainer s1(cfg, 1, data);
    s1.step();
    auto ckpt = s1.checkpoint();
    Trainer s2(cfg, 2, data);
    s2.load_stage1(ckpt);
    EXPECT_EQ(s2.current_step(), 0);
    auto reference = load_model(ckpt);
    torch::NoGradGuard ng;
    auto z_f = torch::randn({2, cfg.model.z_dim});
    auto z_s = torch::randn({2, cfg.model.style_dim});
    const int64_t n = cfg.model.n_sites();
    EXPECT_TRUE(torch::equal(s2.generator->forward(z_f, z_s, frontal(2), n, nullptr),
                             reference.generator->forward(z_f, torch::Tensor(), frontal(2), n, nullptr)));
    EXPECT_THROW(s1.load_stage1(ckpt), UsageError);
}

TEST(Trainer, StageTwoWithoutInitIsUsageError) {
    auto cfg = tiny();
    cfg.train.steps = 1;
    auto dir = scratch("noinit");
    EXPECT_THROW(train(2, cfg, tiny_data(cfg), dir, std::nullopt), UsageError);
    EXPECT_THROW(train(2, cfg, tiny_data(cfg), dir, dir / "missing.tfck"), UsageError);
    fs::remove_all(dir);
}

TEST(Trainer, TrainWritesCheckpointsAndMetrics) {
    auto cfg = tiny();
    cfg.train.steps = 2;
    cfg.train.checkpoint_every = 1;
    auto dir = scratch("train");
    auto paths = train(1, cfg, tiny_data(cfg), dir, std::nullopt);
    ASSERT_EQ(paths.size(), 2u);
    EXPECT_EQ(paths.back().filename(), "ckpt_stage1_000002.tfck");
    EXPECT_TRUE(fs::exists(dir / "metrics.jsonl"));
    auto loaded = load_checkpoint(paths.back());
    EXPECT_EQ(loaded.step, 2);
    EXPECT_EQ(loaded.stage, 1);
    fs::remove_all(dir);
}

TEST(Trainer, RejectsMismatchedImages) {
    auto cfg = tiny();
    Datasets bad{synthetic_faces(4, 16, 1), synthetic_styles(4, 32, 2)};
    EXPECT_ANY_THROW(Trainer(cfg, 1, bad));
    EXPECT_THROW(Trainer(cfg, 3, tiny_data(cfg)), UsageError);
}
