#include <gtest/gtest.h>

#include "support.hpp"
#include "toonfield/errors.hpp"
#include "toonfield/neural_renderer.hpp"

using namespace toonfield;

TEST(ModConv, IdentityWeightPassesInputThrough) {
    auto x = torch::randn({2, 4, 3, 3});
    auto eye = torch::eye(4);
    auto plain = modulated_conv1x1(x, torch::ones({2, 4}), eye, false);
    EXPECT_TRUE(torch::equal(plain, x));
    // Demodulation renormalises each row of a positive diagonal back to 1.
    auto demod = modulated_conv1x1(x, torch::rand({2, 4}) + 0.5, eye, true);
    EXPECT_TRUE(torch::allclose(demod, x, 1e-5, 1e-6));
}

TEST(ModConv, DemodulationCancelsUniformStyleScale) {
    auto x = torch::randn({3, 6, 4, 4});
    auto s = torch::randn({3, 6});
    auto w = torch::randn({5, 6});
    auto base = modulated_conv1x1(x, s, w, true);
    for (double c : {0.1, 3.0, 250.0})
        EXPECT_TRUE(torch::allclose(modulated_conv1x1(x, s * c, w, true), base, 1e-5, 1e-5)) << "c=" << c;

    // The module form: style_row scaling is uniform when the affine bias is zero.
    ModConv1x1 conv(256, 6, 5, true);
    {
        torch::NoGradGuard g;
        conv->affine->bias.zero_();
    }
    auto row = torch::randn({3, 256});
    auto ref = conv->forward(x, row);
    EXPECT_TRUE(torch::allclose(conv->forward(x, row * 4.0), ref, 1e-5, 1e-5));
}

TEST(ModConv, ShapesAndErrors) {
    ModConv1x1 conv(16, 6, 5, true);
    EXPECT_EQ(conv->forward(torch::randn({2, 6, 3, 7}), torch::randn({2, 16})).sizes(),
              (std::vector<int64_t>{2, 5, 3, 7}));
    EXPECT_THROW(modulated_conv1x1(torch::randn({2, 6, 3, 3}), torch::randn({2, 5}), torch::randn({5, 6})),
                 ConfigError);
    EXPECT_THROW(modulated_conv1x1(torch::randn({2, 5, 3, 3}), torch::randn({2, 6}), torch::randn({5, 6})),
                 ConfigError);
}

TEST(ModConv, GradientsMatchFiniteDifferences) {
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto x = torch::randn({1, 3, 2, 2}, opts);
    auto s = torch::randn({1, 3}, opts);
    auto w = torch::randn({4, 3}, opts);
    auto probe = torch::randn({1, 4, 2, 2}, opts);
    auto loss = [&](const torch::Tensor& xx, const torch::Tensor& ss, const torch::Tensor& ww) {
        return (modulated_conv1x1(xx, ss, ww, true) * probe).sum();
    };
    auto xv = x.clone().requires_grad_(true);
    auto sv = s.clone().requires_grad_(true);
    auto wv = w.clone().requires_grad_(true);
    loss(xv, sv, wv).backward();
    torch::NoGradGuard g;
    auto nx = oracle::central_diff([&](const torch::Tensor& p) { return loss(p, s, w).item<double>(); }, x);
    auto ns = oracle::central_diff([&](const torch::Tensor& p) { return loss(x, p, w).item<double>(); }, s);
    auto nw = oracle::central_diff([&](const torch::Tensor& p) { return loss(x, s, p).item<double>(); }, w);
    EXPECT_LE(oracle::rel_err(xv.grad(), nx), 1e-4);
    EXPECT_LE(oracle::rel_err(sv.grad(), ns), 1e-4);
    EXPECT_LE(oracle::rel_err(wv.grad(), nw), 1e-4);
}

TEST(Hrgb, BoundedOddMonotone) {
    auto x = torch::linspace(-8, 8, 101, torch::kFloat64);
    auto y = h_rgb(x);
    EXPECT_LT(y.abs().max().item<double>(), 1.0);
    EXPECT_TRUE(torch::allclose(h_rgb(-x), -y));
    EXPECT_TRUE((y.diff() > 0).all().item<bool>());
}

TEST(Renderer, DefaultShapeAndRange) {
    ModelConfig m;
    NeuralRenderer nr(m);
    torch::NoGradGuard g;
    auto out = nr->forward(torch::randn({2, m.feature_dim, 32, 32}), torch::randn({2, 3, m.w_dim}));
    EXPECT_EQ(out.sizes(), (std::vector<int64_t>{2, 3, 128, 128}));
    EXPECT_LT(out.abs().max().item<float>(), 1.0f);
    EXPECT_THROW(nr->forward(torch::randn({2, m.feature_dim, 32, 32}), torch::randn({2, 2, m.w_dim})), ConfigError);
}

TEST(Renderer, SitePerturbationStaysInsideUpsampleFootprint) {
    ModelConfig m;
    m.feature_dim = 8;
    m.nr_channels0 = 8;
    m.nr_channels1 = 8;
    m.w_dim = 16;
    torch::manual_seed(4);
    NeuralRenderer nr(m);
    torch::NoGradGuard g;
    const int64_t s = 8;
    auto feats = torch::randn({1, 8, s, s});
    auto w = torch::randn({1, 3, 16});
    auto base = nr->forward(feats, w);
    for (auto [u, v] : std::vector<std::pair<int64_t, int64_t>>{{0, 0}, {3, 5}, {7, 2}}) {
        auto bumped = feats.clone();
        bumped.index_put_({0, torch::indexing::Slice(), u, v}, bumped.index({0, torch::indexing::Slice(), u, v}) + 1.0);
        auto diff = (nr->forward(bumped, w) - base).abs().amax(1)[0];  // [H, W]
        auto rows = oracle::bilinear_reach(s, u, 2);
        auto cols = oracle::bilinear_reach(s, v, 2);
        double outside = 0.0;
        for (int64_t p = 0; p < 4 * s; ++p)
            for (int64_t q = 0; q < 4 * s; ++q)
                if (!(rows[size_t(p)] && cols[size_t(q)])) outside = std::max(outside, double(diff[p][q].item<float>()));
        EXPECT_LE(outside, 1e-7) << "site " << u << "," << v;
        EXPECT_GT(diff[std::min<int64_t>(4 * u + 1, 4 * s - 1)][std::min<int64_t>(4 * v + 1, 4 * s - 1)].item<float>(),
                  0.0f);
    }
}

TEST(Renderer, FootprintOracleMatchesDerivedInterval) {
    // Two bilinear doublings from side 8: site u reaches [4u - 3, 4u + 6] clipped to the image.
    for (int64_t u = 0; u < 8; ++u) {
        auto reach = oracle::bilinear_reach(8, u, 2);
        for (int64_t p = 0; p < 32; ++p) {
            const bool inside = p >= std::max<int64_t>(0, 4 * u - 3) && p <= std::min<int64_t>(31, 4 * u + 6);
            EXPECT_EQ(bool(reach[size_t(p)]), inside) << "u=" << u << " p=" << p;
        }
    }
}
