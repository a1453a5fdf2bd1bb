#include <cmath>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "toonfield/benchmark.hpp"
#include "toonfield/camera.hpp"
#include "toonfield/errors.hpp"
#include "toonfield/metrics.hpp"

using namespace toonfield;

namespace {

torch::Tensor normal(int64_t n, int64_t d, uint64_t seed) {
    auto gen = make_generator(seed);
    return torch::randn({n, d}, gen, torch::kFloat64);
}

torch::Tensor uniform(int64_t n, int64_t d, uint64_t seed) {
    auto gen = make_generator(seed);
    return torch::rand({n, d}, gen, torch::kFloat64);
}

// exp(mean_n sum_c p log(p / marginal)) by explicit loops.
double is_oracle(const torch::Tensor& p) {
    const int64_t n = p.size(0), c = p.size(1);
    auto acc = p.accessor<double, 2>();
    std::vector<double> marginal(size_t(c), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t k = 0; k < c; ++k) marginal[size_t(k)] += acc[i][k] / double(n);
    double kl = 0.0;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t k = 0; k < c; ++k)
            if (acc[i][k] > 0) kl += acc[i][k] * std::log(acc[i][k] / marginal[size_t(k)]);
    return std::exp(kl / double(n));
}

}  // namespace

TEST(Fid, IdenticalSetsGiveZero) {
    auto a = normal(2000, 8, 1);
    EXPECT_LE(std::abs(fid(a, a)), 1e-6);
    auto b = uniform(500, 16, 2);
    EXPECT_LE(std::abs(fid(b, b)), 1e-6);
}

TEST(Fid, GaussianOffsetApproachesSquaredMeanDistance) {
    auto mu = torch::full({8}, 0.5, torch::kFloat64);
    const double expected = mu.pow(2).sum().item<double>();
    auto a = normal(10000, 8, 3);
    auto b = normal(10000, 8, 4) + mu;
    const double value = fid(a, b);
    EXPECT_LE(std::abs(value - expected) / expected, 0.05) << value;
}

TEST(Fid, SymmetricAndNonNegative) {
    auto a = normal(800, 6, 5);
    auto b = normal(800, 6, 6) * 1.5 + 0.2;
    EXPECT_NEAR(fid(a, b), fid(b, a), 1e-8);
    EXPECT_GT(fid(a, b), 0.0);
}

TEST(Fid, ClosedFormForDiagonalCovariances) {
    // b = s a with zero means: cov_b = s^2 cov_a, so FID = tr(cov_a) (1 - s)^2.
    auto a = normal(4000, 4, 7);
    a = a - a.mean(0, true);
    const double s = 2.0;
    auto b = a * s;
    const double expect = (a.t().mm(a) / 3999.0).trace().item<double>() * (1 - s) * (1 - s);
    EXPECT_NEAR(fid(a, b), expect, 1e-6);
}

TEST(Fid, ArgumentErrors) {
    EXPECT_THROW(fid(normal(10, 3, 1), normal(10, 4, 1)), ArgumentError);
    EXPECT_THROW(fid(normal(1, 3, 1), normal(10, 3, 1)), ArgumentError);
    auto bad = normal(10, 3, 1);
    bad[0][0] = std::nan("");
    EXPECT_THROW(fid(bad, normal(10, 3, 2)), ArgumentError);
}

TEST(Kid, SameDistributionNearZero) {
    auto a = uniform(1000, 64, 10);
    auto b = uniform(1000, 64, 11);
    EXPECT_LE(std::abs(kid(a, a)), 1e-3);
    EXPECT_LE(std::abs(kid(a, b)), 1e-3);
}

TEST(Kid, PermutationInvariantAndSeparatesClusters) {
    auto a = uniform(400, 16, 12);
    auto b = uniform(400, 16, 13);
    auto perm = torch::randperm(400, torch::kLong);
    EXPECT_EQ(kid(a, b, 100), kid(a.index_select(0, perm), b, 100));
    EXPECT_GT(kid(a, b + 3.0, 100), 100.0 * std::abs(kid(a, b, 100)));
    EXPECT_THROW(kid(a, b, 401), ArgumentError);
    EXPECT_THROW(kid(a, b, 1), ArgumentError);
}

TEST(Kid, MatchesDirectUnbiasedEstimatorOnOneBlock) {
    auto a = uniform(30, 5, 20);
    auto b = uniform(30, 5, 21);
    auto k = [](const torch::Tensor& x, const torch::Tensor& y) {
        return std::pow(x.dot(y).item<double>() / 5.0 + 1.0, 3);
    };
    double xx = 0, yy = 0, xy = 0;
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 30; ++j) {
            if (i != j) {
                xx += k(a[i], a[j]);
                yy += k(b[i], b[j]);
            }
            xy += k(a[i], b[j]);
        }
    const double expect = xx / (30 * 29) + yy / (30 * 29) - 2 * xy / (30 * 30);
    EXPECT_NEAR(kid(a, b, 30), expect, 1e-10);
}

TEST(InceptionScore, UniformOneHotAndOracle) {
    EXPECT_NEAR(inception_score(torch::full({7, 5}, 0.2, torch::kFloat64)), 1.0, 1e-12);
    EXPECT_NEAR(inception_score(torch::eye(6, torch::kFloat64)), 6.0, 1e-9);
    auto rows = torch::softmax(normal(50, 9, 30) * 2.0, 1);
    EXPECT_NEAR(inception_score(rows), is_oracle(rows), 1e-8);
    EXPECT_THROW(inception_score(torch::full({2, 3}, 0.3, torch::kFloat64)), ArgumentError);
    EXPECT_THROW(inception_score(-torch::eye(3, torch::kFloat64)), ArgumentError);
}

TEST(Diversity, PairProtocolAndValue) {
    int64_t calls = 0, pairs = 0;
    ImageDistance counting = [&](const torch::Tensor& a, const torch::Tensor&) {
        ++calls;
        pairs += a.size(0);
        return torch::ones({a.size(0)});
    };
    auto images = torch::zeros({3, 10, 3, 4, 4});
    EXPECT_DOUBLE_EQ(lpips_diversity(images, counting), 1.0);
    EXPECT_EQ(calls, 3);
    EXPECT_EQ(pairs, 3 * 45);

    // Mean absolute difference as a transparent distance.
    ImageDistance l1 = [](const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean({1, 2, 3}); };
    auto two = torch::zeros({1, 3, 3, 2, 2});
    two[0][1].fill_(1.0);
    two[0][2].fill_(3.0);
    EXPECT_NEAR(lpips_diversity(two, l1), (1.0 + 3.0 + 2.0) / 3.0, 1e-7);
    EXPECT_THROW(lpips_diversity(torch::zeros({1, 1, 3, 2, 2}), l1), ArgumentError);
}

TEST(MetricNetwork, DeterministicAndWellFormed) {
    MetricNetwork a, b;
    auto imgs = torch::rand({4, 3, 32, 32}) * 2 - 1;
    auto fa = a.features(imgs);
    EXPECT_TRUE(torch::equal(fa, b.features(imgs)));
    EXPECT_EQ(fa.sizes(), (std::vector<int64_t>{4, 224}));
    EXPECT_GE(fa.min().item<float>(), 0.0f);
    auto p = a.class_probs(imgs);
    EXPECT_TRUE(torch::allclose(p.sum(1), torch::ones({4}, torch::kFloat64)));
    auto d = a.perceptual_distance(imgs, imgs);
    EXPECT_EQ(d.abs().max().item<float>(), 0.0f);
    EXPECT_GT(a.perceptual_distance(imgs, imgs.flip({0})).min().item<float>(), 0.0f);
}

TEST(MetricReport, JsonLine) {
    std::ostringstream out;
    write_report(out, {"fid", 1.5, 100, "abc"});
    auto j = nlohmann::json::parse(out.str());
    EXPECT_EQ(j["name"], "fid");
    EXPECT_EQ(j["value"], 1.5);
    EXPECT_EQ(j["n_samples"], 100);
    EXPECT_EQ(j["config_hash"], "abc");
}

TEST(Benchmark, ReportsEveryGridCell) {
    auto cfg = Config::desk();
    Generator g(cfg);
    BenchmarkOptions opts;
    opts.frames = 1;
    opts.warmup = 3;
    auto with_nr = speed_benchmark(g, {{16, 4}, {32, 4}}, true, opts);
    ASSERT_EQ(with_nr.size(), 2u);
    for (const auto& r : with_nr) {
        EXPECT_TRUE(r.with_nr);
        EXPECT_FALSE(r.out_of_memory);
        EXPECT_GT(r.fps, 0.0);
        EXPECT_EQ(r.frames_timed, 1);
    }
    EXPECT_EQ(with_nr[1].resolution, 32);
    EXPECT_EQ(with_nr[1].n_samples_per_ray, 4);
    opts.warmup = 2;
    EXPECT_THROW(speed_benchmark(g, {{16, 4}}, false, opts), ArgumentError);
    std::ostringstream table, records;
    print_speed_table(table, with_nr);
    write_speed_records(records, with_nr);
    EXPECT_NE(table.str().find("32"), std::string::npos);
    std::istringstream lines(records.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j["name"], "fps");
        EXPECT_GT(j["value"].get<double>(), 0.0);
        ++n;
    }
    EXPECT_EQ(n, 2);
}
