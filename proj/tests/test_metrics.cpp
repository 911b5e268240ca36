#include <doctest.h>

#include <pbrgen/errors.hpp>
#include <pbrgen/metrics.hpp>
#include <pbrgen/rng.hpp>

#include "test_support.hpp"

#include <cmath>
#include <string>
#include <vector>

using namespace pbrgen;

namespace {

Image random_rgb(Rng& rng, int hw = 8) {
    Image img(3, hw, hw);
    for (auto& v : img.data) v = rng.next_float();
    return img;
}

// independent 1-D closed form: (m1-m2)^2 + v1 + v2 - 2 sqrt(v1 v2)
double frechet_1d(double m1, double v1, double m2, double v2) {
    const double dm = m1 - m2;
    return dm * dm + v1 + v2 - 2.0 * std::sqrt(v1 * v2);
}

GaussianStats gauss1(double mean, double var) {
    GaussianStats g;
    g.mean = {mean};
    g.cov = {var};
    g.count = 2;
    return g;
}

Image test_stack() {
    Image s(8, 2, 2);
    const float vals[8] = {0.2f, 0.4f, 0.8f, 0.3f, 0.7f, 0.6f, 0.0f, 0.8f};
    for (int c = 0; c < 8; ++c)
        for (int i = 0; i < 4; ++i) s.data[size_t(c) * 4 + size_t(i)] = vals[c];
    return s;
}

} // namespace

TEST_CASE("backbone embeddings are reproducible and shaped") {
    EmbeddingBackbone b1(7), b2(7), b3(8);
    CHECK(b1.dim() == 32);
    Rng rng(3);
    Image img = random_rgb(rng);
    auto e1 = b1.embed(img);
    auto e2 = b2.embed(img);
    auto e3 = b3.embed(img);
    REQUIRE(e1.size() == 32);
    CHECK(tsup::bitwise_equal(e1, e2));
    CHECK_FALSE(tsup::bitwise_equal(e1, e3));
    for (float v : e1) CHECK(std::isfinite(v));

    Image gray(1, 8, 8);
    CHECK_THROWS_WITH_AS(b1.embed(gray), doctest::Contains("3-channel"), MetricError);
    Image tiny(3, 7, 8);
    CHECK_THROWS_WITH_AS(b1.embed(tiny), doctest::Contains("8x8"), MetricError);
}

TEST_CASE("gaussian fits use population covariance") {
    CHECK_THROWS_AS(fit_gaussian({}), MetricError);
    CHECK_THROWS_AS(fit_gaussian({{1.0f, 2.0f}, {1.0f}}), MetricError);

    GaussianStats single = fit_gaussian({{2.0f, -1.0f}});
    CHECK(single.count == 1);
    CHECK(single.mean == std::vector<double>({2.0, -1.0}));
    for (double c : single.cov) CHECK(c == 0.0);
    CHECK_NOTHROW(single.validate());

    // two points at +-1: mean 0, population variance 1
    GaussianStats two = fit_gaussian({{1.0f}, {-1.0f}});
    CHECK(two.mean[0] == doctest::Approx(0.0));
    CHECK(two.cov[0] == doctest::Approx(1.0));
}

TEST_CASE("frechet distance matches the 1-D closed form") {
    CHECK(frechet(gauss1(0.0, 1.0), gauss1(1.0, 4.0)) == doctest::Approx(2.0).epsilon(1e-9));

    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        const double m1 = rng.normal(), m2 = rng.normal();
        const double v1 = 0.05 + rng.next_float() * 3.0;
        const double v2 = 0.05 + rng.next_float() * 3.0;
        const double got = frechet(gauss1(m1, v1), gauss1(m2, v2));
        const double want = frechet_1d(m1, v1, m2, v2);
        CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("frechet identity and equal-covariance cases") {
    Rng rng(5);
    std::vector<std::vector<float>> cloud;
    for (int i = 0; i < 12; ++i) {
        std::vector<float> v(6);
        for (auto& x : v) x = float(rng.normal());
        cloud.push_back(v);
    }
    GaussianStats g = fit_gaussian(cloud);
    CHECK(std::abs(frechet(g, g)) <= 1e-9);

    // same covariance, shifted mean: distance collapses to the mean gap
    GaussianStats shifted = g;
    double want = 0.0;
    for (auto& m : shifted.mean) {
        m += 0.75;
        want += 0.75 * 0.75;
    }
    CHECK(frechet(g, shifted) == doctest::Approx(want).epsilon(1e-7));

    GaussianStats other = g;
    other.mean.pop_back();
    other.cov.assign(25, 0.0);
    CHECK_THROWS_AS(frechet(g, other), MetricError);
}

TEST_CASE("median bandwidth") {
    // union {0, 1, 3}: pairwise distances 1, 3, 2 -> median 2
    CHECK(median_bandwidth({{0.0f}, {1.0f}}, {{3.0f}}) == doctest::Approx(2.0));
    // union {0, 1, 3, 7}: distances {1,3,7,2,6,4} -> even count, mean of 3 and 4
    CHECK(median_bandwidth({{0.0f}, {1.0f}}, {{3.0f}, {7.0f}}) == doctest::Approx(3.5));
    // coincident points fall back to 1.0
    CHECK(median_bandwidth({{2.0f}, {2.0f}}, {{2.0f}}) == doctest::Approx(1.0));
}

TEST_CASE("mmd closed forms and positivity") {
    // one point per side: 1 + 1 - 2 exp(-d^2 / (2 bw^2))
    const double d2 = 4.0, bw = 1.5;
    const double want = 2.0 - 2.0 * std::exp(-d2 / (2.0 * bw * bw));
    CHECK(mmd_rbf({{0.0f}}, {{2.0f}}, bw) == doctest::Approx(want).epsilon(1e-12));

    Rng rng(21);
    std::vector<std::vector<float>> x, y;
    for (int i = 0; i < 9; ++i) {
        std::vector<float> a(4), b(4);
        for (auto& v : a) v = float(rng.normal());
        for (auto& v : b) v = float(rng.normal() + 0.4);
        x.push_back(a);
        y.push_back(b);
    }
    CHECK(std::abs(mmd_rbf(x, x, 1.0)) <= 1e-12);
    CHECK(mmd_rbf(x, y, median_bandwidth(x, y)) >= -1e-12);
    CHECK_THROWS_AS(mmd_rbf(x, y, 0.0), MetricError);
    CHECK_THROWS_AS(mmd_rbf({}, y, 1.0), MetricError);
}

TEST_CASE("stack composites expose every material view") {
    Image s = test_stack();
    auto comps = stack_composites(s);
    REQUIRE(comps.size() == 7);
    const char* names[7] = {"albedo",          "roughness",     "metallic", "bump",
                            "gray-rough-metal", "rough-metal-nxy", "gray-nx-ny"};
    for (int i = 0; i < 7; ++i) {
        CHECK(comps[size_t(i)].first == names[i]);
        CHECK(comps[size_t(i)].second.channels == 3);
        CHECK(comps[size_t(i)].second.width == s.width);
    }

    const float gray = 0.2126f * 0.2f + 0.7152f * 0.4f + 0.0722f * 0.8f;
    const float nxy = std::sqrt(0.6f * 0.6f + 0.0f * 0.0f);
    CHECK(comps[0].second.at(0, 0, 0) == 0.2f);
    CHECK(comps[0].second.at(2, 1, 1) == 0.8f);
    CHECK(comps[1].second.at(0, 0, 0) == 0.3f);
    CHECK(comps[1].second.at(2, 0, 0) == 0.3f); // replicated scalar
    CHECK(comps[2].second.at(1, 0, 0) == 0.7f);
    CHECK(comps[3].second.at(0, 0, 0) == 0.6f);
    CHECK(comps[3].second.at(2, 0, 0) == 0.8f);
    CHECK(comps[4].second.at(0, 0, 0) == doctest::Approx(gray).epsilon(1e-6));
    CHECK(comps[4].second.at(1, 0, 0) == 0.3f);
    CHECK(comps[4].second.at(2, 0, 0) == 0.7f);
    CHECK(comps[5].second.at(0, 0, 0) == 0.3f);
    CHECK(comps[5].second.at(1, 0, 0) == 0.7f);
    CHECK(comps[5].second.at(2, 0, 0) == doctest::Approx(nxy).epsilon(1e-6));
    CHECK(comps[6].second.at(0, 0, 0) == doctest::Approx(gray).epsilon(1e-6));
    CHECK(comps[6].second.at(1, 0, 0) == 0.6f);
    CHECK(comps[6].second.at(2, 0, 0) == 0.0f);

    Image bad(7, 2, 2);
    CHECK_THROWS_WITH_AS(stack_composites(bad), doctest::Contains("8-channel"), MetricError);
}

TEST_CASE("triplet scores vanish on identical sets and name their parts") {
    Rng rng(14);
    std::vector<Image> set;
    for (int i = 0; i < 5; ++i) {
        Image s(8, 8, 8);
        for (auto& v : s.data) v = rng.next_float();
        set.push_back(s);
    }
    EmbeddingBackbone backbone(7);
    TripletScore fr = pbr_triplet_score(set, set, MetricKind::frechet, backbone);
    CHECK(std::abs(fr.mean) <= 1e-9);
    REQUIRE(fr.breakdown.size() == 7);
    CHECK(fr.breakdown[0].first == "albedo");
    CHECK(fr.breakdown[6].first == "gray-nx-ny");
    double acc = 0.0;
    for (const auto& [name, v] : fr.breakdown) acc += v;
    CHECK(fr.mean == doctest::Approx(acc / 7.0));

    TripletScore md = pbr_triplet_score(set, set, MetricKind::mmd, backbone);
    CHECK(std::abs(md.mean) <= 1e-9);

    CHECK_THROWS_WITH_AS(pbr_triplet_score({}, set, MetricKind::frechet, backbone),
                         doctest::Contains("empty"), MetricError);
    std::vector<Image> thin = {Image(7, 8, 8)};
    CHECK_THROWS_WITH_AS(pbr_triplet_score(thin, set, MetricKind::frechet, backbone),
                         doctest::Contains("8-channel"), MetricError);
    std::vector<Image> mixed = set;
    mixed.push_back(Image(8, 16, 16));
    CHECK_THROWS_WITH_AS(pbr_triplet_score(mixed, set, MetricKind::frechet, backbone),
                         doctest::Contains("mixed"), MetricError);
}

TEST_CASE("noise interpolation renormalizes every blend") {
    std::vector<float> e0 = {1.0f, -1.0f, 2.0f, 0.0f};
    std::vector<float> e1 = {0.0f, 2.0f, -2.0f, 2.0f};

    // lambda 0.5 -> raw {0.5, 0.5, 0, 1}, mean 0.5, pop std 0.3536...
    // normalized: {0, 0, -sqrt(2), sqrt(2)}
    auto mid = interp_noise(e0, e1, 0.5);
    const float r2 = std::sqrt(2.0f);
    CHECK(mid[0] == doctest::Approx(0.0f).epsilon(1e-6));
    CHECK(mid[1] == doctest::Approx(0.0f).epsilon(1e-6));
    CHECK(mid[2] == doctest::Approx(-r2).epsilon(1e-6));
    CHECK(mid[3] == doctest::Approx(r2).epsilon(1e-6));

    Rng rng(8);
    std::vector<float> a(256), b(256);
    for (auto& v : a) v = float(rng.normal());
    for (auto& v : b) v = float(rng.normal());
    for (int i = 0; i <= 100; ++i) {
        const double lam = double(i) / 100.0;
        auto z = interp_noise(a, b, lam);
        double mean = 0.0;
        for (float v : z) mean += v;
        mean /= double(z.size());
        double var = 0.0;
        for (float v : z) var += (v - mean) * (v - mean);
        var /= double(z.size());
        CHECK(std::abs(mean) <= 1e-6);
        CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-6);
    }

    std::vector<float> flat(8, 3.0f);
    CHECK_THROWS_WITH_AS(interp_noise(flat, flat, 0.5), doctest::Contains("zero-variance"),
                         MetricError);
    CHECK_THROWS_AS(interp_noise(e0, e1, -0.1), MetricError);
    CHECK_THROWS_AS(interp_noise(e0, e1, 1.1), MetricError);
    CHECK_THROWS_AS(interp_noise(e0, {1.0f}, 0.5), MetricError);
    CHECK_THROWS_AS(interp_noise({}, {}, 0.5), MetricError);
}

TEST_CASE("prompt interpolation is plain lerp") {
    std::vector<float> e0 = {1.0f, 2.0f, -4.0f};
    std::vector<float> e1 = {3.0f, 0.0f, 4.0f};
    CHECK(interp_prompt(e0, e1, 0.0) == e0);
    CHECK(interp_prompt(e0, e1, 1.0) == e1);
    auto mid = interp_prompt(e0, e1, 0.5);
    CHECK(mid[0] == doctest::Approx(2.0f));
    CHECK(mid[1] == doctest::Approx(1.0f));
    CHECK(mid[2] == doctest::Approx(0.0f));
    CHECK_THROWS_AS(interp_prompt(e0, {1.0f}, 0.5), MetricError);
}
