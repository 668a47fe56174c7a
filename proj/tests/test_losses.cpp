#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "casseg/errors.hpp"
#include "casseg/losses.hpp"
#include "casseg/random.hpp"

using namespace casseg;

namespace {

DescriptorField field_from(std::size_t h, std::size_t w, std::size_t m, std::vector<double> v) {
    return DescriptorField(Tensor({h, w, m}, std::move(v)));
}

// Direct evaluation of the loss definition: explicit per-region loops, no
// shared code with the implementation.
double cas_oracle(const DescriptorField& f, const std::vector<int>& labels, double alpha) {
    const int n = *std::max_element(labels.begin(), labels.end()) + 1;
    const std::size_t m = f.channels();
    std::vector<std::vector<double>> mean(n, std::vector<double>(m, 0.0));
    std::vector<double> count(n, 0.0);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        count[labels[p]] += 1;
        for (std::size_t c = 0; c < m; ++c) mean[labels[p]][c] += f.at(p, c);
    }
    for (int i = 0; i < n; ++i)
        for (auto& v : mean[i]) v /= count[i];
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double u = 0.0;
        for (std::size_t p = 0; p < labels.size(); ++p) {
            if (labels[p] != i) continue;
            for (std::size_t c = 0; c < m; ++c) u += (f.at(p, c) - mean[i][c]) * (f.at(p, c) - mean[i][c]);
        }
        total += alpha * u / count[i];
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            double d = 0.0;
            for (std::size_t c = 0; c < m; ++c) d += (mean[i][c] - mean[j][c]) * (mean[i][c] - mean[j][c]);
            total -= (1.0 - alpha) * d;
        }
    return total;
}

DescriptorField finite_difference(const DescriptorField& f, const RegionPartition& part, const CasConfig& cfg,
                                  double h) {
    DescriptorField g(f.height(), f.width(), f.channels());
    DescriptorField probe = f;
    for (std::size_t i = 0; i < f.tensor().size(); ++i) {
        const double orig = probe.tensor()[i];
        probe.tensor()[i] = orig + h;
        const double up = cas_forward(probe, part, cfg).total;
        probe.tensor()[i] = orig - h;
        const double down = cas_forward(probe, part, cfg).total;
        probe.tensor()[i] = orig;
        g.tensor()[i] = (up - down) / (2 * h);
    }
    return g;
}

DescriptorField random_simplex_field(Rng& rng, std::size_t h, std::size_t w, std::size_t m) {
    DescriptorField f(h, w, m);
    for (std::size_t p = 0; p < f.pixels(); ++p) {
        double sum = 0.0;
        for (auto& v : f.pixel(p)) {
            v = -std::log(1.0 - rng.uniform());
            sum += v;
        }
        for (auto& v : f.pixel(p)) v /= sum;
    }
    return f;
}

RegionPartition random_partition(Rng& rng, std::size_t h, std::size_t w, std::size_t n) {
    std::vector<int> labels(h * w);
    for (std::size_t p = 0; p < labels.size(); ++p) labels[p] = static_cast<int>(p < n ? p : rng.below(n));
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);
    return RegionPartition(h, w, labels);
}

const RegionPartition two_by_two_split(2, 2, {0, 0, 1, 1});

} // namespace

TEST_CASE("RegionPartition invariants") {
    CHECK_THROWS_AS(RegionPartition(2, 2, {0, 0, 2, 2}), LabelError);
    CHECK_THROWS_AS(RegionPartition(2, 2, {0, 0, 1}), ShapeError);
    auto c = RegionPartition::compacted(1, 4, std::vector<int>{7, 7, 3, 9});
    CHECK(c.labels() == std::vector<int>{0, 0, 1, 2});
    CHECK(RegionPartition(1, 3, {2, 0, 1}).canonical_order() == std::vector<int>{2, 0, 1});
}

TEST_CASE("region_means") {
    SUBCASE("constant field") {
        DescriptorField f(3, 3, 2, 0.25);
        auto means = region_means(f, RegionPartition(3, 3, {0, 1, 1, 2, 2, 2, 0, 1, 2}));
        for (double v : means.rows.data()) CHECK(v == 0.25);
    }
    SUBCASE("single-pixel region equals its descriptor") {
        auto f = field_from(1, 3, 2, {0.1, 0.9, 0.4, 0.6, 0.7, 0.3});
        auto means = region_means(f, RegionPartition(1, 3, {0, 1, 0}));
        CHECK(means.rows.at(1, 0) == 0.4);
        CHECK(means.rows.at(1, 1) == 0.6);
    }
    SUBCASE("mixed four-pixel instance") {
        auto f = field_from(2, 2, 2, {1, 0, 0.5, 0.5, 0, 1, 0, 1});
        auto means = region_means(f, two_by_two_split);
        CHECK(means.rows.at(0, 0) == doctest::Approx(0.75));
        CHECK(means.rows.at(0, 1) == doctest::Approx(0.25));
    }
    CHECK_THROWS_AS(region_means(DescriptorField(2, 3, 2), two_by_two_split), ShapeError);
}

TEST_CASE("cas_forward examples against the direct oracle") {
    SUBCASE("single region, constant field") {
        DescriptorField f(2, 3, 2, 0.5);
        for (double a : {0.0, 0.3, 1.0}) {
            auto r = cas_forward(f, RegionPartition(2, 3, {0, 0, 0, 0, 0, 0}), CasConfig(a));
            CHECK(r.total == 0.0);
        }
    }
    SUBCASE("perfect sparse two-region case") {
        auto f = field_from(2, 2, 2, {1, 0, 1, 0, 0, 1, 0, 1});
        auto r = cas_forward(f, two_by_two_split, CasConfig(0.5));
        const double expected = cas_oracle(f, two_by_two_split.labels(), 0.5);
        CHECK(expected == doctest::Approx(-2.0).epsilon(1e-15));
        CHECK(r.total == doctest::Approx(expected).epsilon(1e-15));
        CHECK(r.uniformer_per_region == std::vector<double>{0.0, 0.0});
        CHECK(r.discriminator_total == doctest::Approx(4.0));
    }
    SUBCASE("mixed case") {
        auto f = field_from(2, 2, 2, {1, 0, 0.5, 0.5, 0, 1, 0, 1});
        auto r = cas_forward(f, two_by_two_split, CasConfig(0.5));
        const double expected = cas_oracle(f, two_by_two_split.labels(), 0.5);
        CHECK(expected == doctest::Approx(-1.0625).epsilon(1e-15));
        CHECK(r.total == doctest::Approx(expected).epsilon(1e-15));
        CHECK(r.uniformer_per_region[0] == doctest::Approx(0.125));
        CHECK(r.uniformer_per_region[1] == 0.0);
        CHECK(r.discriminator_total == doctest::Approx(2.25));
    }
}

TEST_CASE("cas_backward closed form agrees with finite differences on fixtures") {
    SUBCASE("constant single region") {
        DescriptorField f(2, 2, 3, 1.0 / 3.0);
        auto g = cas_backward(f, RegionPartition(2, 2, {0, 0, 0, 0}), CasConfig(0.5));
        for (double v : g.tensor().data()) CHECK(v == 0.0);
    }
    SUBCASE("perfect sparse case") {
        auto f = field_from(2, 2, 2, {1, 0, 1, 0, 0, 1, 0, 1});
        auto g = cas_backward(f, two_by_two_split, CasConfig(0.5));
        auto fd = finite_difference(f, two_by_two_split, CasConfig(0.5), 1e-6);
        CHECK(g.at(0, 0) == doctest::Approx(-1.0));
        CHECK(g.at(0, 1) == doctest::Approx(1.0));
        for (std::size_t i = 0; i < g.tensor().size(); ++i) CHECK(g.tensor()[i] == doctest::Approx(fd.tensor()[i]).epsilon(1e-8));
    }
    SUBCASE("mixed case") {
        auto f = field_from(2, 2, 2, {1, 0, 0.5, 0.5, 0, 1, 0, 1});
        auto g = cas_backward(f, two_by_two_split, CasConfig(0.5));
        auto fd = finite_difference(f, two_by_two_split, CasConfig(0.5), 1e-6);
        CHECK(g.at(0, 0) == doctest::Approx(-0.625));
        CHECK(g.at(0, 1) == doctest::Approx(0.625));
        for (std::size_t i = 0; i < g.tensor().size(); ++i) CHECK(g.tensor()[i] == doctest::Approx(fd.tensor()[i]).epsilon(1e-8));
    }
}

TEST_CASE("property: cas_backward matches finite differences on random simplex fields") {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6), m = 1 + rng.below(4);
        const std::size_t n = 1 + rng.below(std::min<std::size_t>(4, h * w));
        auto f = random_simplex_field(rng, h, w, m);
        auto part = random_partition(rng, h, w, n);
        const CasConfig cfg(rng.uniform());
        auto g = cas_backward(f, part, cfg);
        auto fd = finite_difference(f, part, cfg, 1e-6);
        for (std::size_t i = 0; i < g.tensor().size(); ++i) {
            const double a = g.tensor()[i], b = fd.tensor()[i];
            worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}));
        }
        CHECK(cas_forward(f, part, cfg).total == doctest::Approx(cas_oracle(f, part.labels(), cfg.alpha)).epsilon(1e-12));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("property: label permutation leaves the loss bit-identical") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = 2 + rng.below(5), w = 2 + rng.below(5), m = 2 + rng.below(3);
        const std::size_t n = 2 + rng.below(3);
        auto f = random_simplex_field(rng, h, w, m);
        auto part = random_partition(rng, h, w, n);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
        std::vector<int> relabelled(part.labels());
        for (auto& l : relabelled) l = perm[static_cast<std::size_t>(l)];
        const RegionPartition permuted(h, w, relabelled);
        const CasConfig cfg(0.5);
        CHECK(cas_forward(f, part, cfg).total == cas_forward(f, permuted, cfg).total);
        CHECK(cas_backward(f, part, cfg).tensor() == cas_backward(f, permuted, cfg).tensor());
    }
}

TEST_CASE("property: duplicating a region's pixels preserves its uniformer and mean") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t w = 3 + rng.below(6), m = 2 + rng.below(3), k = 2 + rng.below(4);
        auto f = random_simplex_field(rng, 1, w, m);
        std::vector<int> labels(w);
        for (std::size_t p = 0; p < w; ++p) labels[p] = p < 2 ? static_cast<int>(p) : static_cast<int>(rng.below(2));
        const RegionPartition part(1, w, labels);

        // Region 1's pixels repeated k times in total.
        std::vector<double> values(f.tensor().data().begin(), f.tensor().data().end());
        std::vector<int> big_labels = labels;
        for (std::size_t rep = 1; rep < k; ++rep) {
            for (std::size_t p = 0; p < w; ++p) {
                if (labels[p] != 1) continue;
                big_labels.push_back(1);
                for (std::size_t c = 0; c < m; ++c) values.push_back(f.at(p, c));
            }
        }
        const std::size_t big_w = big_labels.size();
        const DescriptorField big(Tensor({1, big_w, m}, values));
        const RegionPartition big_part(1, big_w, big_labels);

        const CasConfig cfg(0.5);
        CHECK(std::abs(cas_forward(f, part, cfg).uniformer_per_region[1] -
                       cas_forward(big, big_part, cfg).uniformer_per_region[1]) <= 1e-12);
        auto a = region_means(f, part), b = region_means(big, big_part);
        for (std::size_t c = 0; c < m; ++c) CHECK(std::abs(a.rows.at(1, c) - b.rows.at(1, c)) <= 1e-12);
    }
}

TEST_CASE("property: uniformer is zero exactly when a region is constant") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        auto f = random_simplex_field(rng, 3, 3, 3);
        const RegionPartition part(3, 3, {0, 0, 0, 1, 1, 1, 2, 2, 2});
        // Make region 1 constant.
        for (std::size_t p = 4; p < 6; ++p)
            for (std::size_t c = 0; c < 3; ++c) f.at(p, c) = f.at(3, c);
        auto r = cas_forward(f, part, CasConfig(0.5));
        CHECK(r.uniformer_per_region[1] == 0.0);
        CHECK(r.uniformer_per_region[0] > 0.0);
        CHECK(r.uniformer_per_region[2] > 0.0);
    }
}

TEST_CASE("ce_loss") {
    const RegionPartition target(1, 2, {0, 1});
    SUBCASE("correct one-hot") {
        auto r = ce_loss(field_from(1, 2, 2, {1, 0, 0, 1}), target);
        CHECK(r.loss <= 1e-11);
    }
    SUBCASE("uniform binary") {
        auto r = ce_loss(field_from(1, 2, 2, {0.5, 0.5, 0.5, 0.5}), target);
        CHECK(r.loss == doctest::Approx(-std::log(0.5)).epsilon(1e-15));
        CHECK(r.gradient.at(0, 0) == doctest::Approx(-1.0));  // -1 / (2 * 0.5)
        CHECK(r.gradient.at(0, 1) == 0.0);
    }
    SUBCASE("inverted one-hot hits the clamp") {
        auto r = ce_loss(field_from(1, 2, 2, {0, 1, 1, 0}), target);
        CHECK(r.loss == doctest::Approx(-std::log(kProbabilityClamp)));
    }
    CHECK_THROWS_AS(ce_loss(field_from(1, 2, 1, {1, 1}), target), LabelError);
}

TEST_CASE("cace_loss") {
    const BinaryMask g(1, 4, {0, 1, 1, 0});
    SUBCASE("prediction matches G") {
        auto r = cace_loss(field_from(1, 4, 2, {1, 0, 0, 1, 0, 1, 1, 0}), g);
        CHECK(r.loss <= 1e-11);
        CHECK(r.chosen_orientation == Orientation::original);
    }
    SUBCASE("prediction matches 1 - G") {
        auto r = cace_loss(field_from(1, 4, 2, {0, 1, 1, 0, 1, 0, 0, 1}), g);
        CHECK(r.loss <= 1e-11);
        CHECK(r.chosen_orientation == Orientation::flipped);
    }
    SUBCASE("uniform prediction ties to original") {
        auto r = cace_loss(field_from(1, 4, 2, std::vector<double>(8, 0.5)), g);
        CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
        CHECK(r.chosen_orientation == Orientation::original);
    }
    SUBCASE("non-binary target") {
        BinaryMask bad = g;
        bad.values[0] = 2;
        CHECK_THROWS_AS(cace_loss(field_from(1, 4, 2, std::vector<double>(8, 0.5)), bad), LabelError);
        CHECK_THROWS_AS(cace_loss(field_from(1, 3, 2, std::vector<double>(6, 0.5)), RegionPartition(1, 3, {0, 1, 2})),
                        LabelError);
    }
}

TEST_CASE("property: CACE is exactly symmetric in the mask") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6);
        auto f = random_simplex_field(rng, h, w, 2);
        std::vector<std::uint8_t> v(h * w);
        for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(2));
        const BinaryMask g(h, w, v);
        CHECK(cace_loss(f, g).loss == cace_loss(f, g.inverted()).loss);
    }
}

TEST_CASE("cas_bounds") {
    auto b2 = cas_bounds(2, CasConfig(0.5));
    CHECK(b2.lower == -2.0);
    CHECK(b2.upper == 2.0);
    auto f = field_from(2, 2, 2, {1, 0, 1, 0, 0, 1, 0, 1});
    CHECK(cas_forward(f, two_by_two_split, CasConfig(0.5)).total == b2.lower);

    for (double a : {0.0, 0.25, 1.0}) {
        auto b1 = cas_bounds(1, CasConfig(a));
        CHECK(b1.lower == 0.0);
        CHECK(b1.upper == 2.0 * a);
    }
    auto b3 = cas_bounds(3, CasConfig(0.5));
    CHECK(b3.lower == -6.0);
    CHECK(b3.upper == 3.0);
    CHECK_THROWS_AS(cas_bounds(0, CasConfig(0.5)), ParameterError);
    CHECK_THROWS_AS(CasConfig(1.5), ParameterError);
}

TEST_CASE("property: random simplex fields stay inside cas_bounds") {
    Rng rng(123);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t h = 1 + rng.below(5), w = 1 + rng.below(5), m = 1 + rng.below(4);
        const std::size_t n = 1 + rng.below(std::min<std::size_t>(4, h * w));
        auto f = random_simplex_field(rng, h, w, m);
        const CasConfig cfg(rng.uniform());
        CHECK(cas_bounds(n, cfg).contains(cas_forward(f, random_partition(rng, h, w, n), cfg).total));
    }
}
