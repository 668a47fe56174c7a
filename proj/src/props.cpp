#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "casseg/errors.hpp"
#include "casseg/experiments.hpp"
#include "casseg/losses.hpp"
#include "casseg/metrics.hpp"
#include "casseg/postproc.hpp"
#include "casseg/random.hpp"
#include "casseg/reference.hpp"

namespace casseg {

namespace {

// Uniform on the simplex: normalised exponential draws.
DescriptorField uniform_simplex_field(Rng& rng, std::size_t h, std::size_t w, std::size_t m) {
    DescriptorField f(h, w, m);
    for (std::size_t p = 0; p < f.pixels(); ++p) {
        double sum = 0.0;
        for (auto& v : f.pixel(p)) sum += v = -std::log(1.0 - rng.uniform());
        for (auto& v : f.pixel(p)) v /= sum;
    }
    return f;
}

// Softmax of scaled normals with some exact vertices; reaches the corners.
DescriptorField random_simplex_field(Rng& rng, std::size_t h, std::size_t w, std::size_t m) {
    const double scale = rng.uniform(0.1, 8.0);
    std::vector<double> v(h * w * m);
    for (std::size_t p = 0; p < h * w; ++p) {
        double* px = v.data() + p * m;
        if (rng.bernoulli(0.1)) {
            px[rng.below(m)] = 1.0;
            continue;
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < m; ++c) mx = std::max(mx, px[c] = scale * rng.normal());
        double sum = 0.0;
        for (std::size_t c = 0; c < m; ++c) sum += px[c] = std::exp(px[c] - mx);
        for (std::size_t c = 0; c < m; ++c) px[c] /= sum;
    }
    return DescriptorField(Tensor({h, w, m}, std::move(v)));
}

RegionPartition random_partition(Rng& rng, std::size_t h, std::size_t w, std::size_t regions) {
    std::vector<int> labels(h * w);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        labels[p] = p < regions ? static_cast<int>(p) : static_cast<int>(rng.below(regions));
    }
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);
    return RegionPartition(h, w, std::move(labels));
}

struct Property {
    std::string name;
    bool pass = true;
    Json detail = Json::object();
};

Property cas_finite_differences(const ExperimentConfig& cfg) {
    Property prop{"cas_gradient_finite_differences"};
    Rng rng = Rng::stream(cfg.seed, 10);
    double worst = 0.0;
    const double h = 1e-6, tol = 1e-6;
    for (std::size_t t = 0; t < cfg.props.fd_fields; ++t) {
        const std::size_t hh = 1 + rng.below(4), ww = 2 + rng.below(4), m = 2 + rng.below(3);
        const std::size_t regions = 1 + rng.below(std::min<std::size_t>(4, hh * ww));
        auto field = uniform_simplex_field(rng, hh, ww, m);
        const auto part = random_partition(rng, hh, ww, regions);
        const CasConfig c(rng.uniform());
        const auto grad = cas_backward(field, part, c);
        for (std::size_t i = 0; i < field.tensor().size(); ++i) {
            const double orig = field.tensor()[i];
            field.tensor()[i] = orig + h;
            const double up = cas_forward(field, part, c).total;
            field.tensor()[i] = orig - h;
            const double down = cas_forward(field, part, c).total;
            field.tensor()[i] = orig;
            const double numeric = (up - down) / (2 * h), a = grad.tensor()[i];
            worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
        }
    }
    prop.pass = worst <= tol;
    prop.detail = {{"fields", cfg.props.fd_fields}, {"step", h}, {"max_relative_error", worst}, {"tolerance", tol}};
    return prop;
}

Property permutation_invariance(const ExperimentConfig& cfg) {
    Property prop{"cas_label_permutation_bit_identical"};
    Rng rng = Rng::stream(cfg.seed, 11);
    std::size_t mismatches = 0, trials = 200;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t h = 2 + rng.below(5), w = 2 + rng.below(5), m = 2 + rng.below(3);
        const std::size_t regions = 2 + rng.below(std::min<std::size_t>(4, h * w - 1));
        const auto field = random_simplex_field(rng, h, w, m);
        const auto part = random_partition(rng, h, w, regions);
        std::vector<int> perm(regions);
        for (std::size_t i = 0; i < regions; ++i) perm[i] = static_cast<int>(i);
        for (std::size_t i = regions; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
        std::vector<int> relabelled = part.labels();
        for (auto& l : relabelled) l = perm[static_cast<std::size_t>(l)];
        const CasConfig c(rng.uniform());
        const double a = cas_forward(field, part, c).total;
        const double b = cas_forward(field, RegionPartition(h, w, relabelled), c).total;
        mismatches += a == b ? 0 : 1;
    }
    prop.pass = mismatches == 0;
    prop.detail = {{"trials", trials}, {"mismatches", mismatches}};
    return prop;
}

Property cace_symmetry(const ExperimentConfig& cfg) {
    Property prop{"cace_orientation_symmetry"};
    Rng rng = Rng::stream(cfg.seed, 12);
    std::size_t mismatches = 0, trials = 200;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6);
        const auto field = random_simplex_field(rng, h, w, 2);
        std::vector<std::uint8_t> g(h * w);
        for (auto& x : g) x = rng.bernoulli(0.5) ? 1 : 0;
        const BinaryMask mask(h, w, g);
        mismatches += cace_loss(field, mask).loss == cace_loss(field, mask.inverted()).loss ? 0 : 1;
    }
    prop.pass = mismatches == 0;
    prop.detail = {{"trials", trials}, {"mismatches", mismatches}};
    return prop;
}

Property duplication_invariance(const ExperimentConfig& cfg) {
    Property prop{"region_duplication_invariance"};
    Rng rng = Rng::stream(cfg.seed, 13);
    double worst = 0.0;
    const std::size_t trials = 200;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = 4 + rng.below(20), m = 2 + rng.below(3), regions = 2 + rng.below(3);
        const auto field = random_simplex_field(rng, 1, n, m);
        const auto part = random_partition(rng, 1, n, regions);
        const int k = static_cast<int>(rng.below(regions));

        // Append a second copy of region k's pixels after the originals.
        std::vector<double> values(field.tensor().data().begin(), field.tensor().data().end());
        std::vector<int> labels = part.labels();
        for (std::size_t p = 0; p < n; ++p) {
            if (part.label(p) != k) continue;
            auto px = field.pixel(p);
            values.insert(values.end(), px.begin(), px.end());
            labels.push_back(k);
        }
        const std::size_t n2 = labels.size();
        const DescriptorField doubled(Tensor({1, n2, m}, std::move(values)));
        const RegionPartition doubled_part(1, n2, std::move(labels));
        const CasConfig c(rng.uniform());
        const auto before = cas_forward(field, part, c), after = cas_forward(doubled, doubled_part, c);
        const auto ku = static_cast<std::size_t>(k);
        worst = std::max(worst, std::abs(before.uniformer_per_region[ku] - after.uniformer_per_region[ku]));
        const auto mb = region_means(field, part), ma = region_means(doubled, doubled_part);
        for (std::size_t j = 0; j < m; ++j) worst = std::max(worst, std::abs(mb.rows.at(ku, j) - ma.rows.at(ku, j)));
    }
    prop.pass = worst <= 1e-12;
    prop.detail = {{"trials", trials}, {"max_abs_difference", worst}, {"tolerance", 1e-12}};
    return prop;
}

Property simplex_sparsity(const ExperimentConfig& cfg) {
    Property prop{"simplex_max_distance_at_vertices"};
    const std::size_t r = cfg.props.grid_resolution;
    std::vector<std::array<double, 3>> pts;
    std::vector<bool> vertex;
    for (std::size_t i = 0; i <= r; ++i) {
        for (std::size_t j = 0; i + j <= r; ++j) {
            const std::size_t k = r - i - j;
            const double d = static_cast<double>(r);
            pts.push_back({static_cast<double>(i) / d, static_cast<double>(j) / d, static_cast<double>(k) / d});
            vertex.push_back(i == r || j == r || k == r);
        }
    }
    double best = 0.0;
    std::size_t at_max = 0, non_vertex_at_max = 0;
    for (std::size_t a = 0; a < pts.size(); ++a) {
        for (std::size_t b = a + 1; b < pts.size(); ++b) {
            double d = 0.0;
            for (std::size_t c = 0; c < 3; ++c) d += (pts[a][c] - pts[b][c]) * (pts[a][c] - pts[b][c]);
            best = std::max(best, d);
            if (d >= 2.0 - 1e-12) {
                ++at_max;
                non_vertex_at_max += vertex[a] && vertex[b] ? 0 : 1;
            }
        }
    }
    prop.pass = std::abs(best - 2.0) <= 1e-12 && non_vertex_at_max == 0 && at_max == 3;
    prop.detail = {{"grid_points", pts.size()},
                   {"max_squared_distance", best},
                   {"pairs_at_max", at_max},
                   {"non_vertex_pairs_at_max", non_vertex_at_max}};
    return prop;
}

Property bounds_sampling(const ExperimentConfig& cfg) {
    Property prop{"cas_bounds_random_fields"};
    Rng rng = Rng::stream(cfg.seed, 14);
    std::size_t violations = 0;
    double lowest_margin = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < cfg.props.bound_samples; ++t) {
        const std::size_t h = 1 + rng.below(5), w = 1 + rng.below(5), m = 2 + rng.below(4);
        const std::size_t regions = 1 + rng.below(std::min<std::size_t>(5, h * w));
        const auto field = random_simplex_field(rng, h, w, m);
        const auto part = random_partition(rng, h, w, regions);
        const CasConfig c(rng.uniform());
        const double v = cas_forward(field, part, c).total;
        const auto b = cas_bounds(regions, c);
        if (!b.contains(v)) ++violations;
        lowest_margin = std::min({lowest_margin, v - b.lower, b.upper - v});
    }
    prop.pass = violations == 0;
    prop.detail = {{"samples", cfg.props.bound_samples}, {"violations", violations}, {"smallest_margin", lowest_margin}};
    return prop;
}

Property metric_oracles(const ExperimentConfig& cfg) {
    Property prop{"metric_oracle_equivalence"};
    Rng rng = Rng::stream(cfg.seed, 15);
    double worst = 0.0;
    for (std::size_t t = 0; t < cfg.props.oracle_fixtures; ++t) {
        const auto p = random_partition(rng, 8, 8, 1 + rng.below(6));
        const auto q = random_partition(rng, 8, 8, 1 + rng.below(6));
        worst = std::max(worst, std::abs(rand_index(p, q) - reference::rand_index(p.labels(), q.labels())));
        worst = std::max(worst, std::abs(variation_of_information(p, q) -
                                         reference::variation_of_information(p.labels(), q.labels())));
        worst = std::max(worst, std::abs(covering(p, q) - reference::covering(p.labels(), q.labels())));

        std::vector<std::uint8_t> b(64), g(64);
        const double pb = rng.uniform(), pg = rng.uniform();
        for (auto& x : b) x = rng.bernoulli(pb) ? 1 : 0;
        for (auto& x : g) x = rng.bernoulli(pg) ? 1 : 0;
        const auto fb = f_beta(BinaryMask(8, 8, b), BinaryMask(8, 8, g));
        const auto fo = reference::f_beta(b, g, 0.3);
        worst = std::max({worst, std::abs(fb.f - fo.f), std::abs(fb.precision - fo.p), std::abs(fb.recall - fo.r)});

        std::vector<double> s(64);
        for (auto& x : s) x = rng.uniform();
        worst = std::max(worst, std::abs(mae(SaliencyMap(8, 8, s), BinaryMask(8, 8, g)) - reference::mae(s, g)));
    }
    prop.pass = worst <= 1e-12 && kDefaultBetaSq == 0.3;
    prop.detail = {{"fixtures", cfg.props.oracle_fixtures},
                   {"max_abs_difference", worst},
                   {"beta_squared", kDefaultBetaSq}};
    return prop;
}

Property postproc_invariants(const ExperimentConfig& cfg) {
    Property prop{"postproc_invariants"};
    Rng rng = Rng::stream(cfg.seed, 16);
    std::size_t failures = 0;
    const std::size_t trials = 30;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t h = 6 + rng.below(8), w = 6 + rng.below(8), m = 1 + rng.below(3);
        std::vector<double> v(h * w * m);
        for (auto& x : v) x = rng.uniform();
        const DescriptorField f(Tensor({h, w, m}, std::move(v)));
        const auto km = kmeans_fit(f, 1 + rng.below(10), rng.next_u64());
        for (std::size_t i = 1; i < km.inertia.size(); ++i) failures += km.inertia[i] > km.inertia[i - 1] ? 1 : 0;
        const double frac = rng.uniform(0.01, 0.1);
        const auto absorbed = absorb_small_regions(km.partition, f, frac);
        const auto comps = connected_components(absorbed);
        if (comps.region_count() > 1) {
            for (auto s : comps.region_sizes()) failures += static_cast<double>(s) < frac * static_cast<double>(h * w);
        }
    }
    prop.pass = failures == 0;
    prop.detail = {{"trials", trials}, {"failures", failures}};
    return prop;
}

Property trained_sparsity(const ExperimentConfig& cfg) {
    Property prop{"trained_binary_sparsity"};
    ExperimentConfig sal = cfg;
    sal.kind = ExperimentKind::saliency;
    sal.losses = {LossKind::cas};
    sal.fidelities = {"high"};
    if (sal.val_count == 0) sal.val_count = 4;
    const Report r = run_saliency(sal);
    const auto& arm = r.body.at("arms").at(0);
    const double sparsity = arm.at("mean_max_channel").get<double>();
    const bool bounded = arm.at("bounds").at("violations").get<std::size_t>() == 0;
    prop.pass = sparsity >= cfg.props.sparsity_threshold && bounded;
    prop.detail = {{"mean_max_channel", sparsity},
                   {"threshold", cfg.props.sparsity_threshold},
                   {"logged_losses_within_bounds", bounded},
                   {"f_beta", arm.at("f_beta")}};
    return prop;
}

} // namespace

Report run_props(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<Property> props;
    props.push_back(cas_finite_differences(cfg));
    props.push_back(permutation_invariance(cfg));
    props.push_back(cace_symmetry(cfg));
    props.push_back(duplication_invariance(cfg));
    props.push_back(simplex_sparsity(cfg));
    props.push_back(bounds_sampling(cfg));
    props.push_back(metric_oracles(cfg));
    props.push_back(postproc_invariants(cfg));
    props.push_back(trained_sparsity(cfg));

    Report report;
    report.csv_header = {"property", "pass"};
    Json list = Json::array();
    bool all = true;
    for (const auto& p : props) {
        all = all && p.pass;
        list.push_back({{"property", p.name}, {"pass", p.pass}, {"detail", p.detail}});
        report.csv_rows.push_back({p.name, p.pass ? "1" : "0"});
    }
    report.body = Json{{"experiment", "props"},
                       {"config", cfg.to_json()},
                       {"properties", list},
                       {"status", all ? "pass" : "fail"}};
    return report;
}

} // namespace casseg
