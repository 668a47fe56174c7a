#include "casseg/postproc.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <string>

#include "casseg/errors.hpp"
#include "casseg/random.hpp"

namespace casseg {

namespace {

double sq_dist(std::span<const double> a, const double* b) {
    double d = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double diff = a[c] - b[c];
        d += diff * diff;
    }
    return d;
}

} // namespace

KMeansResult kmeans_fit(const DescriptorField& field, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
    const std::size_t n = field.pixels(), m = field.channels();
    if (k == 0) throw ParameterError("kmeans: k must be at least 1");
    if (k > n) throw ParameterError("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " pixels");

    Rng rng(splitmix64(seed));
    std::vector<double> centers;
    centers.reserve(k * m);
    auto add_center = [&](std::size_t p) {
        for (double v : field.pixel(p)) centers.push_back(v);
    };

    // k-means++ seeding.
    add_center(rng.below(n));
    std::vector<double> d2(n);
    for (std::size_t p = 0; p < n; ++p) d2[p] = sq_dist(field.pixel(p), centers.data());
    while (centers.size() / m < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        if (total <= 0.0) break;  // every point already sits on a centre
        double target = rng.uniform() * total;
        std::size_t pick = n - 1;
        for (std::size_t p = 0; p < n; ++p) {
            target -= d2[p];
            if (target < 0.0 && d2[p] > 0.0) {
                pick = p;
                break;
            }
        }
        while (d2[pick] <= 0.0) --pick;
        add_center(pick);
        const double* c = centers.data() + centers.size() - m;
        for (std::size_t p = 0; p < n; ++p) d2[p] = std::min(d2[p], sq_dist(field.pixel(p), c));
    }

    std::size_t clusters = centers.size() / m;
    std::vector<int> assign(n, -1);
    std::vector<double> dist(n, 0.0);
    KMeansResult result{RegionPartition(1, 1, {0}), Tensor(), {}, 0};

    auto assign_all = [&] {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < clusters; ++c) {
                const double d = sq_dist(field.pixel(p), centers.data() + c * m);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            changed |= assign[p] != best;
            assign[p] = best;
            dist[p] = best_d;
            inertia += best_d;
        }
        result.inertia.push_back(inertia);
        return changed;
    };

    bool changed = assign_all();
    for (std::size_t iter = 0; iter < max_iters && changed; ++iter) {
        result.iterations = iter + 1;
        std::vector<double> sums(clusters * m, 0.0);
        std::vector<std::size_t> counts(clusters, 0);
        for (std::size_t p = 0; p < n; ++p) {
            const auto c = static_cast<std::size_t>(assign[p]);
            ++counts[c];
            auto s = field.pixel(p);
            for (std::size_t j = 0; j < m; ++j) sums[c * m + j] += s[j];
        }
        for (std::size_t c = 0; c < clusters; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t j = 0; j < m; ++j) centers[c * m + j] = sums[c * m + j] / static_cast<double>(counts[c]);
        }
        for (std::size_t c = 0; c < clusters; ++c) {
            if (counts[c] > 0) continue;
            const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
            if (dist[far] <= 0.0) continue;  // nothing left to split; dropped at compaction
            auto s = field.pixel(far);
            std::copy(s.begin(), s.end(), centers.begin() + static_cast<std::ptrdiff_t>(c * m));
            dist[far] = 0.0;
        }
        changed = assign_all();
    }

    // Compact labels to the clusters actually used.
    std::vector<int> remap(clusters, -1);
    int next = 0;
    std::vector<int> labels(n);
    for (std::size_t p = 0; p < n; ++p) {
        auto& r = remap[static_cast<std::size_t>(assign[p])];
        if (r < 0) r = next++;
        labels[p] = r;
    }
    std::vector<double> used(static_cast<std::size_t>(next) * m);
    for (std::size_t c = 0; c < clusters; ++c) {
        if (remap[c] < 0) continue;
        std::copy_n(centers.begin() + static_cast<std::ptrdiff_t>(c * m), m,
                    used.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(remap[c]) * m));
    }
    result.partition = RegionPartition(field.height(), field.width(), std::move(labels));
    result.centers = Tensor({static_cast<std::size_t>(next), m}, std::move(used));
    return result;
}

RegionPartition kmeans_descriptors(const DescriptorField& field, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
    return kmeans_fit(field, k, seed, max_iters).partition;
}

RegionPartition connected_components(const RegionPartition& partition) {
    const std::size_t h = partition.height(), w = partition.width(), n = partition.pixels();
    std::vector<int> comp(n, -1);
    std::vector<std::size_t> stack;
    int next = 0;
    for (std::size_t start = 0; start < n; ++start) {
        if (comp[start] >= 0) continue;
        const int label = partition.label(start);
        comp[start] = next;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const std::size_t y = p / w, x = p % w;
            auto visit = [&](std::size_t q) {
                if (comp[q] < 0 && partition.label(q) == label) {
                    comp[q] = next;
                    stack.push_back(q);
                }
            };
            if (y > 0) visit(p - w);
            if (y + 1 < h) visit(p + w);
            if (x > 0) visit(p - 1);
            if (x + 1 < w) visit(p + 1);
        }
        ++next;
    }
    return RegionPartition(h, w, std::move(comp));
}

RegionPartition absorb_small_regions(const RegionPartition& partition, const DescriptorField& field, double min_fraction) {
    if (partition.height() != field.height() || partition.width() != field.width()) {
        throw ShapeError("absorb_small_regions: partition and field differ in size");
    }
    const std::size_t h = partition.height(), w = partition.width(), n = partition.pixels(), m = field.channels();
    const double min_size = min_fraction * static_cast<double>(n);

    std::vector<int> labels = partition.labels();
    for (;;) {
        const RegionPartition comps = connected_components(RegionPartition::compacted(h, w, labels));
        const std::size_t count = comps.region_count();
        if (count <= 1) break;
        const auto sizes = comps.region_sizes();

        std::size_t victim = count;
        for (std::size_t c = 0; c < count; ++c) {
            if (static_cast<double>(sizes[c]) < min_size && (victim == count || sizes[c] < sizes[victim])) victim = c;
        }
        if (victim == count) break;

        std::vector<double> means(count * m, 0.0);
        for (std::size_t p = 0; p < n; ++p) {
            const auto c = static_cast<std::size_t>(comps.label(p));
            auto s = field.pixel(p);
            for (std::size_t j = 0; j < m; ++j) means[c * m + j] += s[j];
        }
        for (std::size_t c = 0; c < count; ++c)
            for (std::size_t j = 0; j < m; ++j) means[c * m + j] /= static_cast<double>(sizes[c]);

        std::set<std::size_t> neighbours;
        for (std::size_t p = 0; p < n; ++p) {
            if (static_cast<std::size_t>(comps.label(p)) != victim) continue;
            const std::size_t y = p / w, x = p % w;
            auto look = [&](std::size_t q) {
                const auto c = static_cast<std::size_t>(comps.label(q));
                if (c != victim) neighbours.insert(c);
            };
            if (y > 0) look(p - w);
            if (y + 1 < h) look(p + w);
            if (x > 0) look(p - 1);
            if (x + 1 < w) look(p + 1);
        }

        std::size_t target = count;
        double best = std::numeric_limits<double>::infinity();
        const std::span<const double> vm(means.data() + victim * m, m);
        for (std::size_t c : neighbours) {
            const double d = sq_dist(vm, means.data() + c * m);
            if (d < best) {
                best = d;
                target = c;
            }
        }

        int target_label = -1;
        for (std::size_t p = 0; p < n && target_label < 0; ++p) {
            if (static_cast<std::size_t>(comps.label(p)) == target) target_label = labels[p];
        }
        for (std::size_t p = 0; p < n; ++p) {
            if (static_cast<std::size_t>(comps.label(p)) == victim) labels[p] = target_label;
        }
    }
    return RegionPartition::compacted(h, w, labels);
}

} // namespace casseg
