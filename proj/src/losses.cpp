#include "casseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "casseg/errors.hpp"

namespace casseg {

namespace {

void require_same_grid(const DescriptorField& field, const RegionPartition& partition, const char* op) {
    if (field.height() != partition.height() || field.width() != partition.width()) {
        throw ShapeError(std::string(op) + ": field " + std::to_string(field.height()) + "x" +
                         std::to_string(field.width()) + " vs partition " + std::to_string(partition.height()) +
                         "x" + std::to_string(partition.width()));
    }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m) {
        const double diff = a[m] - b[m];
        d += diff * diff;
    }
    return d;
}

std::span<const double> mean_row(const RegionMeans& means, int region) {
    const std::size_t m = means.channels();
    return means.rows.data().subspan(static_cast<std::size_t>(region) * m, m);
}

} // namespace

CasConfig::CasConfig(double a) : alpha(a) {
    if (!(a >= 0.0 && a <= 1.0)) throw ParameterError("CasConfig: alpha must lie in [0, 1]");
}

RegionMeans region_means(const DescriptorField& field, const RegionPartition& partition) {
    require_same_grid(field, partition, "region_means");
    const std::size_t n = partition.region_count(), m = field.channels();
    // Accumulate offsets from each region's first pixel, so a constant region
    // reproduces its value exactly.
    std::vector<std::size_t> anchor(n, field.pixels());
    Tensor sums({n, m}, 0.0);
    for (std::size_t p = 0; p < field.pixels(); ++p) {
        const auto r = static_cast<std::size_t>(partition.label(p));
        if (anchor[r] == field.pixels()) anchor[r] = p;
        auto s = field.pixel(p);
        auto a = field.pixel(anchor[r]);
        for (std::size_t c = 0; c < m; ++c) sums.at(r, c) += s[c] - a[c];
    }
    const auto sizes = partition.region_sizes();
    for (std::size_t r = 0; r < n; ++r) {
        auto a = field.pixel(anchor[r]);
        for (std::size_t c = 0; c < m; ++c) sums.at(r, c) = a[c] + sums.at(r, c) / static_cast<double>(sizes[r]);
    }
    return RegionMeans{std::move(sums)};
}

LossBreakdown cas_forward(const DescriptorField& field, const RegionPartition& partition, const CasConfig& cfg) {
    const RegionMeans means = region_means(field, partition);
    const auto sizes = partition.region_sizes();

    LossBreakdown out;
    out.uniformer_per_region.assign(partition.region_count(), 0.0);
    for (std::size_t p = 0; p < field.pixels(); ++p) {
        const int r = partition.label(p);
        out.uniformer_per_region[static_cast<std::size_t>(r)] += squared_distance(field.pixel(p), mean_row(means, r));
    }
    for (std::size_t r = 0; r < sizes.size(); ++r) out.uniformer_per_region[r] /= static_cast<double>(sizes[r]);

    const auto order = partition.canonical_order();
    double uniformer = 0.0;
    for (int r : order) uniformer += out.uniformer_per_region[static_cast<std::size_t>(r)];

    double discriminator = 0.0;
    for (int i : order) {
        for (int j : order) {
            if (i != j) discriminator += squared_distance(mean_row(means, i), mean_row(means, j));
        }
    }
    out.discriminator_total = discriminator;
    out.total = cfg.alpha * uniformer - (1.0 - cfg.alpha) * discriminator;
    return out;
}

DescriptorField cas_backward(const DescriptorField& field, const RegionPartition& partition, const CasConfig& cfg) {
    const RegionMeans means = region_means(field, partition);
    const auto sizes = partition.region_sizes();
    const auto order = partition.canonical_order();
    const std::size_t n = partition.region_count(), m = field.channels();

    // Discriminator pull per region, already divided by the region size.
    Tensor pull({n, m}, 0.0);
    for (int k : order) {
        const auto mk = mean_row(means, k);
        for (int j : order) {
            if (j == k) continue;
            const auto mj = mean_row(means, j);
            for (std::size_t c = 0; c < m; ++c) pull.at(static_cast<std::size_t>(k), c) += mk[c] - mj[c];
        }
        const double scale = 4.0 * (1.0 - cfg.alpha) / static_cast<double>(sizes[static_cast<std::size_t>(k)]);
        for (std::size_t c = 0; c < m; ++c) pull.at(static_cast<std::size_t>(k), c) *= scale;
    }

    DescriptorField grad(field.height(), field.width(), m);
    for (std::size_t p = 0; p < field.pixels(); ++p) {
        const int k = partition.label(p);
        const auto uk = static_cast<std::size_t>(k);
        const double scale = 2.0 * cfg.alpha / static_cast<double>(sizes[uk]);
        const auto mk = mean_row(means, k);
        auto s = field.pixel(p);
        auto g = grad.pixel(p);
        for (std::size_t c = 0; c < m; ++c) g[c] = scale * (s[c] - mk[c]) - pull.at(uk, c);
    }
    return grad;
}

LossWithGradient ce_loss(const DescriptorField& probabilities, const RegionPartition& target) {
    require_same_grid(probabilities, target, "ce_loss");
    const std::size_t m = probabilities.channels();
    if (target.region_count() > m) {
        throw LabelError("ce_loss: label " + std::to_string(target.region_count() - 1) + " needs more than " +
                         std::to_string(m) + " channels");
    }
    const double n = static_cast<double>(probabilities.pixels());
    LossWithGradient out{0.0, DescriptorField(probabilities.height(), probabilities.width(), m)};
    for (std::size_t p = 0; p < probabilities.pixels(); ++p) {
        const auto t = static_cast<std::size_t>(target.label(p));
        const double q = std::clamp(probabilities.at(p, t), kProbabilityClamp, 1.0 - kProbabilityClamp);
        out.loss -= std::log(q);
        out.gradient.at(p, t) = -1.0 / (n * q);
    }
    out.loss /= n;
    return out;
}

CaceResult cace_loss(const DescriptorField& probabilities, const BinaryMask& target) {
    if (probabilities.channels() != 2) throw ShapeError("cace_loss: two channels required");
    if (probabilities.height() != target.height || probabilities.width() != target.width) {
        throw ShapeError("cace_loss: mask size does not match field");
    }
    // A mask with a single value still defines two complete assignments, so
    // the labels are not routed through RegionPartition's occupancy check.
    const std::size_t m = 2;
    const double n = static_cast<double>(probabilities.pixels());
    double loss[2] = {0.0, 0.0};
    for (std::size_t p = 0; p < probabilities.pixels(); ++p) {
        const std::size_t t = target.values[p];
        if (t > 1) throw LabelError("cace_loss: non-binary target value " + std::to_string(t));
        for (std::size_t o = 0; o < 2; ++o) {
            const std::size_t c = o == 0 ? t : 1 - t;
            loss[o] -= std::log(std::clamp(probabilities.at(p, c), kProbabilityClamp, 1.0 - kProbabilityClamp));
        }
    }
    const std::size_t best = loss[1] < loss[0] ? 1 : 0;
    CaceResult out{loss[best] / n, DescriptorField(probabilities.height(), probabilities.width(), m),
                   best == 0 ? Orientation::original : Orientation::flipped};
    for (std::size_t p = 0; p < probabilities.pixels(); ++p) {
        const std::size_t t = target.values[p];
        const std::size_t c = best == 0 ? t : 1 - t;
        const double q = std::clamp(probabilities.at(p, c), kProbabilityClamp, 1.0 - kProbabilityClamp);
        out.gradient.at(p, c) = -1.0 / (n * q);
    }
    return out;
}

CaceResult cace_loss(const DescriptorField& probabilities, const RegionPartition& target) {
    if (target.region_count() > 2) throw LabelError("cace_loss: binary target required");
    return cace_loss(probabilities, mask_from_partition(target));
}

CasBounds cas_bounds(std::size_t region_count, const CasConfig& cfg) {
    if (region_count == 0) throw ParameterError("cas_bounds: at least one region required");
    const double n = static_cast<double>(region_count);
    // Squared distance between two simplex points is at most 2.
    return CasBounds{-2.0 * (1.0 - cfg.alpha) * n * (n - 1.0), 2.0 * cfg.alpha * n};
}

} // namespace casseg
