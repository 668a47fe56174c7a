#pragma once

#include <cstddef>
#include <vector>

#include "casseg/fields.hpp"
#include "casseg/tensor.hpp"

namespace casseg {

// Channel-wise region means: row i is the mean descriptor over region i.
struct RegionMeans {
    Tensor rows;  // [N, M]

    std::size_t region_count() const { return rows.shape()[0]; }
    std::size_t channels() const { return rows.shape()[1]; }
};

struct CasConfig {
    double alpha = 0.5;

    CasConfig() = default;
    explicit CasConfig(double a);
};

// uniformer_per_region holds the unweighted variance term of each region and
// discriminator_total the unweighted sum over ordered region pairs, so
// total == alpha * sum(uniformer_per_region) - (1 - alpha) * discriminator_total.
struct LossBreakdown {
    double total = 0.0;
    std::vector<double> uniformer_per_region;
    double discriminator_total = 0.0;
};

struct LossWithGradient {
    double loss = 0.0;
    DescriptorField gradient;
};

enum class Orientation { original, flipped };

struct CaceResult {
    double loss = 0.0;
    DescriptorField gradient;
    Orientation chosen_orientation = Orientation::original;
};

struct CasBounds {
    double lower = 0.0;
    double upper = 0.0;

    bool contains(double v) const { return v >= lower && v <= upper; }
};

inline constexpr double kProbabilityClamp = 1e-12;

RegionMeans region_means(const DescriptorField& field, const RegionPartition& partition);

// Class-agnostic segmentation loss: per-region descriptor variance weighted
// by alpha, minus (1 - alpha) times the squared distance between every
// ordered pair of region means. Regions are visited in canonical order so the
// result does not depend on how the regions are numbered.
LossBreakdown cas_forward(const DescriptorField& field, const RegionPartition& partition, const CasConfig& cfg);

// d(total)/d s(y). For y in region k:
//   (2 alpha / |r_k|) (s(y) - mean_k) - (4 (1 - alpha) / |r_k|) sum_{j != k} (mean_k - mean_j)
DescriptorField cas_backward(const DescriptorField& field, const RegionPartition& partition, const CasConfig& cfg);

// Mean over pixels of -log p[target], p clamped to [1e-12, 1 - 1e-12].
LossWithGradient ce_loss(const DescriptorField& probabilities, const RegionPartition& target);

// Minimum of ce_loss over the two whole-mask label assignments {G, 1 - G}.
// Ties keep the original orientation.
CaceResult cace_loss(const DescriptorField& probabilities, const BinaryMask& target);
CaceResult cace_loss(const DescriptorField& probabilities, const RegionPartition& target);

// Interval containing cas_forward for any simplex-valued field with N regions.
CasBounds cas_bounds(std::size_t region_count, const CasConfig& cfg);

} // namespace casseg
