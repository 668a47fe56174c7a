#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "casseg/tensor.hpp"

namespace casseg {

// Per-pixel descriptor s(x): an H x W x M tensor, channel index fastest.
class DescriptorField {
public:
    DescriptorField(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
    explicit DescriptorField(Tensor values);  // rank-3 [H, W, M]

    std::size_t height() const noexcept { return values_.shape()[0]; }
    std::size_t width() const noexcept { return values_.shape()[1]; }
    std::size_t channels() const noexcept { return values_.shape()[2]; }
    std::size_t pixels() const noexcept { return height() * width(); }

    const Tensor& tensor() const noexcept { return values_; }
    Tensor& tensor() noexcept { return values_; }

    std::span<const double> pixel(std::size_t p) const {
        return values_.data().subspan(p * channels(), channels());
    }
    std::span<double> pixel(std::size_t p) { return values_.data().subspan(p * channels(), channels()); }

    double at(std::size_t p, std::size_t m) const { return values_[p * channels() + m]; }
    double& at(std::size_t p, std::size_t m) { return values_[p * channels() + m]; }

    // Every pixel lies on the probability simplex within tol.
    bool on_simplex(double tol = 1e-9) const;

private:
    Tensor values_;
};

// H x W labelling in which every label of [0, region_count) occurs.
class RegionPartition {
public:
    RegionPartition(std::size_t height, std::size_t width, std::vector<int> labels);

    // Accepts arbitrary integer labels and renumbers them 0.. in order of
    // first occurrence (row-major).
    static RegionPartition compacted(std::size_t height, std::size_t width, std::span<const int> labels);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixels() const noexcept { return labels_.size(); }
    std::size_t region_count() const noexcept { return region_count_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    int label(std::size_t p) const { return labels_[p]; }
    std::vector<std::size_t> region_sizes() const;

    // Region indices ordered by the row-major position of their first pixel.
    // Independent of how the regions happen to be numbered.
    std::vector<int> canonical_order() const;

    friend bool operator==(const RegionPartition&, const RegionPartition&) = default;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<int> labels_;
    std::size_t region_count_;
};

// Ground-truth mask G in {0,1}.
struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> v);

    std::size_t pixels() const noexcept { return values.size(); }
    BinaryMask inverted() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Continuous map S in [0,1].
struct SaliencyMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    SaliencyMap() = default;
    SaliencyMap(std::size_t h, std::size_t w, std::vector<double> v);

    std::size_t pixels() const noexcept { return values.size(); }
};

// Thresholded map B and the threshold that produced it.
struct BinaryMap {
    BinaryMask map;
    double threshold_used = 0.0;
};

BinaryMask mask_from_partition(const RegionPartition& partition);
RegionPartition partition_from_mask(const BinaryMask& mask);
SaliencyMap channel_map(const DescriptorField& field, std::size_t channel);

} // namespace casseg
