#include "casseg/fields.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "casseg/errors.hpp"

namespace casseg {

DescriptorField::DescriptorField(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : values_({height, width, channels}, fill) {}

DescriptorField::DescriptorField(Tensor values) : values_(std::move(values)) {
    if (values_.rank() != 3) throw ShapeError("DescriptorField: rank-3 [H, W, M] tensor required");
}

bool DescriptorField::on_simplex(double tol) const {
    for (std::size_t p = 0; p < pixels(); ++p) {
        double sum = 0.0;
        for (double v : pixel(p)) {
            if (v < -tol || v > 1.0 + tol) return false;
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol) return false;
    }
    return true;
}

RegionPartition::RegionPartition(std::size_t height, std::size_t width, std::vector<int> labels)
    : height_(height), width_(width), labels_(std::move(labels)), region_count_(0) {
    if (labels_.size() != height_ * width_) {
        throw ShapeError("RegionPartition: " + std::to_string(labels_.size()) + " labels for " +
                         std::to_string(height_) + "x" + std::to_string(width_));
    }
    if (labels_.empty()) throw ShapeError("RegionPartition: empty grid");
    int max_label = -1;
    for (int l : labels_) {
        if (l < 0) throw LabelError("RegionPartition: negative label");
        max_label = std::max(max_label, l);
    }
    region_count_ = static_cast<std::size_t>(max_label) + 1;
    std::vector<bool> seen(region_count_, false);
    for (int l : labels_) seen[static_cast<std::size_t>(l)] = true;
    for (std::size_t i = 0; i < region_count_; ++i) {
        if (!seen[i]) throw LabelError("RegionPartition: label " + std::to_string(i) + " has no pixels");
    }
}

RegionPartition RegionPartition::compacted(std::size_t height, std::size_t width, std::span<const int> labels) {
    std::unordered_map<int, int> remap;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) {
        auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
        out.push_back(it->second);
    }
    return RegionPartition(height, width, std::move(out));
}

std::vector<std::size_t> RegionPartition::region_sizes() const {
    std::vector<std::size_t> sizes(region_count_, 0);
    for (int l : labels_) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
}

std::vector<int> RegionPartition::canonical_order() const {
    std::vector<int> order;
    order.reserve(region_count_);
    std::vector<bool> seen(region_count_, false);
    for (int l : labels_) {
        if (!seen[static_cast<std::size_t>(l)]) {
            seen[static_cast<std::size_t>(l)] = true;
            order.push_back(l);
            if (order.size() == region_count_) break;
        }
    }
    return order;
}

BinaryMask::BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> v)
    : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) throw ShapeError("BinaryMask: size does not match height x width");
    for (auto x : values) {
        if (x > 1) throw LabelError("BinaryMask: value outside {0,1}");
    }
}

BinaryMask BinaryMask::inverted() const {
    BinaryMask out = *this;
    for (auto& x : out.values) x = static_cast<std::uint8_t>(1 - x);
    return out;
}

SaliencyMap::SaliencyMap(std::size_t h, std::size_t w, std::vector<double> v) : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) throw ShapeError("SaliencyMap: size does not match height x width");
    for (double x : values) {
        if (!(x >= 0.0 && x <= 1.0)) throw NumericError("SaliencyMap: value outside [0,1]");
    }
}

BinaryMask mask_from_partition(const RegionPartition& partition) {
    if (partition.region_count() > 2) throw LabelError("mask_from_partition: more than two regions");
    std::vector<std::uint8_t> v(partition.pixels());
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = static_cast<std::uint8_t>(partition.label(p));
    return BinaryMask(partition.height(), partition.width(), std::move(v));
}

RegionPartition partition_from_mask(const BinaryMask& mask) {
    std::vector<int> labels(mask.values.begin(), mask.values.end());
    return RegionPartition::compacted(mask.height, mask.width, labels);
}

SaliencyMap channel_map(const DescriptorField& field, std::size_t channel) {
    if (channel >= field.channels()) throw ShapeError("channel_map: channel out of range");
    std::vector<double> v(field.pixels());
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = std::clamp(field.at(p, channel), 0.0, 1.0);
    return SaliencyMap(field.height(), field.width(), std::move(v));
}

} // namespace casseg
