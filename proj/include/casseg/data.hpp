#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "casseg/fields.hpp"
#include "casseg/tensor.hpp"

namespace casseg {

struct Sample {
    Tensor input;                    // [H, W, C] image, or [1, n, 2] point set
    RegionPartition partition;
    std::optional<BinaryMask> mask;  // saliency ground truth G
};

struct Manifest {
    std::string generator;
    std::uint64_t seed = 0;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    std::vector<std::size_t> flipped_indices;

    nlohmann::ordered_json to_json() const;
    static Manifest from_json(const nlohmann::ordered_json& j);
};

struct Dataset {
    std::vector<Sample> samples;
    Manifest manifest;

    std::size_t size() const noexcept { return samples.size(); }
};

struct ToyImbalanceParams {
    std::size_t n1 = 10000;
    std::size_t n2 = 10;
    double c1[2] = {1.0, 0.0};
    double c2[2] = {0.0, 1.0};
    double sigma = 0.2;  // per-component standard deviation
};

struct ToyImbalance {
    Dataset train;
    Dataset test;
};

// Two independent draws of the class-imbalanced 2-D point problem. Each
// dataset holds one sample: a 1 x (n1 + n2) "image" of points whose partition
// is the class label (0 = class one, 1 = class two).
ToyImbalance gen_toy_imbalance(std::uint64_t seed, const ToyImbalanceParams& params = {});

struct Texture {
    double mean = 0.5;
    double stddev = 0.05;
};

struct SegmentationParams {
    std::size_t count = 20;
    std::size_t height = 64;
    std::size_t width = 64;
    std::vector<Texture> textures;  // one per region; size() is the region count
    double min_side = 0.25;         // rectangle sides as fractions of the image
    double max_side = 0.55;
};

// Gray-level images whose regions are textured with Gaussian noise around
// per-region means. Region 0 is the background; regions 1..N-1 are seeded
// random rectangles drawn in order. Two-region samples carry the mask of
// region 1.
Dataset gen_synthetic_segmentation(std::uint64_t seed, const SegmentationParams& params);

// With probability p per sample: invert the binary mask (and swap the
// partition labels to match) or apply a uniformly random non-identity
// permutation to the region labels. Region geometry never changes.
Dataset corrupt_low_fidelity(const Dataset& ds, double p, std::uint64_t seed);

// Bilinear resize followed by standardization to zero mean and unit variance
// (standard deviation floored at 1e-8).
Tensor preprocess(const Tensor& image, std::size_t height, std::size_t width);
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);
Tensor standardize(const Tensor& image);
RegionPartition resize_nearest(const RegionPartition& partition, std::size_t height, std::size_t width);
BinaryMask resize_nearest(const BinaryMask& mask, std::size_t height, std::size_t width);

// Seeded shuffle then contiguous split; the test share is round(n * test / (train + test)).
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_ratio, double test_ratio, std::uint64_t seed);

} // namespace casseg
