#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "casseg/fields.hpp"
#include "casseg/tensor.hpp"

namespace casseg {

struct KMeansResult {
    RegionPartition partition;         // labels compacted to [0, clusters)
    Tensor centers;                    // [clusters, M], row i is the centre of label i
    std::vector<double> inertia;       // within-cluster sum of squares after each assignment
    std::size_t iterations = 0;
};

// Lloyd's algorithm on the per-pixel descriptors with k-means++ seeding.
// Empty clusters are re-seeded from the point farthest from its centre.
// Fewer than k clusters come back when the descriptors have fewer than k
// distinct values.
KMeansResult kmeans_fit(const DescriptorField& field, std::size_t k, std::uint64_t seed, std::size_t max_iters = 100);

RegionPartition kmeans_descriptors(const DescriptorField& field, std::size_t k = 20, std::uint64_t seed = 0,
                                   std::size_t max_iters = 100);

// 4-connected components, numbered by first pixel in row-major order.
RegionPartition connected_components(const RegionPartition& partition);

// Repeatedly merges the smallest connected region below min_fraction of the
// image into the 4-adjacent region with the nearest mean descriptor, until
// no region is undersized or only one region remains. Labels are compacted.
RegionPartition absorb_small_regions(const RegionPartition& partition, const DescriptorField& field,
                                     double min_fraction = 0.02);

} // namespace casseg
