#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "casseg/fields.hpp"

namespace casseg {

inline constexpr double kDefaultBetaSq = 0.3;

struct FBeta {
    double f = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// counts[predicted][actual]
using Confusion = std::array<std::array<std::size_t, 2>, 2>;

struct MetricsReport {
    double f_beta = 0.0;
    double mae = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double rand_index = 0.0;
    double variation_of_information = 0.0;
    double covering = 0.0;
    Confusion confusion{};
    std::size_t chosen_channel = 0;
};

// B(x) = 1 iff S(x) > 2 * mean(S). No clamp: a threshold of 1 or more yields
// an empty map.
BinaryMap adaptive_threshold(const SaliencyMap& s);

// Empty-set conventions: prediction and ground truth both empty gives
// F = P = R = 1; an empty prediction has P = 0; P = R = 0 gives F = 0.
FBeta f_beta(const BinaryMask& b, const BinaryMask& g, double beta_sq = kDefaultBetaSq);

double mae(const SaliencyMap& s, const BinaryMask& g);

// Index of the channel whose pixels, concatenated over the validation set,
// have the largest signed Pearson correlation with the concatenated masks.
// A zero-variance channel scores 0; ties go to the lower index.
std::size_t select_channel(const std::vector<DescriptorField>& fields, const std::vector<BinaryMask>& masks);
std::vector<double> channel_correlations(const std::vector<DescriptorField>& fields, const std::vector<BinaryMask>& masks);

Confusion confusion(const std::vector<int>& predicted, const std::vector<int>& actual);

// Fraction of unordered pixel pairs on which both partitions agree.
double rand_index(const RegionPartition& p, const RegionPartition& q);

// H(P) + H(Q) - 2 I(P; Q), natural logarithms.
double variation_of_information(const RegionPartition& p, const RegionPartition& q);

// Sum over ground-truth regions of |R| / n times the best IoU with a predicted region.
double covering(const RegionPartition& pred, const RegionPartition& gt);

} // namespace casseg
