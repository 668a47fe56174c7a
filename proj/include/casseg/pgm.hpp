#pragma once

#include <filesystem>

#include "casseg/fields.hpp"
#include "casseg/tensor.hpp"

namespace casseg {

// Binary portable graymap ("P5"). Samples are 8-bit for maxval < 256 and
// big-endian 16-bit otherwise.

// Returns an [H, W] tensor of gray / maxval.
Tensor pgm_read(const std::filesystem::path& path);

// Values in [0, 1] are mapped to round(v * maxval).
void pgm_write(const std::filesystem::path& path, const Tensor& image, int maxval = 255);
void pgm_write(const std::filesystem::path& path, const SaliencyMap& map, int maxval = 255);

// Partitions and masks are stored with gray level == label.
RegionPartition pgm_read_labels(const std::filesystem::path& path);
void pgm_write_labels(const std::filesystem::path& path, const RegionPartition& partition);
void pgm_write_mask(const std::filesystem::path& path, const BinaryMask& mask);

} // namespace casseg
