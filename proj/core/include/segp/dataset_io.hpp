#ifndef SEGP_DATASET_IO_HPP
#define SEGP_DATASET_IO_HPP

#include <filesystem>

#include "segp/simulator.hpp"

namespace segp {

inline constexpr int kDatasetFormatVersion = 1;

/// Directory layout:
///   manifest.json  config, seed, count, RNG and Gaussian method, format version
///   latents.bin    float64 LE, trajectory-major, dimension-major within a trajectory
///   inputs.bin     float64 LE fine-grid inputs, trajectory-major, channel-major
///   frames.bin     uint8 in {0,1}, trajectory-major, frame-major, row-major
/// Creates `dir` if needed.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace segp

#endif  // SEGP_DATASET_IO_HPP
