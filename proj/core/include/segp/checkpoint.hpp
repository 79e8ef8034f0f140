#ifndef SEGP_CHECKPOINT_HPP
#define SEGP_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "segp/train.hpp"

namespace segp {

inline constexpr char kCheckpointMagic[9] = "SEGPCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little endian): magic, u32 version, config JSON, i32 epoch,
/// i64 step, RNG state text, model shape, temperature, then named float64
/// tensors stored row-major as "param/<name>", "adam_m/<name>",
/// "adam_v/<name>" and "context/scales".
struct Checkpoint {
  std::string config_json;
  TrainState state;
  Vector scales;
};

void write_checkpoint(const std::filesystem::path& path, const TrainState& state,
                      const Vector& scales, const std::string& config_json);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace segp

#endif  // SEGP_CHECKPOINT_HPP
