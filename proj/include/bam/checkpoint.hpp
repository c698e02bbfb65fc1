#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bam/model.hpp"

namespace bam {

// Binary layout (little-endian):
//   "BAMC" | u32 version | u32 n | n bytes of config JSON
//   u64 epoch | u32 n | n bytes of RNG state text | u64 optimizer step
//   u32 count, then per tensor: u32 n | name | u32 ndim | u64 dims[ndim] | f64 values
// Tensor names are parameter and buffer names; optimizer moments appear as
// "adam.m:<param>" and "adam.v:<param>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingState {
  std::uint64_t epoch = 0;
  std::string rng_state;
  std::uint64_t optimizer_step = 0;
  std::vector<std::vector<double>> first_moments;   // parameter order
  std::vector<std::vector<double>> second_moments;  // parameter order
};

void save_checkpoint(const std::filesystem::path& path, const BamModel& model,
                     const TrainingState& state = {});

struct LoadedCheckpoint {
  BamConfig config;
  TrainingState state;
  std::vector<NamedTensor> tensors;
};

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

// Copies every parameter and buffer of `model` from the checkpoint; names and
// shapes must match. Names for which `skip` returns true keep their values.
void load_weights(BamModel& model, const LoadedCheckpoint& ckpt,
                  const std::function<bool(const std::string&)>& skip = {});

// Builds a model from the embedded config and loads its weights.
BamModel load_model(const std::filesystem::path& path);

}  // namespace bam
