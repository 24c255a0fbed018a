#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nodepfn/training.hpp"

namespace nodepfn {

// Versioned binary container: model config, named tensor table, optional
// optimizer state, training position and a CRC32 integrity checksum.
// Loading then saving reproduces identical bytes.
struct Checkpoint {
  ModelParams params;
  std::optional<OptimizerState> optimizer;
  int next_epoch = 0;
  int next_step = 0;
  uint64_t train_seed = 0;
  std::string provenance;  // JSON text, may be empty
};

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nodepfn
