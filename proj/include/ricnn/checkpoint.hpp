#pragma once
#include <string>

#include "ricnn/net.hpp"

namespace ricnn {

// Checkpoint = <stem>.json manifest + <stem>.bin raw little-endian params in
// params() order. The manifest pins arch/calibrator/precision and carries a
// sha256 of the .bin so sweeps can prove which weights they scored.
struct CheckpointMeta {
  std::string arch;
  Calibrator cal = Calibrator::None;
  std::string precision;  // f32 | f64
  int64_t in_channels = 1;
  int64_t in_h = 28, in_w = 28;
  uint64_t seed = 0;
  std::string bin_sha256;  // filled on save/load
};

std::string sha256_bytes(const void* data, size_t n);
std::string sha256_file(const std::string& path);

template <class T>
void save_checkpoint(const std::string& stem, Network<T>& net,
                     CheckpointMeta meta);

CheckpointMeta read_checkpoint_meta(const std::string& stem);

// Rebuilds the network from the manifest and loads the weights; T must match
// the stored precision.
template <class T>
Network<T> load_checkpoint(const std::string& stem,
                           CheckpointMeta* meta_out = nullptr);

}  // namespace ricnn
