#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcead/nets.hpp"

namespace vcead {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointTensorInfo {
  std::string name;
  Shape shape;
};

struct CheckpointInfo {
  nets::LearnerKind kind = nets::LearnerKind::classifier;
  std::string preset;
  std::size_t in_channels = 3;
  std::size_t image_size = 32;
  std::string precision;  // "f32" or "f64"
  bool trained = false;
  std::vector<CheckpointTensorInfo> tensors;
};

/// Layout: "VCEADCKP", u32 version, u64 header size, JSON header, then every
/// tensor as little-endian values in header order.
template <typename T>
void save_checkpoint(const nets::Learner<T>& learner, const std::filesystem::path& path);

/// Reads only the header.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Rebuilds the learner from its header and copies the stored weights in.
/// Values are converted when T differs from the stored precision.
template <typename T>
nets::Learner<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace vcead
