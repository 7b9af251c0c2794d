#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcead/ensemble.hpp"
#include "vcead/train.hpp"

namespace vcead::cli {

/// Exit codes shared by every subcommand.
enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kUnwritable = 2,
  kPrecondition = 3,
  kMissingCheckpoint = 4,
  kSingleClassTest = 5,
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSource {
  std::filesystem::path manifest;
  std::string class_map = "synthetic";
};

struct SplitSettings {
  double train_ratio = 0.8;   // train share of the non-test patients
  double test_fraction = 0.2; // ignored when a separate test source is configured
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> file;  // a stored split overrides the ratios
};

/// Which samples of the train part reach a learner.
enum class SampleFilter { all, labeled, normal_or_unlabeled };

struct LearnerSettings {
  train::TrainConfig train;
  std::optional<SampleFilter> filter;  // unset = the learner's default
  std::optional<std::uint64_t> seed;   // unset = the run seed
};

struct EnsembleSettings {
  std::size_t draws = 50;
  double tune_fraction = 0.5;
  ensemble::ForestGrid rf;
  ensemble::SvmGrid svm;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string preset = "desk_tiny";
  std::size_t image_size = 0;  // 0 = the preset's default
  std::size_t in_channels = 3;
  std::optional<DatasetSource> data;
  std::optional<DatasetSource> test;
  SplitSettings split;
  std::map<std::string, LearnerSettings> learners;  // keys clf, ae, semi
  EnsembleSettings ensemble;
  std::filesystem::path out = "runs";
  std::size_t threads = 1;

  /// Fills every default that depends on other keys (seeds, image size, filters).
  void resolve();
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

std::string to_string(SampleFilter f);
SampleFilter filter_from_string(const std::string& s);

/// Seed for a learner's weights, distinct per learner kind.
std::uint64_t init_seed(std::uint64_t run_seed, const std::string& learner);

}  // namespace vcead::cli
