#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace vcead::cli {

class UnwritableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class MissingCheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class SingleClassError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointPaths {
  std::filesystem::path clf, ae, semi;
};

struct SynthArgs {
  std::size_t normal = 500, anomaly = 500, size = 32;
  std::uint64_t seed = 0;
  std::string patient_prefix = "p";
  std::size_t group_size = 25;
  std::filesystem::path out;
};

/// Each command returns the directory it wrote.
std::filesystem::path cmd_synth(const SynthArgs& a, std::ostream& out);
std::filesystem::path cmd_train(const std::string& learner, RunConfig cfg, std::ostream& out);
std::filesystem::path cmd_fit_ensemble(const std::string& kind, const CheckpointPaths& ckpt,
                                       RunConfig cfg, std::ostream& out);
std::filesystem::path cmd_eval(const std::vector<std::filesystem::path>& models,
                               const CheckpointPaths& ckpt, RunConfig cfg, std::ostream& out);
std::filesystem::path cmd_pipeline(RunConfig cfg, std::ostream& out);
/// Replays the command stored in `run_dir`/resolved_config.json. The new run
/// directory goes under `out_root`, or next to `run_dir` when unset.
std::filesystem::path cmd_rerun(const std::filesystem::path& run_dir,
                                const std::optional<std::filesystem::path>& out_root,
                                std::ostream& out);

}  // namespace vcead::cli
