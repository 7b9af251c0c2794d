#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcead/adam.hpp"
#include "vcead/data.hpp"
#include "vcead/nets.hpp"

namespace vcead::train {

/// A training precondition does not hold (wrong label mix, empty set, bad config).
class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SamplerKind { weighted, uniform };

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  AdamSettings adam;
  std::string precision = "f32";
  std::uint64_t seed = 0;
  data::AugmentPolicy augment = data::AugmentPolicy::standard();
  /// Unset means weighted for the classifier and uniform otherwise.
  std::optional<SamplerKind> sampler;
  /// Weight of the cross-entropy term in the semi-supervised objective.
  double lambda = 1.0;
  std::size_t eval_batch = 64;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  std::optional<double> val_loss;
  std::optional<double> val_auc;
};

struct TrainReport {
  std::string learner;
  std::size_t train_samples = 0;
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0;
  std::string checkpoint;

  std::vector<double> losses() const;
  nlohmann::json to_json() const;
};

/// Unlabeled samples are skipped; both labeled classes are required.
template <typename T>
TrainReport train_classifier(nets::Learner<T>& clf, const std::vector<data::Sample>& train,
                             const std::vector<data::Sample>& val, const TrainConfig& cfg);

/// Input must contain no anomaly-labeled samples.
template <typename T>
TrainReport train_autoencoder(nets::Learner<T>& ae, const std::vector<data::Sample>& train,
                              const std::vector<data::Sample>& val, const TrainConfig& cfg);

/// Minimizes MSE over all samples plus lambda * CE over the labeled ones.
template <typename T>
TrainReport train_semi(nets::Learner<T>& semi, const std::vector<data::Sample>& train,
                       const std::vector<data::Sample>& val, const TrainConfig& cfg);

/// Samples usable by the autoencoder: normal and unlabeled.
std::vector<data::Sample> autoencoder_inputs(const std::vector<data::Sample>& samples);

// ---- batched inference (no graph recorded) ----

/// (normal, anomaly) logits per sample.
template <typename T>
std::vector<std::array<double, 2>> classifier_logits(const nets::Learner<T>& clf,
                                                     const std::vector<data::Sample>& samples,
                                                     std::size_t batch = 64);

/// Per-sample mean squared reconstruction error (autoencoder or semi learner).
template <typename T>
std::vector<double> reconstruction_errors(const nets::Learner<T>& learner,
                                          const std::vector<data::Sample>& samples,
                                          std::size_t batch = 64);

template <typename T>
std::vector<std::array<double, 2>> semi_logits(const nets::Learner<T>& semi,
                                               const std::vector<data::Sample>& samples,
                                               std::size_t batch = 64);

/// Softmax anomaly probability of a logit pair.
double anomaly_probability(const std::array<double, 2>& logits);

}  // namespace vcead::train
