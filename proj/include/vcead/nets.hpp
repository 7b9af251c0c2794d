#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vcead/adam.hpp"
#include "vcead/tensor.hpp"

namespace vcead::nets {

enum class Activation { none, relu, hardswish };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct BlockSpec {
  double expansion_ratio = 1.0;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  int stride = 1;
  bool use_squeeze_excite = false;
  Activation activation = Activation::relu;
};

struct StemSpec {
  std::size_t out_channels = 16;
  std::size_t kernel = 3;
  int stride = 2;
  Activation activation = Activation::hardswish;
};

/// Stage plan of a MobileNet-style encoder. When latent_channels differs from
/// the last block's width a 1x1 conv head widens the features.
struct EncoderPreset {
  std::string name;
  StemSpec stem;
  std::vector<BlockSpec> blocks;
  std::size_t latent_channels = 1;
  std::size_t default_image_size = 32;
};

const EncoderPreset& preset(std::string_view name);
std::vector<std::string> preset_names();
/// Throws std::invalid_argument on a malformed preset.
void validate(const EncoderPreset& p);
/// Product of all strides; inputs must be divisible by it.
std::size_t total_stride(const EncoderPreset& p);
/// Expanded width of a block given its input width.
std::size_t expanded_channels(std::size_t in_channels, double ratio);
/// Squeeze width of the SE bottleneck for `channels` expanded channels.
std::size_t squeeze_channels(std::size_t channels);

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) const = 0;
  /// Appends learnable tensors as "prefix.name".
  virtual void collect(ParameterList<T>& out, const std::string& prefix) const = 0;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

/// Ordered, named children applied in sequence.
template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential& add(std::string name, LayerPtr<T> layer);
  Tensor<T> forward(const Tensor<T>& x) const override;
  void collect(ParameterList<T>& out, const std::string& prefix) const override;
  std::size_t size() const { return children_.size(); }
  const Layer<T>& child(std::size_t i) const { return *children_[i].second; }
  const std::string& child_name(std::size_t i) const { return children_[i].first; }

 private:
  std::vector<std::pair<std::string, LayerPtr<T>>> children_;
};

/// Mobile inverted bottleneck: [expand 1x1] -> depthwise -> [SE] -> project 1x1,
/// with an identity shortcut when stride is 1 and widths match.
template <typename T>
class InvertedResidual final : public Layer<T> {
 public:
  InvertedResidual(std::size_t in_channels, const BlockSpec& spec, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x) const override;
  void collect(ParameterList<T>& out, const std::string& prefix) const override;
  bool has_residual() const { return residual_; }

 private:
  Sequential<T> body_;
  bool residual_ = false;
};

template <typename T>
class Encoder {
 public:
  Encoder(const EncoderPreset& preset, std::size_t in_channels, std::mt19937_64& rng);
  /// Throws ShapeError if the channels differ or the spatial extent is not a
  /// multiple of total_stride().
  Tensor<T> forward(const Tensor<T>& images) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;
  std::size_t in_channels() const { return in_channels_; }
  std::size_t latent_channels() const { return latent_channels_; }
  std::size_t total_stride() const { return total_stride_; }
  const Sequential<T>& network() const { return net_; }

 private:
  Sequential<T> net_;
  std::size_t in_channels_, latent_channels_, total_stride_;
};

/// Mirrors the encoder's stride-2 stages with nearest 2x upsampling and a
/// depthwise-separable conv per stage, then 1x1 conv + sigmoid.
template <typename T>
class Decoder {
 public:
  Decoder(const EncoderPreset& preset, std::size_t out_channels, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& latent) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;
  const Sequential<T>& network() const { return net_; }

 private:
  Sequential<T> net_;
  std::size_t latent_channels_;
};

/// Pooled latent -> dense -> 2 logits.
template <typename T>
Sequential<T> build_classifier_head(std::size_t latent_channels, std::mt19937_64& rng);
/// Pooled latent -> dense(64) -> relu -> dense -> 2 logits.
template <typename T>
Sequential<T> build_semi_head(std::size_t latent_channels, std::mt19937_64& rng);

inline constexpr std::size_t kSemiHiddenUnits = 64;

enum class LearnerKind { classifier, autoencoder, semi_supervised };
std::string_view to_string(LearnerKind k);
LearnerKind learner_from_string(std::string_view s);

/// One base learner: an encoder plus whichever of decoder/head its kind uses.
template <typename T>
struct Learner {
  LearnerKind kind;
  std::string preset_name;
  std::size_t in_channels;
  std::size_t image_size;
  Encoder<T> encoder;
  std::optional<Decoder<T>> decoder;
  std::optional<Sequential<T>> head;
  bool trained = false;

  ParameterList<T> parameters() const;
};

template <typename T>
Learner<T> make_learner(LearnerKind kind, const std::string& preset_name,
                        std::size_t in_channels, std::size_t image_size,
                        std::uint64_t seed);

/// The three base learners, all built from one preset.
template <typename T>
struct ModelBundle {
  std::string preset_name;
  Learner<T> classifier;
  Learner<T> autoencoder;
  Learner<T> semi;
};

/// Throws std::invalid_argument if kinds or presets do not line up.
template <typename T>
ModelBundle<T> make_bundle(Learner<T> classifier, Learner<T> autoencoder, Learner<T> semi);

/// N x 2 logits (normal, anomaly).
template <typename T>
Tensor<T> classifier_forward(const Learner<T>& clf, const Tensor<T>& images);
/// Reconstruction with the input's shape, values in [0, 1].
template <typename T>
Tensor<T> ae_forward(const Learner<T>& ae, const Tensor<T>& images);

template <typename T>
struct SemiOutputs {
  Tensor<T> reconstruction;
  Tensor<T> logits;
};
template <typename T>
SemiOutputs<T> semi_forward(const Learner<T>& semi, const Tensor<T>& images);

template <typename T>
Tensor<T> classifier_forward(const ModelBundle<T>& b, const Tensor<T>& images) {
  return classifier_forward(b.classifier, images);
}
template <typename T>
Tensor<T> ae_forward(const ModelBundle<T>& b, const Tensor<T>& images) {
  return ae_forward(b.autoencoder, images);
}
template <typename T>
Tensor<T> semi_forward(const ModelBundle<T>& b, const Tensor<T>& images) {
  return semi_forward(b.semi, images).logits;
}

template <typename T>
std::size_t count_parameters(const ParameterList<T>& params);
template <typename T>
std::size_t count_parameters(const Layer<T>& layer);

/// Learnable scalars per leaf layer, keyed by the layer path (the parameter
/// name without its final component), in construction order.
template <typename T>
std::vector<std::pair<std::string, std::size_t>> layer_parameter_counts(
    const ParameterList<T>& params);

}  // namespace vcead::nets
